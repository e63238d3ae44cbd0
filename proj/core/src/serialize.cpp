#include "encprop/serialize.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace encprop {

using nlohmann::json;

std::string schedule_to_json(const NoiseSchedule& s) {
  json j;
  j["T"] = s.steps();
  j["beta"] = s.betas();
  j["alpha_bar"] = s.alpha_bars();
  return j.dump(2);
}

NoiseSchedule schedule_from_json(std::string_view text) {
  const json j = json::parse(text);
  NoiseSchedule s(j.at("beta").get<std::vector<double>>());
  if (j.contains("T") && j.at("T").get<int>() != s.steps()) {
    throw std::invalid_argument("schedule json: T disagrees with the length of beta");
  }
  if (j.contains("alpha_bar")) {
    const auto stored = j.at("alpha_bar").get<std::vector<double>>();
    if (stored.size() != s.alpha_bars().size()) throw std::invalid_argument("schedule json: alpha_bar length mismatch");
    for (std::size_t i = 0; i < stored.size(); ++i) {
      if (std::abs(stored[i] - s.alpha_bars()[i]) > 1e-12 * std::abs(s.alpha_bars()[i])) {
        throw std::invalid_argument("schedule json: alpha_bar is not the cumulative product of (1 - beta)");
      }
    }
  }
  return s;
}

std::string plan_to_json(const PropagationPlan& plan) {
  json j;
  j["T"] = plan.steps();
  j["key_steps"] = plan.key_steps();
  return j.dump();
}

PropagationPlan plan_from_json(std::string_view text) {
  const json j = json::parse(text);
  return PropagationPlan(j.at("T").get<int>(), j.at("key_steps").get<std::vector<Timestep>>());
}

}  // namespace encprop

#pragma once

#include <string>
#include <string_view>

#include "encprop/propagation.hpp"
#include "encprop/schedule.hpp"

namespace encprop {

// {"T": 50, "beta": [...], "alpha_bar": [...]}
std::string schedule_to_json(const NoiseSchedule& s);
// Rebuilds from "beta"; a stored alpha_bar must agree with it to 1e-12.
NoiseSchedule schedule_from_json(std::string_view text);

// {"T": 50, "key_steps": [50, 49, ...]}
std::string plan_to_json(const PropagationPlan& plan);
PropagationPlan plan_from_json(std::string_view text);

}  // namespace encprop

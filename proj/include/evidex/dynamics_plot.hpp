#pragma once

#include <span>
#include <string>
#include <vector>

#include "evidex/trainer.hpp"

namespace evidex {

/// Trailing moving average with the given window (window <= 1 copies).
std::vector<double> moving_average(std::span<const double> values, int window);

/// Two-panel SVG: answer rewards of o_r / o_e / o_f on the left, mean
/// rationale / evidence / answer lengths on the right, both over steps.
std::string render_dynamics_svg(std::span<const DynamicsRecord> records, int smoothing_window = 10);

}  // namespace evidex

#pragma once

#include <string>

namespace gaitscale {

/// Shortest text that parses back to the identical double.
std::string format_double(double v);

/// Fixed-point text with `digits` decimals, for human-facing tables.
std::string format_fixed(double v, int digits);

}  // namespace gaitscale

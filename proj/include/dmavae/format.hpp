#pragma once

#include <string>

namespace dmavae::fmt {

// Shortest decimal text that parses back to the same double.
std::string real(double v);
double parse_real(const std::string& text);

}  // namespace dmavae::fmt

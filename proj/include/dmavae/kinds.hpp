#pragma once

#include <string>
#include <string_view>

namespace dmavae {

// Measurement type of the mediator or the outcome.
enum class VarKind { Continuous, Binary, Categorical };

std::string_view to_string(VarKind kind) noexcept;
VarKind parse_var_kind(std::string_view text);

}  // namespace dmavae

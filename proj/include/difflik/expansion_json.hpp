// JSON export of expansion coefficients.
#pragma once

#include <json.hpp>

#include "difflik/irreducible.hpp"
#include "difflik/reducible.hpp"

namespace difflik {

// {"K", "path", "mode", "states", "params", "center_names", "coefficients": [{"k", "order", "terms": [{"index", "value"|"expr"}]}]}
// Symbolic coefficients are printed in the center variables, named <state>_0.
// Identically zero terms are omitted.
nlohmann::json to_json(const ReducibleExpansion& e, const SymbolTable& symbols);
// Same layout plus "x0" and "theta".
nlohmann::json to_json(const IrreducibleExpansion& e, const SymbolTable& symbols);

}  // namespace difflik

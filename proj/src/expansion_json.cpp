#include "difflik/expansion_json.hpp"

namespace difflik {

namespace {

using nlohmann::json;

SymbolTable centered(const SymbolTable& s) {
  SymbolTable c = s;
  for (auto& name : c.states) name += "_0";
  return c;
}

json header(int K, const std::string& path, const std::string& mode, const SymbolTable& symbols) {
  json j;
  j["K"] = K;
  j["path"] = path;
  j["mode"] = mode;
  j["states"] = symbols.states;
  j["params"] = symbols.params;
  j["center_names"] = centered(symbols).states;
  return j;
}

template <class Poly, class Term>
json table(int k, const Poly& p, Term term) {
  json t;
  t["k"] = k;
  t["order"] = p.degree();
  t["terms"] = json::array();
  for (int i = 0; i < p.size(); ++i) {
    json entry;
    if (!term(p[i], entry)) continue;
    entry["index"] = p.basis().monomial(i);
    t["terms"].push_back(std::move(entry));
  }
  return t;
}

json numeric_tables(const std::vector<NumericPoly>& C) {
  json out = json::array();
  for (std::size_t k = 0; k < C.size(); ++k)
    out.push_back(table(static_cast<int>(k) - 1, C[k], [](double v, json& e) {
      if (v == 0.0) return false;
      e["value"] = v;
      return true;
    }));
  return out;
}

}  // namespace

json to_json(const ReducibleExpansion& e, const SymbolTable& symbols) {
  const bool symbolic = e.mode == ExpansionMode::Symbolic;
  json j = header(e.K, "reducible", symbolic ? "symbolic" : "numeric", symbols);
  if (symbolic) {
    const SymbolTable c = centered(symbols);
    j["coefficients"] = json::array();
    for (std::size_t k = 0; k < e.symbolic.size(); ++k)
      j["coefficients"].push_back(table(static_cast<int>(k) - 1, e.symbolic[k], [&](const Expression& v, json& out) {
        if (v.is_zero()) return false;
        out["expr"] = format(v, c);
        return true;
      }));
  } else {
    j["y0"] = e.y0;
    j["theta"] = e.theta;
    j["truncated"] = e.truncated;
    j["coefficients"] = numeric_tables(e.numeric);
  }
  return j;
}

json to_json(const IrreducibleExpansion& e, const SymbolTable& symbols) {
  json j = header(e.K, "irreducible", "numeric", symbols);
  j["x0"] = e.x0;
  j["theta"] = e.theta;
  j["schedule"] = e.j;
  j["max_residual"] = e.max_residual;
  j["coefficients"] = numeric_tables(e.C);
  return j;
}

}  // namespace difflik

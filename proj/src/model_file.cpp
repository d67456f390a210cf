#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "difflik/model.hpp"

namespace difflik {

namespace {

struct Statement {
  std::string key;
  std::string value;
  int line;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw Error("model file line " + std::to_string(line) + ": " + what);
}

double parse_bound(const std::string& s, int line) {
  const std::string t = trim(s);
  if (t == "inf" || t == "+inf") return INFINITY;
  if (t == "-inf") return -INFINITY;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    fail(line, "bad domain bound '" + t + "'");
  }
  if (used != t.size()) fail(line, "bad domain bound '" + t + "'");
  return v;
}

Interval parse_interval(const std::string& s, int line) {
  const std::string t = trim(s);
  if (t.size() < 2 || t.front() != '(' || t.back() != ')') fail(line, "domain must look like (lo, hi)");
  const auto parts = split_list(t.substr(1, t.size() - 2));
  if (parts.size() != 2) fail(line, "domain must have two bounds");
  Interval d{parse_bound(parts[0], line), parse_bound(parts[1], line)};
  if (!(d.lo < d.hi)) fail(line, "empty domain interval");
  return d;
}

// "mu.2" -> {2}; "sigma.1.2" -> {1, 2}
std::vector<int> key_indices(const std::string& key, std::string& base) {
  std::vector<int> idx;
  std::stringstream ss(key);
  std::getline(ss, base, '.');
  std::string part;
  while (std::getline(ss, part, '.')) {
    std::size_t used = 0;
    int v = -1;
    try {
      v = std::stoi(part, &used);
    } catch (const std::exception&) {
      return {-1};
    }
    if (used != part.size()) return {-1};
    idx.push_back(v);
  }
  return idx;
}

}  // namespace

DiffusionModel parse_model(const std::string& text) {
  std::vector<Statement> statements;
  {
    std::stringstream ss(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(ss, raw)) {
      ++line_no;
      const auto hash = raw.find('#');
      if (hash != std::string::npos) raw = raw.substr(0, hash);
      std::stringstream ls(raw);
      std::string stmt;
      while (std::getline(ls, stmt, ';')) {
        stmt = trim(stmt);
        if (stmt.empty()) continue;
        const auto eq = stmt.find('=');
        if (eq == std::string::npos) fail(line_no, "expected key = value");
        statements.push_back({trim(stmt.substr(0, eq)), trim(stmt.substr(eq + 1)), line_no});
      }
    }
  }

  DiffusionModel model;
  int dim = -1;
  int dim_line = 0;
  for (const auto& s : statements) {
    if (s.key == "dim") {
      try {
        dim = std::stoi(s.value);
      } catch (const std::exception&) {
        fail(s.line, "dim must be a positive integer");
      }
      if (dim < 1) fail(s.line, "dim must be a positive integer");
      dim_line = s.line;
    } else if (s.key == "states") {
      model.symbols.states = split_list(s.value);
    } else if (s.key == "params") {
      model.symbols.params = split_list(s.value);
    }
  }
  if (dim < 0 && model.symbols.states.empty()) throw Error("model file: dim or states required");
  if (model.symbols.states.empty())
    for (int i = 1; i <= dim; ++i) model.symbols.states.push_back("x" + std::to_string(i));
  if (dim < 0) dim = model.symbols.dim();
  if (dim != model.symbols.dim()) fail(dim_line, "dim does not match the number of states");
  for (const auto& name : model.symbols.params)
    if (model.symbols.state_index(name)) throw Error("model file: name used as both state and parameter: " + name);

  SymbolTable ysyms;
  for (int i = 1; i <= dim; ++i) ysyms.states.push_back("y" + std::to_string(i));
  ysyms.params = model.symbols.params;

  const Expression zero = Expression::constant(0.0);
  model.mu.assign(dim, Expression());
  model.sigma.assign(static_cast<std::size_t>(dim) * dim, zero);
  model.domain.assign(dim, Interval{});
  std::vector<Expression> gamma(dim), gamma_inv(dim), mu_y(dim);
  std::vector<bool> have_mu(dim, false), have_g(dim, false), have_gi(dim, false), have_my(dim, false);

  for (const auto& s : statements) {
    if (s.key == "dim" || s.key == "states" || s.key == "params") continue;
    std::string base;
    const std::vector<int> idx = key_indices(s.key, base);
    auto check_index = [&](int i) {
      if (i < 1 || i > dim) fail(s.line, "index out of range in '" + s.key + "'");
      return i - 1;
    };
    auto parse = [&](const SymbolTable& syms) {
      try {
        return parse_expression(s.value, syms);
      } catch (const ParseError& err) {
        fail(s.line, s.key + ": " + err.what());
      }
    };
    if (base == "mu" && idx.size() == 1) {
      const int i = check_index(idx[0]);
      model.mu[i] = parse(model.symbols);
      have_mu[i] = true;
    } else if (base == "sigma" && idx.size() == 2) {
      const int i = check_index(idx[0]), j = check_index(idx[1]);
      model.sigma[i * dim + j] = parse(model.symbols);
    } else if (base == "domain" && idx.size() == 1) {
      model.domain[check_index(idx[0])] = parse_interval(s.value, s.line);
    } else if (base == "gamma" && idx.size() == 1) {
      const int i = check_index(idx[0]);
      gamma[i] = parse(model.symbols);
      have_g[i] = true;
    } else if (base == "gamma_inv" && idx.size() == 1) {
      const int i = check_index(idx[0]);
      gamma_inv[i] = parse(ysyms);
      have_gi[i] = true;
    } else if (base == "mu_y" && idx.size() == 1) {
      const int i = check_index(idx[0]);
      mu_y[i] = parse(ysyms);
      have_my[i] = true;
    } else {
      fail(s.line, "unknown key '" + s.key + "'");
    }
  }
  for (int i = 0; i < dim; ++i)
    if (!have_mu[i]) throw Error("model file: missing mu." + std::to_string(i + 1));
  auto all_or_none = [&](const std::vector<bool>& have, const std::vector<Expression>& src,
                         std::vector<Expression>& dst, const char* name) {
    int count = 0;
    for (bool h : have) count += h;
    if (count == 0) return;
    if (count != dim) throw Error(std::string("model file: ") + name + " must be given for every coordinate");
    dst = src;
  };
  all_or_none(have_g, gamma, model.gamma, "gamma");
  all_or_none(have_gi, gamma_inv, model.gamma_inv, "gamma_inv");
  all_or_none(have_my, mu_y, model.mu_y, "mu_y");
  return model;
}

DiffusionModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace difflik

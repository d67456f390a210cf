// Log-transition densities and sample log-likelihoods from the expansions.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "difflik/irreducible.hpp"
#include "difflik/model.hpp"
#include "difflik/reducible.hpp"
#include "difflik/simulate.hpp"

namespace difflik {

enum class PathKind { Reducible, Irreducible, Auto };

PathKind parse_path_kind(const std::string& s);
std::string to_string(PathKind k);

class LikelihoodEvaluator {
 public:
  // Auto picks the reducible path iff the reducibility check passes and a
  // reduction map can be built; `theta` is only used for those checks (ones
  // when empty).
  LikelihoodEvaluator(std::shared_ptr<const DiffusionModel> model, int K, PathKind kind = PathKind::Auto,
                      std::span<const double> theta = {});

  PathKind kind() const { return kind_; }  // Reducible or Irreducible after construction
  int K() const { return K_; }
  const DiffusionModel& model() const { return *model_; }
  // Why Auto chose what it chose.
  const std::string& selection_note() const { return note_; }

  double log_transition(std::span<const double> x, std::span<const double> x0, double delta,
                        std::span<const double> theta) const;
  // sum over successive pairs; the first observation's density is left out.
  double path_loglik(const Path& data, double delta, std::span<const double> theta) const;

  // Forward-equation residual of the irreducible-form expansion at x:
  //   dl/dD - [A + b . grad l + 1/2 v : hess l + 1/2 grad l' v grad l]
  double pde_residual(std::span<const double> x, std::span<const double> x0, double delta,
                      std::span<const double> theta) const;

  // Irreducible expansion at (x0, theta), cached by bit pattern.
  std::shared_ptr<const IrreducibleExpansion> irreducible_at(std::span<const double> x0,
                                                             std::span<const double> theta) const;
  const ReducibleEvaluator* reducible() const { return reducible_.get(); }
  const IrreducibleBuilder& irreducible_builder() const { return *irreducible_; }

 private:
  std::shared_ptr<const DiffusionModel> model_;
  int K_;
  PathKind kind_;
  std::string note_;
  std::unique_ptr<ReducibleEvaluator> reducible_;
  std::unique_ptr<IrreducibleBuilder> irreducible_;
  CompiledExpression Dv_;
  Expression Dv_expr_;
  std::vector<Expression> v_expr_;

  // Expansions for the most recent theta only.  Per x0, across theta: series
  // of parameter-free subexpressions, and C^(-1) when v carries no parameters.
  mutable std::mutex mutex_;
  mutable std::vector<double> cached_theta_;
  mutable std::map<std::vector<std::uint64_t>, std::shared_ptr<const IrreducibleExpansion>> cache_;
  struct PointCache {
    std::shared_ptr<const NumericPoly> leading;
    std::shared_ptr<TaylorMemo> memo;
  };
  mutable std::map<std::vector<std::uint64_t>, PointCache> point_cache_;
};

}  // namespace difflik

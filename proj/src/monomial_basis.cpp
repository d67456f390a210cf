#include "difflik/monomial_basis.hpp"

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace difflik {

namespace {

void exponents_of_degree(int dim, int remaining, int var, MultiIndex& cur, std::vector<MultiIndex>& out) {
  if (var == dim - 1) {
    cur[var] = remaining;
    out.push_back(cur);
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    cur[var] = e;
    exponents_of_degree(dim, remaining - e, var + 1, cur, out);
  }
}

}  // namespace

long long level_size(int dim, int r) {
  // C(r + dim - 1, dim - 1)
  long long c = 1;
  for (int k = 1; k < dim; ++k) c = c * (r + k) / k;
  return c;
}

MonomialBasis::MonomialBasis(int dim, int degree) : dim_(dim), degree_(degree) {
  if (dim < 1 || degree < 0) throw std::invalid_argument("MonomialBasis: need dim >= 1 and degree >= 0");
  MultiIndex cur(dim, 0);
  for (int d = 0; d <= degree; ++d) {
    exponents_of_degree(dim, d, 0, cur, monomials_);
    level_counts_.push_back(static_cast<int>(monomials_.size()));
  }
  const int n = size();
  orders_.resize(n);
  factorials_.resize(n);
  for (int i = 0; i < n; ++i) {
    orders_[i] = order(monomials_[i]);
    double f = 1.0;
    for (int e : monomials_[i])
      for (int k = 2; k <= e; ++k) f *= k;
    factorials_[i] = f;
  }
  product_.assign(static_cast<std::size_t>(n) * n, -1);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (orders_[a] + orders_[b] > degree) continue;
      MultiIndex s = monomials_[a];
      for (int j = 0; j < dim; ++j) s[j] += monomials_[b][j];
      product_[static_cast<std::size_t>(a) * n + b] = index_of(s);
    }
  }
  raise_.assign(static_cast<std::size_t>(n) * dim, -1);
  lower_.assign(static_cast<std::size_t>(n) * dim, -1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) {
      MultiIndex s = monomials_[i];
      ++s[j];
      raise_[static_cast<std::size_t>(i) * dim + j] = index_of(s);
      if (monomials_[i][j] > 0) {
        s[j] -= 2;
        lower_[static_cast<std::size_t>(i) * dim + j] = index_of(s);
      }
    }
  }
}

int MonomialBasis::count_upto(int d) const {
  if (d < 0) return 0;
  if (d > degree_) return size();
  return level_counts_[d];
}

int MonomialBasis::index_of(const MultiIndex& i) const {
  if (static_cast<int>(i.size()) != dim_) throw std::invalid_argument("MonomialBasis: wrong multi-index length");
  int total = 0;
  for (int v : i) {
    if (v < 0) throw std::invalid_argument("MonomialBasis: negative exponent");
    total += v;
  }
  if (total > degree_) return -1;
  // Rank within the level: count exponent vectors of the same degree that come
  // first in decreasing lexicographic order.
  int rank = 0;
  int remaining = total;
  for (int j = 0; j + 1 < dim_; ++j) {
    for (int e = remaining; e > i[j]; --e) rank += static_cast<int>(level_size(dim_ - j - 1, remaining - e));
    remaining -= i[j];
  }
  return count_upto(total - 1) + rank;
}

const MonomialBasis& MonomialBasis::get(int dim, int degree) {
  // per-thread shortcut in front of the locked registry
  constexpr int kDims = 8, kDegrees = 64;
  thread_local std::array<const MonomialBasis*, kDims * kDegrees> recent{};
  const bool small = dim >= 0 && dim < kDims && degree >= 0 && degree < kDegrees;
  if (small && recent[dim * kDegrees + degree]) return *recent[dim * kDegrees + degree];
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::unique_ptr<MonomialBasis>> registry;
  std::lock_guard lock(mutex);
  auto& slot = registry[{dim, degree}];
  if (!slot) slot.reset(new MonomialBasis(dim, degree));
  if (small) recent[dim * kDegrees + degree] = slot.get();
  return *slot;
}

}  // namespace difflik

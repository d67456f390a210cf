// Graded monomial basis in m variables up to total degree J.
#pragma once

#include <vector>

namespace difflik {

// Exponent vector (i_1, ..., i_m); order() is the total degree.
using MultiIndex = std::vector<int>;

inline int order(const MultiIndex& i) {
  int s = 0;
  for (int v : i) s += v;
  return s;
}

// Monomials are listed by increasing total degree, and within a degree in
// decreasing lexicographic order of the exponent vector.  The listing for
// degree J is a prefix of the listing for any J' > J, so coefficient vectors of
// different degree bounds share indices.
class MonomialBasis {
 public:
  // Shared immutable instance; thread-safe.
  static const MonomialBasis& get(int dim, int degree);

  int dim() const { return dim_; }
  int degree() const { return degree_; }
  int size() const { return static_cast<int>(monomials_.size()); }
  // Number of monomials with total degree <= d.
  int count_upto(int d) const;
  // First index with total degree == d.
  int level_begin(int d) const { return d <= 0 ? 0 : count_upto(d - 1); }
  int level_end(int d) const { return count_upto(d); }

  const MultiIndex& monomial(int idx) const { return monomials_[idx]; }
  int order_of(int idx) const { return orders_[idx]; }
  int index_of(const MultiIndex& i) const;  // -1 when order exceeds degree()

  // Index of monomial(a) * monomial(b), or -1 if its degree exceeds degree().
  int product(int a, int b) const { return product_[static_cast<std::size_t>(a) * size() + b]; }
  // Index of monomial(idx) with exponent j raised / lowered by one (-1 if none).
  int raise(int idx, int j) const { return raise_[static_cast<std::size_t>(idx) * dim_ + j]; }
  int lower(int idx, int j) const { return lower_[static_cast<std::size_t>(idx) * dim_ + j]; }
  // i_1! ... i_m!
  double factorial(int idx) const { return factorials_[idx]; }

 private:
  MonomialBasis(int dim, int degree);

  int dim_;
  int degree_;
  std::vector<MultiIndex> monomials_;
  std::vector<int> orders_;
  std::vector<int> level_counts_;
  std::vector<int> product_;
  std::vector<int> raise_;
  std::vector<int> lower_;
  std::vector<double> factorials_;
};

// Number of monomials of total degree exactly r in m variables: C(r+m-1, m-1).
long long level_size(int dim, int r);

}  // namespace difflik

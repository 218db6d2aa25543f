#pragma once

#include <vector>

#include "esgvi/ldl.hpp"

namespace esgvi {

// Covariance blocks of inv(A) on the fill pattern of A's factorization.
// Everything needed for factor marginals and the selected-inverse identities,
// nothing more — the full inverse is never formed.
class PartialCovariance {
 public:
  PartialCovariance() = default;

  const PrecisionPattern& pattern() const { return vals_.pattern(); }
  const BlockSparseSym& storage() const { return vals_; }

  ConstBlockRef block(int e) const { return vals_.block(e); }
  // Block (i, j) with i >= j; throws MissingCovarianceBlock when absent.
  ConstBlockRef block_at(int i, int j) const;

  // Dense covariance over an ordered block subset (the marginal of those
  // blocks).  Every block pair must be on the pattern.
  Mat marginal(const std::vector<int>& blocks) const;

 private:
  friend PartialCovariance takahashi_partial_inverse(const LdlFactors&);
  BlockSparseSym vals_;
};

// Takahashi recursion over the factors: columns last to first, rows
// descending within a column, diagonal last:
//   Sigma(j,k) = delta(j,k) inv(D_k) - sum_{l > k} Sigma*(j,l) L(l,k).
PartialCovariance takahashi_partial_inverse(const LdlFactors& f);

}  // namespace esgvi

#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include "esgvi/pattern.hpp"
#include "esgvi/types.hpp"

namespace esgvi {

// Symmetric block-sparse matrix: values for the lower-triangle entries of a
// PrecisionPattern.  Blocks are dense row-major slices of one contiguous
// array; the upper triangle is implied by symmetry.
class BlockSparseSym {
 public:
  BlockSparseSym() = default;
  explicit BlockSparseSym(std::shared_ptr<const PrecisionPattern> pattern);

  const PrecisionPattern& pattern() const { return *pattern_; }
  const std::shared_ptr<const PrecisionPattern>& pattern_ptr() const { return pattern_; }

  BlockRef block(int e) {
    return BlockRef(values_.data() + offsets_[e], pattern_->layout().dim(pattern_->entry_row(e)),
                    pattern_->layout().dim(pattern_->entry_col(e)));
  }
  ConstBlockRef block(int e) const {
    return ConstBlockRef(values_.data() + offsets_[e],
                         pattern_->layout().dim(pattern_->entry_row(e)),
                         pattern_->layout().dim(pattern_->entry_col(e)));
  }
  // Block at (i, j) with i >= j; throws PatternViolation when absent.
  BlockRef block_at(int i, int j);
  ConstBlockRef block_at(int i, int j) const;

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  int value_offset(int e) const { return offsets_[e]; }

  void set_zero();
  // this += a * x; patterns must be identical.
  void add_scaled(const BlockSparseSym& x, double a);

  Mat to_dense() const;

 private:
  std::shared_ptr<const PrecisionPattern> pattern_;
  std::vector<int> offsets_;
  std::vector<double> values_;
};

// Adds a factor's symmetric local matrix into the global matrix.  `blocks`
// lists the factor's block indices in local order; `local` is the dense
// symmetric matrix over the concatenated block dims.  Each stored (lower
// triangle) target is written once; throws PatternViolation when a needed
// block pair is not in the pattern, DimensionMismatch on size mismatch.
void scatter_add(BlockSparseSym& a, const std::vector<int>& blocks, const Mat& local);

// x^T A x using only the stored lower-triangle blocks (off-diagonal entries
// counted twice); never densifies.
double quadratic_form(const BlockSparseSym& a, const Vec& x);

// Matrix Market "coordinate real symmetric" export of the scalar expansion,
// 1-indexed, lower triangle.
void write_matrix_market(std::ostream& os, const BlockSparseSym& a);

}  // namespace esgvi

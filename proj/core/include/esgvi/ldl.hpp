#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "esgvi/block_sparse.hpp"

namespace esgvi {

// Symbolic side of the factorization, reusable across numeric factorizations
// that share a pattern (the solver re-factorizes every backtracking step on a
// constant pattern).  Holds the fill-closed pattern, the mapping from input
// entries to fill entries, the right-looking update schedule, and the access
// lists for the Takahashi partial-inverse recursion.
struct FactorizePlan {
  std::shared_ptr<const PrecisionPattern> input;
  std::shared_ptr<const PrecisionPattern> fill;
  std::vector<int> input_to_fill;  // entry id map

  // Right-looking updates, grouped by pivot column k: after column k is
  // scaled, C(i,j) -= Y(i,k) * L(j,k)^T for every row pair i >= j > k in
  // column k, where Y(i,k) is the pre-scaling column block.
  std::vector<int> col_update_begin;  // size nb+1
  std::vector<int> up_target;         // fill entry id of (i,j)
  std::vector<int> up_y_off;          // value offset of Y(i,k) inside the column scratch
  std::vector<int> up_l;              // fill entry id of (j,k)

  // Per column: value offset of each strict-lower block inside the column
  // scratch buffer, plus the scratch size needed.
  std::vector<int> col_scratch_begin;  // size nb+1 (indexes into strict_scratch_off)
  std::vector<int> strict_scratch_off;
  int max_col_scratch = 0;

  // Takahashi terms per fill entry e = (j,k):
  //   Sigma(j,k) -= Sigma*(j,l) * L(l,k)  over strict rows l of column k,
  // where Sigma*(j,l) is the stored block (j,l) when j >= l and the transpose
  // of the stored block (l,j) otherwise.  Diagonal entries list their column's
  // terms with the transpose flag set (Sigma*(k,l) = Sigma(l,k)^T).
  std::vector<int> tk_begin;  // size num_fill_entries+1
  std::vector<int> tk_sigma;  // stored fill entry id
  std::vector<std::uint8_t> tk_trans;
  std::vector<int> tk_l;  // fill entry id of (l,k)
};

std::shared_ptr<const FactorizePlan> make_factorize_plan(
    std::shared_ptr<const PrecisionPattern> pattern);

// Block LDL^T factors: unit-lower L on the strict-lower fill entries, block
// diagonal D (stored with its per-block Cholesky factors for solves).
class LdlFactors {
 public:
  const PrecisionPattern& fill() const { return *plan_->fill; }
  const FactorizePlan& plan() const { return *plan_; }
  const BlockSparseSym& values() const { return vals_; }  // L strict-lower, D diagonal
  ConstBlockRef l_block(int e) const { return vals_.block(e); }
  ConstBlockRef d_block(int b) const;
  double log_det() const { return log_det_; }

  // Solves (L D L^T) x = r.
  Vec solve(const Vec& r) const;
  // Writes inv(D_b) into a dense row-major buffer (dim x dim).
  void d_inverse(int b, double* out) const;
  void d_solve_in_place(int b, double* x) const;  // x <- inv(D_b) x

 private:
  friend LdlFactors ldl_factorize(const BlockSparseSym&,
                                  std::shared_ptr<const FactorizePlan>);
  std::shared_ptr<const FactorizePlan> plan_;
  BlockSparseSym vals_;
  std::vector<int> chol_off_;      // per block, offset into chol_
  std::vector<double> chol_;       // row-major lower Cholesky factor of each D_b
  double log_det_ = 0.0;
};

// Factorizes A = L D L^T in the block order of A's layout (no pivoting).
// Throws NotPositiveDefinite when a pivot block is not SPD.
LdlFactors ldl_factorize(const BlockSparseSym& a);
LdlFactors ldl_factorize(const BlockSparseSym& a, std::shared_ptr<const FactorizePlan> plan);

inline Vec solve(const LdlFactors& f, const Vec& r) { return f.solve(r); }
inline double log_det(const LdlFactors& f) { return f.log_det(); }

}  // namespace esgvi

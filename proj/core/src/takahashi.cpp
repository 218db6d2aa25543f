#include "esgvi/takahashi.hpp"

#include <algorithm>
#include <string>

#include "dense_kernels.hpp"

namespace esgvi {

ConstBlockRef PartialCovariance::block_at(int i, int j) const {
  const int e = pattern().find(i, j);
  if (e < 0)
    throw MissingCovarianceBlock("covariance block (" + std::to_string(i) + "," +
                                 std::to_string(j) + ") not on the partial-inverse pattern");
  return vals_.block(e);
}

Mat PartialCovariance::marginal(const std::vector<int>& blocks) const {
  const auto& lay = pattern().layout();
  int total = 0;
  for (int b : blocks) total += lay.dim(b);
  Mat out(total, total);
  int ro = 0;
  for (std::size_t r = 0; r < blocks.size(); ++r) {
    int co = 0;
    for (std::size_t c = 0; c < blocks.size(); ++c) {
      const int i = blocks[r], j = blocks[c];
      if (i >= j)
        out.block(ro, co, lay.dim(i), lay.dim(j)) = block_at(i, j);
      else
        out.block(ro, co, lay.dim(i), lay.dim(j)) = block_at(j, i).transpose();
      co += lay.dim(blocks[c]);
    }
    ro += lay.dim(blocks[r]);
  }
  return out;
}

PartialCovariance takahashi_partial_inverse(const LdlFactors& f) {
  const auto& plan = f.plan();
  const auto& fl = *plan.fill;
  const auto& lay = fl.layout();
  const int nb = lay.num_blocks();

  PartialCovariance cov;
  cov.vals_ = BlockSparseSym(plan.fill);
  double* sig = cov.vals_.data();
  const double* lvals = f.values().data();

  int max_dim = 0;
  for (int b = 0; b < nb; ++b) max_dim = std::max(max_dim, lay.dim(b));
  std::vector<double> dinv(max_dim * max_dim);

  for (int k = nb - 1; k >= 0; --k) {
    const auto& col = fl.column_entries(k);
    const int dk = lay.dim(k);
    // Off-diagonal blocks of column k, rows descending.
    for (int idx = static_cast<int>(col.size()) - 1; idx >= 1; --idx) {
      const int e = col[idx];
      const int dj = lay.dim(fl.entry_row(e));
      double* se = sig + cov.vals_.value_offset(e);
      std::fill(se, se + dj * dk, 0.0);
      for (int t = plan.tk_begin[e]; t < plan.tk_begin[e + 1]; ++t) {
        const int le = plan.tk_l[t];
        const int dl = lay.dim(fl.entry_row(le));
        const double* sb = sig + cov.vals_.value_offset(plan.tk_sigma[t]);
        const double* lb = lvals + f.values().value_offset(le);
        if (plan.tk_trans[t])
          detail::acc_minus_atb(se, sb, lb, dj, dk, dl);
        else
          detail::acc_minus_ab(se, sb, lb, dj, dk, dl);
      }
    }
    // Diagonal block last: inv(D_k) minus this column's terms, symmetrized.
    const int e0 = col[0];
    double* se = sig + cov.vals_.value_offset(e0);
    f.d_inverse(k, dinv.data());
    std::copy(dinv.data(), dinv.data() + dk * dk, se);
    for (int t = plan.tk_begin[e0]; t < plan.tk_begin[e0 + 1]; ++t) {
      const int le = plan.tk_l[t];
      const int dl = lay.dim(fl.entry_row(le));
      const double* sb = sig + cov.vals_.value_offset(plan.tk_sigma[t]);
      const double* lb = lvals + f.values().value_offset(le);
      detail::acc_minus_atb(se, sb, lb, dk, dk, dl);
    }
    for (int r = 0; r < dk; ++r)
      for (int c = r + 1; c < dk; ++c) {
        const double m = 0.5 * (se[r * dk + c] + se[c * dk + r]);
        se[r * dk + c] = m;
        se[c * dk + r] = m;
      }
  }
  return cov;
}

}  // namespace esgvi

#include "esgvi/ldl.hpp"

#include <cmath>
#include <string>

#include "dense_kernels.hpp"

namespace esgvi {

using detail::acc_minus_abt;
using detail::chol_solve_in_place;
using detail::cholesky_in_place;

std::shared_ptr<const FactorizePlan> make_factorize_plan(
    std::shared_ptr<const PrecisionPattern> pattern) {
  auto plan = std::make_shared<FactorizePlan>();
  plan->input = pattern;
  plan->fill = std::make_shared<PrecisionPattern>(symbolic_fill(*pattern));
  const auto& in = *plan->input;
  const auto& fl = *plan->fill;
  const auto& lay = fl.layout();
  const int nb = lay.num_blocks();

  plan->input_to_fill.resize(in.num_entries());
  for (int e = 0; e < in.num_entries(); ++e) {
    const int fe = fl.find(in.entry_row(e), in.entry_col(e));
    if (fe < 0) throw PatternViolation("symbolic fill lost an input entry");
    plan->input_to_fill[e] = fe;
  }

  plan->col_update_begin.assign(nb + 1, 0);
  plan->col_scratch_begin.assign(nb + 1, 0);
  for (int k = 0; k < nb; ++k) {
    const auto& col = fl.column_entries(k);  // diagonal first, then strict rows
    const int nstrict = static_cast<int>(col.size()) - 1;
    plan->col_scratch_begin[k] = static_cast<int>(plan->strict_scratch_off.size());
    int scratch = 0;
    for (int p = 0; p < nstrict; ++p) {
      const int i = fl.entry_row(col[p + 1]);
      plan->strict_scratch_off.push_back(scratch);
      scratch += lay.dim(i) * lay.dim(k);
    }
    plan->max_col_scratch = std::max(plan->max_col_scratch, scratch);
    plan->col_update_begin[k] = static_cast<int>(plan->up_target.size());
    for (int a = 0; a < nstrict; ++a) {
      const int i = fl.entry_row(col[a + 1]);
      for (int b = 0; b <= a; ++b) {
        const int j = fl.entry_row(col[b + 1]);
        const int target = fl.find(i, j);
        if (target < 0) throw PatternViolation("fill pattern not closed");
        plan->up_target.push_back(target);
        plan->up_y_off.push_back(
            plan->strict_scratch_off[plan->col_scratch_begin[k] + a]);
        plan->up_l.push_back(col[b + 1]);
      }
    }
  }
  plan->col_update_begin[nb] = static_cast<int>(plan->up_target.size());
  plan->col_scratch_begin[nb] = static_cast<int>(plan->strict_scratch_off.size());

  // Takahashi access lists, in the canonical entry order of the fill pattern.
  // Every entry of column k has one term per strict-lower row of column k.
  plan->tk_begin.assign(fl.num_entries() + 1, 0);
  for (int k = 0; k < nb; ++k) {
    const auto& col = fl.column_entries(k);
    const int nstrict = static_cast<int>(col.size()) - 1;
    for (int e : col) plan->tk_begin[e + 1] = nstrict;
  }
  for (int e = 0; e < fl.num_entries(); ++e) plan->tk_begin[e + 1] += plan->tk_begin[e];
  plan->tk_sigma.resize(plan->tk_begin[fl.num_entries()]);
  plan->tk_trans.resize(plan->tk_begin[fl.num_entries()]);
  plan->tk_l.resize(plan->tk_begin[fl.num_entries()]);
  for (int k = 0; k < nb; ++k) {
    const auto& col = fl.column_entries(k);
    const int nstrict = static_cast<int>(col.size()) - 1;
    for (int idx = 0; idx < static_cast<int>(col.size()); ++idx) {
      const int e = col[idx];
      const int j = fl.entry_row(e);
      int at = plan->tk_begin[e];
      for (int p = 0; p < nstrict; ++p) {
        const int l_row = fl.entry_row(col[p + 1]);
        int sig;
        bool trans;
        if (j >= l_row) {
          sig = fl.find(j, l_row);
          trans = false;
        } else {
          sig = fl.find(l_row, j);
          trans = true;
        }
        if (sig < 0) throw PatternViolation("fill pattern not closed (takahashi)");
        plan->tk_sigma[at] = sig;
        plan->tk_trans[at] = trans ? 1 : 0;
        plan->tk_l[at] = col[p + 1];
        ++at;
      }
    }
  }
  return plan;
}

ConstBlockRef LdlFactors::d_block(int b) const {
  return vals_.block(fill().column_entries(b)[0]);
}

void LdlFactors::d_inverse(int b, double* out) const {
  const int d = fill().layout().dim(b);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) out[r * d + c] = (r == c) ? 1.0 : 0.0;
  chol_solve_in_place(chol_.data() + chol_off_[b], d, out, d);
}

void LdlFactors::d_solve_in_place(int b, double* x) const {
  chol_solve_in_place(chol_.data() + chol_off_[b], fill().layout().dim(b), x, 1);
}

LdlFactors ldl_factorize(const BlockSparseSym& a) {
  return ldl_factorize(a, make_factorize_plan(a.pattern_ptr()));
}

LdlFactors ldl_factorize(const BlockSparseSym& a, std::shared_ptr<const FactorizePlan> plan) {
  if (!(a.pattern() == *plan->input))
    throw PatternViolation("ldl_factorize: matrix pattern differs from plan");
  const auto& fl = *plan->fill;
  const auto& lay = fl.layout();
  const int nb = lay.num_blocks();

  LdlFactors f;
  f.plan_ = plan;
  f.vals_ = BlockSparseSym(plan->fill);
  // Scatter input values into the fill layout (fill-only entries stay zero).
  for (int e = 0; e < a.pattern().num_entries(); ++e) {
    const int fe = plan->input_to_fill[e];
    const int n = lay.dim(a.pattern().entry_row(e)) * lay.dim(a.pattern().entry_col(e));
    std::copy(a.data() + a.value_offset(e), a.data() + a.value_offset(e) + n,
              f.vals_.data() + f.vals_.value_offset(fe));
  }

  f.chol_off_.resize(nb);
  int chol_total = 0;
  for (int b = 0; b < nb; ++b) {
    f.chol_off_[b] = chol_total;
    chol_total += lay.dim(b) * lay.dim(b);
  }
  f.chol_.assign(chol_total, 0.0);

  std::vector<double> scratch(plan->max_col_scratch);
  double* vals = f.vals_.data();
  f.log_det_ = 0.0;

  for (int k = 0; k < nb; ++k) {
    const auto& col = fl.column_entries(k);
    const int dk = lay.dim(k);
    // Pivot block: symmetrize, then Cholesky.
    double* dblk = vals + f.vals_.value_offset(col[0]);
    for (int r = 0; r < dk; ++r)
      for (int c = r + 1; c < dk; ++c) {
        const double m = 0.5 * (dblk[r * dk + c] + dblk[c * dk + r]);
        dblk[r * dk + c] = m;
        dblk[c * dk + r] = m;
      }
    double* cholk = f.chol_.data() + f.chol_off_[k];
    std::copy(dblk, dblk + dk * dk, cholk);
    if (!cholesky_in_place(cholk, dk))
      throw NotPositiveDefinite("pivot block " + std::to_string(k) + " is not SPD");
    for (int r = 0; r < dk; ++r) f.log_det_ += 2.0 * std::log(cholk[r * dk + r]);

    // Stash pre-scaling column (Y), then scale: L(i,k) = Y(i,k) inv(D_k).
    const int nstrict = static_cast<int>(col.size()) - 1;
    const int sbase = plan->col_scratch_begin[k];
    for (int p = 0; p < nstrict; ++p) {
      const int e = col[p + 1];
      const int di = lay.dim(fl.entry_row(e));
      double* le = vals + f.vals_.value_offset(e);
      std::copy(le, le + di * dk, scratch.data() + plan->strict_scratch_off[sbase + p]);
      // L(i,k) = Y(i,k) inv(D_k); D_k is symmetric, so each row solves
      // D_k z = y_r independently (rows are contiguous in row-major storage).
      for (int rI = 0; rI < di; ++rI) chol_solve_in_place(cholk, dk, le + rI * dk, 1);
    }
    // Right-looking updates into later columns.
    for (int u = plan->col_update_begin[k]; u < plan->col_update_begin[k + 1]; ++u) {
      const int target = plan->up_target[u];
      const int di = lay.dim(fl.entry_row(target));
      const int dj = lay.dim(fl.entry_col(target));
      acc_minus_abt(vals + f.vals_.value_offset(target),
                    scratch.data() + plan->up_y_off[u],
                    vals + f.vals_.value_offset(plan->up_l[u]), di, dj, dk);
    }
  }
  return f;
}

Vec LdlFactors::solve(const Vec& r) const {
  const auto& fl = fill();
  const auto& lay = fl.layout();
  if (r.size() != lay.total_dim())
    throw DimensionMismatch("solve: rhs has wrong dimension");
  Vec x = r;
  const int nb = lay.num_blocks();
  const double* vals = vals_.data();
  // Forward: x <- inv(L) x.
  for (int k = 0; k < nb; ++k) {
    const auto& col = fl.column_entries(k);
    const int dk = lay.dim(k);
    const double* xk = x.data() + lay.offset(k);
    for (std::size_t p = 1; p < col.size(); ++p) {
      const int e = col[p];
      const int i = fl.entry_row(e);
      const int di = lay.dim(i);
      const double* l = vals + vals_.value_offset(e);
      double* xi = x.data() + lay.offset(i);
      for (int rI = 0; rI < di; ++rI) {
        double acc = 0.0;
        for (int m = 0; m < dk; ++m) acc += l[rI * dk + m] * xk[m];
        xi[rI] -= acc;
      }
    }
  }
  // Diagonal: x <- inv(D) x.
  for (int b = 0; b < nb; ++b)
    chol_solve_in_place(chol_.data() + chol_off_[b], lay.dim(b), x.data() + lay.offset(b), 1);
  // Backward: x <- inv(L^T) x.
  for (int k = nb - 1; k >= 0; --k) {
    const auto& col = fl.column_entries(k);
    const int dk = lay.dim(k);
    double* xk = x.data() + lay.offset(k);
    for (std::size_t p = 1; p < col.size(); ++p) {
      const int e = col[p];
      const int i = fl.entry_row(e);
      const int di = lay.dim(i);
      const double* l = vals + vals_.value_offset(e);
      const double* xi = x.data() + lay.offset(i);
      for (int m = 0; m < dk; ++m) {
        double acc = 0.0;
        for (int rI = 0; rI < di; ++rI) acc += l[rI * dk + m] * xi[rI];
        xk[m] -= acc;
      }
    }
  }
  return x;
}

}  // namespace esgvi

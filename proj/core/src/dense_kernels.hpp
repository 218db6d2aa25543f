#pragma once

// Internal micro-kernels for small dense row-major blocks.  Hand loops beat
// mapped-Eigen products at the 1..6 dims the block solver works with.

#include <cmath>

namespace esgvi::detail {

// C (di x dj) -= A (di x dk) * B^T, B (dj x dk).
inline void acc_minus_abt(double* c, const double* a, const double* b, int di, int dj,
                          int dk) {
  for (int r = 0; r < di; ++r) {
    const double* ar = a + r * dk;
    double* cr = c + r * dj;
    for (int s = 0; s < dj; ++s) {
      const double* bs = b + s * dk;
      double acc = 0.0;
      for (int m = 0; m < dk; ++m) acc += ar[m] * bs[m];
      cr[s] -= acc;
    }
  }
}

// C (di x dj) -= A (di x dk) * B, B (dk x dj).
inline void acc_minus_ab(double* c, const double* a, const double* b, int di, int dj,
                         int dk) {
  for (int r = 0; r < di; ++r) {
    const double* ar = a + r * dk;
    double* cr = c + r * dj;
    for (int m = 0; m < dk; ++m) {
      const double arm = ar[m];
      const double* bm = b + m * dj;
      for (int s = 0; s < dj; ++s) cr[s] -= arm * bm[s];
    }
  }
}

// C (di x dj) -= A^T * B with A (dk x di), B (dk x dj).
inline void acc_minus_atb(double* c, const double* a, const double* b, int di, int dj,
                          int dk) {
  for (int m = 0; m < dk; ++m) {
    const double* am = a + m * di;
    const double* bm = b + m * dj;
    for (int r = 0; r < di; ++r) {
      const double amr = am[r];
      double* cr = c + r * dj;
      for (int s = 0; s < dj; ++s) cr[s] -= amr * bm[s];
    }
  }
}

// In-place lower Cholesky of a row-major d x d block; returns false on a
// non-positive or non-finite pivot.  The upper part is zeroed.
inline bool cholesky_in_place(double* a, int d) {
  for (int j = 0; j < d; ++j) {
    double diag = a[j * d + j];
    for (int m = 0; m < j; ++m) diag -= a[j * d + m] * a[j * d + m];
    if (!(diag > 0.0) || !std::isfinite(diag)) return false;
    const double root = std::sqrt(diag);
    a[j * d + j] = root;
    for (int i = j + 1; i < d; ++i) {
      double v = a[i * d + j];
      for (int m = 0; m < j; ++m) v -= a[i * d + m] * a[j * d + m];
      a[i * d + j] = v / root;
    }
    for (int i = 0; i < j; ++i) a[i * d + j] = 0.0;
  }
  return true;
}

// x <- inv(C C^T) x for a row-major lower Cholesky factor C (d x d); x holds
// n columns stacked row-major (d x n).
inline void chol_solve_in_place(const double* c, int d, double* x, int n) {
  for (int i = 0; i < d; ++i) {
    for (int s = 0; s < n; ++s) {
      double v = x[i * n + s];
      for (int m = 0; m < i; ++m) v -= c[i * d + m] * x[m * n + s];
      x[i * n + s] = v / c[i * d + i];
    }
  }
  for (int i = d - 1; i >= 0; --i) {
    for (int s = 0; s < n; ++s) {
      double v = x[i * n + s];
      for (int m = i + 1; m < d; ++m) v -= c[m * d + i] * x[m * n + s];
      x[i * n + s] = v / c[i * d + i];
    }
  }
}

}  // namespace esgvi::detail

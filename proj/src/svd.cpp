#include "affect/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "affect/error.hpp"
#include "affect/ops.hpp"

namespace affect {

namespace {

// Column-major work matrix: column j of an r-row matrix starts at j*r.
struct Work {
  int rows = 0, cols = 0;
  std::vector<double> a;
  double* col(int j) { return a.data() + static_cast<std::size_t>(j) * rows; }
  const double* col(int j) const { return a.data() + static_cast<std::size_t>(j) * rows; }
};

Work to_columns(const Tensor& m) {
  Work w;
  w.rows = m.dim(0);
  w.cols = m.dim(1);
  w.a.resize(static_cast<std::size_t>(w.rows) * w.cols);
  const auto src = m.data();
  for (int i = 0; i < w.rows; ++i)
    for (int j = 0; j < w.cols; ++j)
      w.a[static_cast<std::size_t>(j) * w.rows + i] = src[static_cast<std::size_t>(i) * w.cols + j];
  return w;
}

Tensor to_tensor(const Work& w) {
  std::vector<double> out(static_cast<std::size_t>(w.rows) * w.cols);
  for (int i = 0; i < w.rows; ++i)
    for (int j = 0; j < w.cols; ++j)
      out[static_cast<std::size_t>(i) * w.cols + j] = w.a[static_cast<std::size_t>(j) * w.rows + i];
  return Tensor::from_raw({w.rows, w.cols}, out);
}

Work identity_cols(int n) {
  Work w;
  w.rows = w.cols = n;
  w.a.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) w.a[static_cast<std::size_t>(i) * n + i] = 1.0;
  return w;
}

void rotate_pair(double* x, double* y, int rows, double cs, double sn) {
  for (int r = 0; r < rows; ++r) {
    const double xv = x[r], yv = y[r];
    x[r] = cs * xv - sn * yv;
    y[r] = sn * xv + cs * yv;
  }
}

// Orthogonalizes the columns of `a` in place by Jacobi rotations, mirroring
// every rotation into `v`. On return the columns of `a` are U·diag(sigma).
void jacobi_sweeps(Work& a, Work& v) {
  constexpr double kTol = 1e-14;
  constexpr int kMaxSweeps = 64;
  const int n = a.cols, rows = a.rows;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (int i = 0; i < n - 1; ++i) {
      for (int j = i + 1; j < n; ++j) {
        double* ci = a.col(i);
        double* cj = a.col(j);
        double aa = 0.0, bb = 0.0, cc = 0.0;
        for (int r = 0; r < rows; ++r) {
          aa += ci[r] * ci[r];
          bb += cj[r] * cj[r];
          cc += ci[r] * cj[r];
        }
        if (std::abs(cc) <= kTol * std::sqrt(aa * bb) || cc == 0.0) continue;
        rotated = true;
        const double zeta = (bb - aa) / (2.0 * cc);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        rotate_pair(ci, cj, rows, cs, sn);
        rotate_pair(v.col(i), v.col(j), v.rows, cs, sn);
      }
    }
    if (!rotated) return;
  }

  // Report the worst remaining correlation so the failure is diagnosable.
  double worst = 0.0;
  for (int i = 0; i < n - 1; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double* ci = a.col(i);
      const double* cj = a.col(j);
      double aa = 0.0, bb = 0.0, cc = 0.0;
      for (int r = 0; r < rows; ++r) {
        aa += ci[r] * ci[r];
        bb += cj[r] * cj[r];
        cc += ci[r] * cj[r];
      }
      if (aa > 0.0 && bb > 0.0) worst = std::max(worst, std::abs(cc) / std::sqrt(aa * bb));
    }
  }
  throw NumericError("svd failed to converge; worst column correlation " + std::to_string(worst));
}

// Extends the first `have` orthonormal columns of u to a full basis.
// Projects the span of the existing columns out of every standard basis
// vector, then runs pivoted Gram-Schmidt on the residuals: the largest
// residual always wins a slot, so a null space spread evenly across all
// coordinates (where no single residual is large) still completes.
void complete_basis(Work& u, int have) {
  const int p = u.rows;
  if (have >= p) return;

  std::vector<std::vector<double>> residual(static_cast<std::size_t>(p));
  for (int c = 0; c < p; ++c) {
    auto& e = residual[static_cast<std::size_t>(c)];
    e.assign(static_cast<std::size_t>(p), 0.0);
    e[static_cast<std::size_t>(c)] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < have; ++j) {
        const double* cj = u.col(j);
        double proj = 0.0;
        for (int r = 0; r < p; ++r) proj += e[static_cast<std::size_t>(r)] * cj[r];
        for (int r = 0; r < p; ++r) e[static_cast<std::size_t>(r)] -= proj * cj[r];
      }
    }
  }

  for (int filled = have; filled < p; ++filled) {
    int best = -1;
    double best_norm2 = 0.0;
    for (int c = 0; c < p; ++c) {
      double norm2 = 0.0;
      for (double x : residual[static_cast<std::size_t>(c)]) norm2 += x * x;
      if (norm2 > best_norm2) {
        best_norm2 = norm2;
        best = c;
      }
    }
    if (best < 0 || best_norm2 < 1e-20) throw NumericError("svd basis completion failed");

    auto& e = residual[static_cast<std::size_t>(best)];
    // One more projection against everything filled so far, then normalize.
    for (int j = 0; j < filled; ++j) {
      const double* cj = u.col(j);
      double proj = 0.0;
      for (int r = 0; r < p; ++r) proj += e[static_cast<std::size_t>(r)] * cj[r];
      for (int r = 0; r < p; ++r) e[static_cast<std::size_t>(r)] -= proj * cj[r];
    }
    double norm = 0.0;
    for (double x : e) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-10) throw NumericError("svd basis completion failed");
    double* dst = u.col(filled);
    for (int r = 0; r < p; ++r) dst[r] = e[static_cast<std::size_t>(r)] / norm;
    e.assign(static_cast<std::size_t>(p), 0.0);  // consumed

    // Keep the remaining residuals orthogonal to the new column.
    for (int c = 0; c < p; ++c) {
      auto& rc = residual[static_cast<std::size_t>(c)];
      double proj = 0.0;
      for (int r = 0; r < p; ++r) proj += rc[static_cast<std::size_t>(r)] * dst[r];
      for (int r = 0; r < p; ++r) rc[static_cast<std::size_t>(r)] -= proj * dst[r];
    }
  }
}

}  // namespace

Svd svd(const Tensor& m) {
  if (m.ndim() != 2) throw DimensionError("svd: expected a matrix, got " + shape_str(m.shape()));
  if (!m.all_finite()) throw DataError("svd: non-finite entries");
  const int p = m.dim(0), q = m.dim(1);

  // Work on the transposed problem when the matrix is wide, so the Jacobi
  // loop always orthogonalizes the smaller set of columns.
  if (p < q) {
    Svd t = svd(transpose(m));
    return {t.v, t.sigma, t.u};
  }

  Work a = to_columns(m);      // p x q, p >= q
  Work v = identity_cols(q);   // q x q
  jacobi_sweeps(a, v);

  // Singular values are the column norms; sort descending.
  std::vector<double> sig(static_cast<std::size_t>(q));
  for (int j = 0; j < q; ++j) {
    double s = 0.0;
    const double* cj = a.col(j);
    for (int r = 0; r < p; ++r) s += cj[r] * cj[r];
    sig[static_cast<std::size_t>(j)] = std::sqrt(s);
  }
  std::vector<int> order(static_cast<std::size_t>(q));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return sig[static_cast<std::size_t>(i)] > sig[static_cast<std::size_t>(j)]; });

  const double smax = sig.empty() ? 0.0 : sig[static_cast<std::size_t>(order[0])];
  const double rank_tol = smax * 1e-13;

  Work u;
  u.rows = u.cols = p;
  u.a.assign(static_cast<std::size_t>(p) * p, 0.0);
  Work vs = identity_cols(q);
  std::vector<double> sigma_sorted(static_cast<std::size_t>(q));
  int rank = 0;
  for (int j = 0; j < q; ++j) {
    const int src = order[static_cast<std::size_t>(j)];
    const double s = sig[static_cast<std::size_t>(src)];
    sigma_sorted[static_cast<std::size_t>(j)] = s;
    std::copy(v.col(src), v.col(src) + q, vs.col(j));
    if (s > rank_tol && s > 0.0) {
      const double* cj = a.col(src);
      double* uj = u.col(j);
      for (int r = 0; r < p; ++r) uj[r] = cj[r] / s;
      rank = j + 1;
    } else {
      sigma_sorted[static_cast<std::size_t>(j)] = 0.0;
    }
  }
  complete_basis(u, rank);

  Svd out;
  out.u = to_tensor(u);
  out.sigma = Tensor::from_raw({q}, sigma_sorted);
  out.v = to_tensor(vs);
  return out;
}

}  // namespace affect

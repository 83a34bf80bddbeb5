#include "affect/loss.hpp"

#include <string>

#include "affect/error.hpp"
#include "affect/ops.hpp"

namespace affect {

namespace {

constexpr double kDegenerateFloor = 1e-12;

// Extracts the valid rows of a T x 3 matrix as a (possibly shorter) matrix,
// keeping gradient flow. Trailing padding (the common case) slices one
// contiguous block; arbitrary masks gather row by row.
Tensor valid_rows(const Tensor& m, const std::vector<std::uint8_t>* mask) {
  if (!mask || mask->empty()) return m;
  const int t = m.dim(0);
  if (static_cast<int>(mask->size()) != t) {
    throw ArgumentError("mask length " + std::to_string(mask->size()) +
                        " does not match frame count " + std::to_string(t));
  }
  int prefix = 0;
  while (prefix < t && (*mask)[static_cast<std::size_t>(prefix)]) ++prefix;
  bool is_prefix = true;
  int count = prefix;
  for (int i = prefix; i < t; ++i) {
    if ((*mask)[static_cast<std::size_t>(i)]) {
      is_prefix = false;
      ++count;
    }
  }
  if (count < 2) throw ArgumentError("need at least 2 valid frames, got " + std::to_string(count));
  if (count == t) return m;
  if (is_prefix) return slice_rows(m, 0, prefix);
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < t; ++i) {
    if ((*mask)[static_cast<std::size_t>(i)]) rows.push_back(row(m, i));
  }
  return stack_rows(rows);
}

double denom_value(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (double v : x) mx += v;
  for (double v : y) my += v;
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0;
  for (double v : x) vx += (v - mx) * (v - mx);
  for (double v : y) vy += (v - my) * (v - my);
  return vx / n + vy / n + (mx - my) * (mx - my);
}

}  // namespace

Tensor ccc(const Tensor& x, const Tensor& y) {
  if (x.ndim() != 1 || y.ndim() != 1 || x.size() != y.size()) {
    throw DimensionError("ccc expects two equal-length vectors, got " + shape_str(x.shape()) +
                         " and " + shape_str(y.shape()));
  }
  if (x.size() < 2) throw ArgumentError("ccc needs at least 2 samples");
  if (denom_value(x.data(), y.data()) < kDegenerateFloor) {
    throw DegenerateError("ccc undefined: both series constant with equal means");
  }
  Tensor mean_x = mean(x);
  Tensor mean_y = mean(y);
  Tensor dx = sub(x, mean_x);
  Tensor dy = sub(y, mean_y);
  Tensor var_x = mean(mul(dx, dx));
  Tensor var_y = mean(mul(dy, dy));
  Tensor cov = mean(mul(dx, dy));
  Tensor gap = sub(mean_x, mean_y);
  Tensor denom = add(add(var_x, var_y), mul(gap, gap));
  return divide(cmul(cov, 2.0), denom);
}

Tensor ccc_loss(const Tensor& pred, const Tensor& gold, const std::vector<std::uint8_t>* mask) {
  if (pred.ndim() != 2 || pred.shape() != gold.shape() || pred.dim(1) != 3) {
    throw DimensionError("ccc_loss expects matching T x 3 matrices, got " +
                         shape_str(pred.shape()) + " and " + shape_str(gold.shape()));
  }
  if (pred.dim(0) < 2) throw ArgumentError("ccc_loss needs at least 2 frames");
  Tensor p = valid_rows(pred, mask);
  Tensor g = valid_rows(gold, mask);
  Tensor total;
  for (int d = 0; d < 3; ++d) {
    Tensor c;
    try {
      c = ccc(column(p, d), column(g, d));
    } catch (const DegenerateError&) {
      throw DegenerateError(std::string("ccc degenerate for dimension '") + kAffectDimNames[d] +
                            "'");
    }
    Tensor term = sub(Tensor::scalar(1.0), c);
    total = (d == 0) ? term : add(total, term);
  }
  return cmul(total, 1.0 / 3.0);
}

CccReport ccc_report(const Tensor& pred, const Tensor& gold,
                     const std::vector<std::uint8_t>* mask) {
  if (pred.ndim() != 2 || pred.shape() != gold.shape() || pred.dim(1) != 3) {
    throw DimensionError("ccc_report expects matching T x 3 matrices, got " +
                         shape_str(pred.shape()) + " and " + shape_str(gold.shape()));
  }
  if (pred.dim(0) < 2) throw ArgumentError("ccc_report needs at least 2 frames");
  Tensor p = valid_rows(pred, mask).detached();
  Tensor g = valid_rows(gold, mask).detached();
  CccReport report;
  for (int d = 0; d < 3; ++d) {
    std::vector<double> xs, ys;
    const int t = p.dim(0);
    xs.reserve(static_cast<std::size_t>(t));
    ys.reserve(static_cast<std::size_t>(t));
    for (int i = 0; i < t; ++i) {
      xs.push_back(p.at(i, d));
      ys.push_back(g.at(i, d));
    }
    const double denom = denom_value(xs, ys);
    if (denom < kDegenerateFloor) {
      report.per_dim[static_cast<std::size_t>(d)] = 0.0;
      report.degenerate[static_cast<std::size_t>(d)] = true;
      continue;
    }
    const double n = static_cast<double>(t);
    double mx = 0.0, my = 0.0;
    for (double v : xs) mx += v;
    for (double v : ys) my += v;
    mx /= n;
    my /= n;
    double cov = 0.0;
    for (int i = 0; i < t; ++i) cov += (xs[static_cast<std::size_t>(i)] - mx) * (ys[static_cast<std::size_t>(i)] - my);
    cov /= n;
    report.per_dim[static_cast<std::size_t>(d)] = 2.0 * cov / denom;
  }
  report.mean = (report.per_dim[0] + report.per_dim[1] + report.per_dim[2]) / 3.0;
  return report;
}

}  // namespace affect

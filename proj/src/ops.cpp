#include "affect/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>

namespace affect {

namespace {

using Buf = std::shared_ptr<const std::vector<double>>;

std::string two_shapes(const char* op, const Tensor& a, const Tensor& b) {
  return std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape());
}

// c(m x n) += a(m x k) * b(k x n)
void mm_nn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double av = ai[l];
      const double* bl = b + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bl[j];
    }
  }
}

// c(m x k) += a(m x n) * b(k x n)^T
void mm_nt_acc(const double* a, const double* b, double* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * n;
    double* ci = c + static_cast<std::size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const double* bl = b + static_cast<std::size_t>(l) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += ai[j] * bl[j];
      ci[l] += acc;
    }
  }
}

// c(k x n) += a(m x k)^T * b(m x n)
void mm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    const double* bi = b + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double av = ai[l];
      double* cl = c + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) cl[j] += av * bi[j];
    }
  }
}

struct BinShape {
  int n = 0;
  bool a_scalar = false;
  bool b_scalar = false;
  Shape out;
};

BinShape binary_shape(const char* op, const Tensor& a, const Tensor& b) {
  BinShape s;
  if (a.shape() == b.shape()) {
    s.n = a.size();
    s.out = a.shape();
  } else if (a.size() == 1) {
    s.n = b.size();
    s.a_scalar = true;
    s.out = b.shape();
  } else if (b.size() == 1) {
    s.n = a.size();
    s.b_scalar = true;
    s.out = a.shape();
  } else {
    throw DimensionError(two_shapes(op, a, b) + " are incompatible");
  }
  return s;
}

void require_matrix(const char* op, const Tensor& m) {
  if (m.ndim() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(m.shape()));
}

// Adds src into the slot of `id`; when the destination is a broadcast scalar
// the contribution is the sum of src.
void pull_into(Tape& t, int id, bool scalar_dst, std::span<const double> src) {
  auto dst = t.slot(id);
  if (scalar_dst) {
    double acc = 0.0;
    for (double v : src) acc += v;
    dst[0] += acc;
  } else {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || (b.ndim() != 2 && b.ndim() != 1)) {
    throw DimensionError(two_shapes("matmul", a, b) + " are not matrix-compatible");
  }
  const int m = a.dim(0);
  const int k = a.dim(1);
  const bool vec = b.ndim() == 1;
  const int kb = b.dim(0);
  const int n = vec ? 1 : b.dim(1);
  if (k != kb) throw DimensionError(two_shapes("matmul", a, b) + " have mismatched inner dimensions");

  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  mm_nn_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  Shape out_shape = vec ? Shape{m} : Shape{m, n};

  Tape* tp = common_tape({&a, &b});
  if (!tp) return Tensor::from_raw(std::move(out_shape), std::move(out));

  Buf ab = a.buffer(), bb = b.buffer();
  const int an = a.node(), bn = b.node();
  return tp->emit(std::move(out_shape), std::move(out), {an, bn},
                  [=](Tape& t, std::span<const double> g) {
                    if (an >= 0) mm_nt_acc(g.data(), bb->data(), t.slot(an).data(), m, n, k);
                    if (bn >= 0) mm_tn_acc(ab->data(), g.data(), t.slot(bn).data(), m, k, n);
                  });
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  const auto src = a.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j) * m + i] = src[static_cast<std::size_t>(i) * n + j];

  Tape* tp = common_tape({&a});
  if (!tp) return Tensor::from_raw({n, m}, std::move(out));
  const int an = a.node();
  return tp->emit({n, m}, std::move(out), {an}, [=](Tape& t, std::span<const double> g) {
    if (an < 0) return;
    auto dst = t.slot(an);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) dst[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 1 || b.ndim() != 1 || a.size() != b.size()) {
    throw DimensionError(two_shapes("dot", a, b) + " are not equal-length vectors");
  }
  const int n = a.size();
  double acc = 0.0;
  const auto ad = a.data(), bd = b.data();
  for (int i = 0; i < n; ++i) acc += ad[i] * bd[i];

  Tape* tp = common_tape({&a, &b});
  if (!tp) return Tensor::from_raw({1}, {acc});
  Buf ab = a.buffer(), bb = b.buffer();
  const int an = a.node(), bn = b.node();
  return tp->emit({1}, {acc}, {an, bn}, [=](Tape& t, std::span<const double> g) {
    const double gv = g[0];
    if (an >= 0) {
      auto dst = t.slot(an);
      for (int i = 0; i < n; ++i) dst[i] += gv * (*bb)[i];
    }
    if (bn >= 0) {
      auto dst = t.slot(bn);
      for (int i = 0; i < n; ++i) dst[i] += gv * (*ab)[i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const BinShape s = binary_shape("add", a, b);
  const auto ad = a.data(), bd = b.data();
  std::vector<double> out(static_cast<std::size_t>(s.n));
  for (int i = 0; i < s.n; ++i) out[i] = ad[s.a_scalar ? 0 : i] + bd[s.b_scalar ? 0 : i];

  Tape* tp = common_tape({&a, &b});
  if (!tp) return Tensor::from_raw(s.out, std::move(out));
  const int an = a.node(), bn = b.node();
  const bool as = s.a_scalar, bs = s.b_scalar;
  return tp->emit(s.out, std::move(out), {an, bn}, [=](Tape& t, std::span<const double> g) {
    if (an >= 0) pull_into(t, an, as, g);
    if (bn >= 0) pull_into(t, bn, bs, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const BinShape s = binary_shape("sub", a, b);
  const auto ad = a.data(), bd = b.data();
  std::vector<double> out(static_cast<std::size_t>(s.n));
  for (int i = 0; i < s.n; ++i) out[i] = ad[s.a_scalar ? 0 : i] - bd[s.b_scalar ? 0 : i];

  Tape* tp = common_tape({&a, &b});
  if (!tp) return Tensor::from_raw(s.out, std::move(out));
  const int an = a.node(), bn = b.node();
  const bool as = s.a_scalar, bs = s.b_scalar;
  return tp->emit(s.out, std::move(out), {an, bn}, [=](Tape& t, std::span<const double> g) {
    if (an >= 0) pull_into(t, an, as, g);
    if (bn >= 0) {
      auto dst = t.slot(bn);
      if (bs) {
        double acc = 0.0;
        for (double v : g) acc += v;
        dst[0] -= acc;
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] -= g[i];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const BinShape s = binary_shape("mul", a, b);
  const auto ad = a.data(), bd = b.data();
  std::vector<double> out(static_cast<std::size_t>(s.n));
  for (int i = 0; i < s.n; ++i) out[i] = ad[s.a_scalar ? 0 : i] * bd[s.b_scalar ? 0 : i];

  Tape* tp = common_tape({&a, &b});
  if (!tp) return Tensor::from_raw(s.out, std::move(out));
  Buf ab = a.buffer(), bb = b.buffer();
  const int an = a.node(), bn = b.node();
  const bool as = s.a_scalar, bs = s.b_scalar;
  const int n = s.n;
  return tp->emit(s.out, std::move(out), {an, bn}, [=](Tape& t, std::span<const double> g) {
    if (an >= 0) {
      auto dst = t.slot(an);
      if (as) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += g[i] * (*bb)[bs ? 0 : i];
        dst[0] += acc;
      } else {
        for (int i = 0; i < n; ++i) dst[i] += g[i] * (*bb)[bs ? 0 : i];
      }
    }
    if (bn >= 0) {
      auto dst = t.slot(bn);
      if (bs) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += g[i] * (*ab)[as ? 0 : i];
        dst[0] += acc;
      } else {
        for (int i = 0; i < n; ++i) dst[i] += g[i] * (*ab)[as ? 0 : i];
      }
    }
  });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  const BinShape s = binary_shape("divide", a, b);
  const auto ad = a.data(), bd = b.data();
  std::vector<double> out(static_cast<std::size_t>(s.n));
  for (int i = 0; i < s.n; ++i) out[i] = ad[s.a_scalar ? 0 : i] / bd[s.b_scalar ? 0 : i];

  Tape* tp = common_tape({&a, &b});
  if (!tp) return Tensor::from_raw(s.out, std::move(out));
  Buf ab = a.buffer(), bb = b.buffer();
  const int an = a.node(), bn = b.node();
  const bool as = s.a_scalar, bs = s.b_scalar;
  const int n = s.n;
  return tp->emit(s.out, std::move(out), {an, bn}, [=](Tape& t, std::span<const double> g) {
    if (an >= 0) {
      auto dst = t.slot(an);
      if (as) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += g[i] / (*bb)[bs ? 0 : i];
        dst[0] += acc;
      } else {
        for (int i = 0; i < n; ++i) dst[i] += g[i] / (*bb)[bs ? 0 : i];
      }
    }
    if (bn >= 0) {
      auto dst = t.slot(bn);
      for (int i = 0; i < n; ++i) {
        const double bv = (*bb)[bs ? 0 : i];
        const double contrib = -g[i] * (*ab)[as ? 0 : i] / (bv * bv);
        dst[bs ? 0 : i] += contrib;
      }
    }
  });
}

Tensor cmul(const Tensor& a, double c) {
  if (!std::isfinite(c)) throw DataError("cmul: non-finite constant");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= c;

  Tape* tp = common_tape({&a});
  if (!tp) return Tensor::from_raw(a.shape(), std::move(out));
  const int an = a.node();
  return tp->emit(a.shape(), std::move(out), {an}, [=](Tape& t, std::span<const double> g) {
    if (an < 0) return;
    auto dst = t.slot(an);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += c * g[i];
  });
}

Tensor neg(const Tensor& a) { return cmul(a, -1.0); }

namespace {

// Emits a unary node whose derivative is a function of the *output* value.
// The output buffer only exists after emit(), so the closure holds a slot
// that is filled immediately afterwards (backward runs much later).
template <typename DFromY>
Tensor emit_unary_out(Tape* tp, const Tensor& a, Shape shape, std::vector<double> out, DFromY dy) {
  if (!tp) return Tensor::from_raw(std::move(shape), std::move(out));
  const int an = a.node();
  auto hold = std::make_shared<Buf>();
  Tensor res = tp->emit(std::move(shape), std::move(out), {an},
                        [an, hold, dy](Tape& t, std::span<const double> g) {
                          if (an < 0) return;
                          const std::vector<double>& y = **hold;
                          auto dst = t.slot(an);
                          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * dy(y[i]);
                        });
  *hold = res.buffer();
  return res;
}

}  // namespace

Tensor relu(const Tensor& a) {
  std::vector<double> out(static_cast<std::size_t>(a.size()));
  const auto ad = a.data();
  for (int i = 0; i < a.size(); ++i) out[i] = ad[i] > 0.0 ? ad[i] : 0.0;
  return emit_unary_out(common_tape({&a}), a, a.shape(), std::move(out),
                        [](double y) { return y > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  std::vector<double> out(static_cast<std::size_t>(a.size()));
  const auto ad = a.data();
  for (int i = 0; i < a.size(); ++i) out[i] = ad[i] > 0.0 ? ad[i] : slope * ad[i];
  return emit_unary_out(common_tape({&a}), a, a.shape(), std::move(out),
                        [slope](double y) { return y > 0.0 ? 1.0 : slope; });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(static_cast<std::size_t>(a.size()));
  const auto ad = a.data();
  for (int i = 0; i < a.size(); ++i) out[i] = std::tanh(ad[i]);
  return emit_unary_out(common_tape({&a}), a, a.shape(), std::move(out),
                        [](double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(static_cast<std::size_t>(a.size()));
  const auto ad = a.data();
  for (int i = 0; i < a.size(); ++i) {
    const double x = ad[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return emit_unary_out(common_tape({&a}), a, a.shape(), std::move(out),
                        [](double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& a) {
  const auto ad = a.data();
  std::vector<double> out(static_cast<std::size_t>(a.size()));
  for (int i = 0; i < a.size(); ++i) {
    if (!(ad[i] > 0.0)) throw DataError("log: non-positive input " + std::to_string(ad[i]));
    out[i] = std::log(ad[i]);
  }
  Tape* tp = common_tape({&a});
  if (!tp) return Tensor::from_raw(a.shape(), std::move(out));
  Buf ab = a.buffer();
  const int an = a.node();
  return tp->emit(a.shape(), std::move(out), {an}, [=](Tape& t, std::span<const double> g) {
    if (an < 0) return;
    auto dst = t.slot(an);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] / (*ab)[i];
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw ArgumentError("clamp: lo > hi");
  const auto ad = a.data();
  std::vector<double> out(static_cast<std::size_t>(a.size()));
  for (int i = 0; i < a.size(); ++i) out[i] = std::min(hi, std::max(lo, ad[i]));

  Tape* tp = common_tape({&a});
  if (!tp) return Tensor::from_raw(a.shape(), std::move(out));
  Buf ab = a.buffer();
  const int an = a.node();
  return tp->emit(a.shape(), std::move(out), {an}, [=](Tape& t, std::span<const double> g) {
    if (an < 0) return;
    auto dst = t.slot(an);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = (*ab)[i];
      if (x >= lo && x <= hi) dst[i] += g[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tape* tp = common_tape({&a});
  if (!tp) return Tensor::from_raw({1}, {acc});
  const int an = a.node();
  const int n = a.size();
  return tp->emit({1}, {acc}, {an}, [=](Tape& t, std::span<const double> g) {
    if (an < 0) return;
    auto dst = t.slot(an);
    for (int i = 0; i < n; ++i) dst[i] += g[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ArgumentError("mean: empty tensor");
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  acc /= a.size();
  Tape* tp = common_tape({&a});
  if (!tp) return Tensor::from_raw({1}, {acc});
  const int an = a.node();
  const int n = a.size();
  return tp->emit({1}, {acc}, {an}, [=](Tape& t, std::span<const double> g) {
    if (an < 0) return;
    auto dst = t.slot(an);
    const double gv = g[0] / n;
    for (int i = 0; i < n; ++i) dst[i] += gv;
  });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ArgumentError("concat: no operands");
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() != 1) throw DimensionError("concat: expected vectors, got " + shape_str(p.shape()));
    total += p.size();
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total));
  Tape* tp = nullptr;
  std::vector<int> ids;
  std::vector<int> offsets;
  std::vector<int> sizes;
  for (const Tensor& p : parts) {
    if (p.on_tape()) {
      if (tp && tp != p.tape()) throw ArgumentError("operands belong to different tapes");
      tp = p.tape();
    }
    offsets.push_back(static_cast<int>(out.size()));
    sizes.push_back(p.size());
    ids.push_back(p.node());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  if (!tp) return Tensor::from_raw({total}, std::move(out));
  return tp->emit({total}, std::move(out), ids,
                  [ids, offsets, sizes](Tape& t, std::span<const double> g) {
                    for (std::size_t p = 0; p < ids.size(); ++p) {
                      if (ids[p] < 0) continue;
                      auto dst = t.slot(ids[p]);
                      for (int i = 0; i < sizes[p]; ++i) dst[i] += g[offsets[p] + i];
                    }
                  });
}

Tensor index(const Tensor& v, int i) {
  if (v.ndim() != 1) throw DimensionError("index: expected a vector, got " + shape_str(v.shape()));
  if (i < 0 || i >= v.size()) throw ArgumentError("index: out of range");
  Tape* tp = common_tape({&v});
  if (!tp) return Tensor::from_raw({1}, {v.at(i)});
  const int vn = v.node();
  return tp->emit({1}, {v.at(i)}, {vn}, [=](Tape& t, std::span<const double> g) {
    if (vn >= 0) t.slot(vn)[i] += g[0];
  });
}

Tensor row(const Tensor& m, int i) {
  require_matrix("row", m);
  if (i < 0 || i >= m.dim(0)) throw ArgumentError("row: index out of range");
  const int n = m.dim(1);
  const auto src = m.data().subspan(static_cast<std::size_t>(i) * n, static_cast<std::size_t>(n));
  std::vector<double> out(src.begin(), src.end());
  Tape* tp = common_tape({&m});
  if (!tp) return Tensor::from_raw({n}, std::move(out));
  const int mn = m.node();
  return tp->emit({n}, std::move(out), {mn}, [=](Tape& t, std::span<const double> g) {
    if (mn < 0) return;
    auto dst = t.slot(mn).subspan(static_cast<std::size_t>(i) * n, static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) dst[j] += g[j];
  });
}

Tensor column(const Tensor& m, int j) {
  require_matrix("column", m);
  if (j < 0 || j >= m.dim(1)) throw ArgumentError("column: index out of range");
  const int rows = m.dim(0), n = m.dim(1);
  std::vector<double> out(static_cast<std::size_t>(rows));
  const auto src = m.data();
  for (int i = 0; i < rows; ++i) out[i] = src[static_cast<std::size_t>(i) * n + j];
  Tape* tp = common_tape({&m});
  if (!tp) return Tensor::from_raw({rows}, std::move(out));
  const int mn = m.node();
  return tp->emit({rows}, std::move(out), {mn}, [=](Tape& t, std::span<const double> g) {
    if (mn < 0) return;
    auto dst = t.slot(mn);
    for (int i = 0; i < rows; ++i) dst[static_cast<std::size_t>(i) * n + j] += g[i];
  });
}

Tensor slice_rows(const Tensor& m, int begin, int end) {
  require_matrix("slice_rows", m);
  if (begin < 0 || end > m.dim(0) || begin >= end) throw ArgumentError("slice_rows: bad range");
  const int n = m.dim(1);
  const int rows = end - begin;
  const auto src = m.data().subspan(static_cast<std::size_t>(begin) * n, static_cast<std::size_t>(rows) * n);
  std::vector<double> out(src.begin(), src.end());
  Tape* tp = common_tape({&m});
  if (!tp) return Tensor::from_raw({rows, n}, std::move(out));
  const int mn = m.node();
  return tp->emit({rows, n}, std::move(out), {mn}, [=](Tape& t, std::span<const double> g) {
    if (mn < 0) return;
    auto dst = t.slot(mn).subspan(static_cast<std::size_t>(begin) * n);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ArgumentError("stack_rows: no rows");
  const int n = rows[0].size();
  const int m = static_cast<int>(rows.size());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m) * n);
  Tape* tp = nullptr;
  std::vector<int> ids;
  for (const Tensor& r : rows) {
    if (r.ndim() != 1 || r.size() != n) {
      throw DimensionError("stack_rows: row shape " + shape_str(r.shape()) + " differs from [" +
                           std::to_string(n) + "]");
    }
    if (r.on_tape()) {
      if (tp && tp != r.tape()) throw ArgumentError("operands belong to different tapes");
      tp = r.tape();
    }
    ids.push_back(r.node());
    out.insert(out.end(), r.data().begin(), r.data().end());
  }
  if (!tp) return Tensor::from_raw({m, n}, std::move(out));
  return tp->emit({m, n}, std::move(out), ids, [ids, n](Tape& t, std::span<const double> g) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0) continue;
      auto dst = t.slot(ids[i]);
      const double* gi = g.data() + i * static_cast<std::size_t>(n);
      for (int j = 0; j < n; ++j) dst[j] += gi[j];
    }
  });
}

Tensor add_rowwise(const Tensor& m, const Tensor& v) {
  require_matrix("add_rowwise", m);
  if (v.ndim() != 1 || v.size() != m.dim(1)) {
    throw DimensionError(two_shapes("add_rowwise", m, v) + " are incompatible");
  }
  const int rows = m.dim(0), n = m.dim(1);
  std::vector<double> out(m.data().begin(), m.data().end());
  const auto vd = v.data();
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] += vd[j];

  Tape* tp = common_tape({&m, &v});
  if (!tp) return Tensor::from_raw({rows, n}, std::move(out));
  const int mn = m.node(), vn = v.node();
  return tp->emit({rows, n}, std::move(out), {mn, vn}, [=](Tape& t, std::span<const double> g) {
    if (mn >= 0) {
      auto dst = t.slot(mn);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
    if (vn >= 0) {
      auto dst = t.slot(vn);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < n; ++j) dst[j] += g[static_cast<std::size_t>(i) * n + j];
    }
  });
}

Tensor bin_mean_rows(const Tensor& m, const std::vector<int>& bounds) {
  require_matrix("bin_mean_rows", m);
  if (bounds.size() < 2 || bounds.front() != 0 || bounds.back() != m.dim(0)) {
    throw ArgumentError("bin_mean_rows: bounds must start at 0 and end at the row count");
  }
  for (std::size_t i = 1; i < bounds.size(); ++i) {
    if (bounds[i] <= bounds[i - 1]) throw ArgumentError("bin_mean_rows: bounds must be increasing");
  }
  const int n = m.dim(1);
  const int bins = static_cast<int>(bounds.size()) - 1;
  std::vector<double> out(static_cast<std::size_t>(bins) * n, 0.0);
  const auto src = m.data();
  for (int b = 0; b < bins; ++b) {
    const int cnt = bounds[b + 1] - bounds[b];
    double* ob = out.data() + static_cast<std::size_t>(b) * n;
    for (int r = bounds[b]; r < bounds[b + 1]; ++r) {
      const double* sr = src.data() + static_cast<std::size_t>(r) * n;
      for (int j = 0; j < n; ++j) ob[j] += sr[j];
    }
    for (int j = 0; j < n; ++j) ob[j] /= cnt;
  }

  Tape* tp = common_tape({&m});
  if (!tp) return Tensor::from_raw({bins, n}, std::move(out));
  const int mn = m.node();
  const std::vector<int> bd = bounds;
  return tp->emit({bins, n}, std::move(out), {mn}, [=](Tape& t, std::span<const double> g) {
    if (mn < 0) return;
    auto dst = t.slot(mn);
    for (int b = 0; b < bins; ++b) {
      const int cnt = bd[b + 1] - bd[b];
      const double* gb = g.data() + static_cast<std::size_t>(b) * n;
      for (int r = bd[b]; r < bd[b + 1]; ++r) {
        double* dr = dst.data() + static_cast<std::size_t>(r) * n;
        for (int j = 0; j < n; ++j) dr[j] += gb[j] / cnt;
      }
    }
  });
}

Tensor softmax(const Tensor& logits) {
  if (logits.ndim() != 1 || logits.size() == 0) {
    throw ArgumentError("softmax: expected a nonempty vector, got " + shape_str(logits.shape()));
  }
  const auto ld = logits.data();
  const double mx = *std::max_element(ld.begin(), ld.end());
  std::vector<double> out(static_cast<std::size_t>(logits.size()));
  double z = 0.0;
  for (int i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(ld[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;

  Tape* tp = common_tape({&logits});
  if (!tp) return Tensor::from_raw(logits.shape(), std::move(out));
  const int ln = logits.node();
  auto hold = std::make_shared<Buf>();
  Tensor res = tp->emit(logits.shape(), std::move(out), {ln},
                        [ln, hold](Tape& t, std::span<const double> g) {
                          if (ln < 0) return;
                          const std::vector<double>& y = **hold;
                          auto dst = t.slot(ln);
                          double gy = 0.0;
                          for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
                          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += y[i] * (g[i] - gy);
                        });
  *hold = res.buffer();
  return res;
}

namespace {

struct ConvGeometry {
  int l_out = 0;
  int pad_left = 0;
};

ConvGeometry conv_geometry(int length, int kernel, int stride, Pad padding) {
  ConvGeometry g;
  if (padding == Pad::same) {
    g.l_out = (length + stride - 1) / stride;
    const int total = std::max(0, (g.l_out - 1) * stride + kernel - length);
    g.pad_left = total / 2;
    if (kernel > length + total) {
      throw DimensionError("conv1d: kernel " + std::to_string(kernel) + " longer than padded input " +
                           std::to_string(length + total));
    }
  } else {
    if (kernel > length) {
      throw DimensionError("conv1d: kernel " + std::to_string(kernel) + " longer than input " +
                           std::to_string(length));
    }
    g.l_out = (length - kernel) / stride + 1;
    g.pad_left = 0;
  }
  return g;
}

}  // namespace

Tensor conv1d(const Tensor& input, const Tensor& kernels, int stride, Pad padding) {
  if (stride < 1) throw ArgumentError("conv1d: stride must be >= 1");
  if (input.ndim() != 2 || kernels.ndim() != 3) {
    throw DimensionError(two_shapes("conv1d", input, kernels) +
                         " (want C_in x L input and C_out x C_in x K kernels)");
  }
  const int c_in = input.dim(0), length = input.dim(1);
  const int c_out = kernels.dim(0), k_c_in = kernels.dim(1), k = kernels.dim(2);
  if (k_c_in != c_in) {
    throw DimensionError(two_shapes("conv1d", input, kernels) + " disagree on input channels");
  }
  const ConvGeometry geo = conv_geometry(length, k, stride, padding);
  const int l_out = geo.l_out, pad = geo.pad_left;

  std::vector<double> out(static_cast<std::size_t>(c_out) * l_out, 0.0);
  const double* x = input.data().data();
  const double* w = kernels.data().data();
  for (int co = 0; co < c_out; ++co) {
    double* o = out.data() + static_cast<std::size_t>(co) * l_out;
    for (int ci = 0; ci < c_in; ++ci) {
      const double* xi = x + static_cast<std::size_t>(ci) * length;
      const double* wk = w + (static_cast<std::size_t>(co) * c_in + ci) * k;
      for (int kk = 0; kk < k; ++kk) {
        const int off = kk - pad;
        int t0 = off < 0 ? (-off + stride - 1) / stride : 0;
        int t1 = (length - 1 - off) / stride;
        if (t1 > l_out - 1) t1 = l_out - 1;
        if (t0 > t1) continue;
        const double wv = wk[kk];
        const double* xp = xi + (static_cast<std::size_t>(t0) * stride + off);
        if (stride == 1) {
          const int cnt = t1 - t0 + 1;
          double* op = o + t0;
          for (int t = 0; t < cnt; ++t) op[t] += wv * xp[t];
        } else {
          for (int t = t0, u = 0; t <= t1; ++t, u += stride) o[t] += wv * xp[u];
        }
      }
    }
  }

  Tape* tp = common_tape({&input, &kernels});
  if (!tp) return Tensor::from_raw({c_out, l_out}, std::move(out));
  Buf xb = input.buffer(), wb = kernels.buffer();
  const int xn = input.node(), wn = kernels.node();
  return tp->emit({c_out, l_out}, std::move(out), {xn, wn}, [=](Tape& t, std::span<const double> g) {
    const double* xd = xb->data();
    const double* wd = wb->data();
    double* dx = xn >= 0 ? t.slot(xn).data() : nullptr;
    double* dw = wn >= 0 ? t.slot(wn).data() : nullptr;
    for (int co = 0; co < c_out; ++co) {
      const double* go = g.data() + static_cast<std::size_t>(co) * l_out;
      for (int ci = 0; ci < c_in; ++ci) {
        const double* xi = xd + static_cast<std::size_t>(ci) * length;
        const double* wk = wd + (static_cast<std::size_t>(co) * c_in + ci) * k;
        double* dxi = dx ? dx + static_cast<std::size_t>(ci) * length : nullptr;
        double* dwk = dw ? dw + (static_cast<std::size_t>(co) * c_in + ci) * k : nullptr;
        for (int kk = 0; kk < k; ++kk) {
          const int off = kk - pad;
          int t0 = off < 0 ? (-off + stride - 1) / stride : 0;
          int t1 = (length - 1 - off) / stride;
          if (t1 > l_out - 1) t1 = l_out - 1;
          if (t0 > t1) continue;
          const int cnt = t1 - t0 + 1;
          const std::size_t x0 = static_cast<std::size_t>(t0) * stride + off;
          if (dwk) {
            double acc = 0.0;
            if (stride == 1) {
              const double* xp = xi + x0;
              const double* gp = go + t0;
              for (int t = 0; t < cnt; ++t) acc += gp[t] * xp[t];
            } else {
              for (int t = t0, u = 0; t <= t1; ++t, u += stride) acc += go[t] * xi[x0 + u];
            }
            dwk[kk] += acc;
          }
          if (dxi) {
            const double wv = wk[kk];
            if (stride == 1) {
              double* xp = dxi + x0;
              const double* gp = go + t0;
              for (int t = 0; t < cnt; ++t) xp[t] += wv * gp[t];
            } else {
              for (int t = t0, u = 0; t <= t1; ++t, u += stride) dxi[x0 + u] += wv * go[t];
            }
          }
        }
      }
    }
  });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require_matrix("add_channel_bias", x);
  if (bias.ndim() != 1 || bias.size() != x.dim(0)) {
    throw DimensionError(two_shapes("add_channel_bias", x, bias) + " are incompatible");
  }
  const int c = x.dim(0), l = x.dim(1);
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto bd = bias.data();
  for (int ci = 0; ci < c; ++ci) {
    double* o = out.data() + static_cast<std::size_t>(ci) * l;
    for (int t = 0; t < l; ++t) o[t] += bd[ci];
  }
  Tape* tp = common_tape({&x, &bias});
  if (!tp) return Tensor::from_raw({c, l}, std::move(out));
  const int xn = x.node(), bn = bias.node();
  return tp->emit({c, l}, std::move(out), {xn, bn}, [=](Tape& t, std::span<const double> g) {
    if (xn >= 0) {
      auto dst = t.slot(xn);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
    if (bn >= 0) {
      auto dst = t.slot(bn);
      for (int ci = 0; ci < c; ++ci) {
        const double* gi = g.data() + static_cast<std::size_t>(ci) * l;
        double acc = 0.0;
        for (int tt = 0; tt < l; ++tt) acc += gi[tt];
        dst[ci] += acc;
      }
    }
  });
}

Tensor maxpool1d(const Tensor& input, int kernel, int stride) {
  require_matrix("maxpool1d", input);
  if (stride < 1) throw ArgumentError("maxpool1d: stride must be >= 1");
  const int c = input.dim(0), l = input.dim(1);
  if (kernel < 1 || kernel > l) {
    throw DimensionError("maxpool1d: kernel " + std::to_string(kernel) + " exceeds input length " +
                         std::to_string(l));
  }
  const int l_out = (l - kernel) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(c) * l_out);
  auto arg = std::make_shared<std::vector<int>>(static_cast<std::size_t>(c) * l_out);
  const auto src = input.data();
  for (int ci = 0; ci < c; ++ci) {
    const double* xi = src.data() + static_cast<std::size_t>(ci) * l;
    for (int t = 0; t < l_out; ++t) {
      const int w0 = t * stride;
      double best = xi[w0];
      int bi = w0;
      for (int u = 1; u < kernel; ++u) {
        if (xi[w0 + u] > best) {  // first occurrence wins ties
          best = xi[w0 + u];
          bi = w0 + u;
        }
      }
      out[static_cast<std::size_t>(ci) * l_out + t] = best;
      (*arg)[static_cast<std::size_t>(ci) * l_out + t] = bi;
    }
  }
  Tape* tp = common_tape({&input});
  if (!tp) return Tensor::from_raw({c, l_out}, std::move(out));
  const int xn = input.node();
  return tp->emit({c, l_out}, std::move(out), {xn}, [=](Tape& t, std::span<const double> g) {
    if (xn < 0) return;
    auto dst = t.slot(xn);
    for (int ci = 0; ci < c; ++ci) {
      const double* gi = g.data() + static_cast<std::size_t>(ci) * l_out;
      double* di = dst.data() + static_cast<std::size_t>(ci) * l;
      const int* ai = arg->data() + static_cast<std::size_t>(ci) * l_out;
      for (int tt = 0; tt < l_out; ++tt) di[ai[tt]] += gi[tt];
    }
  });
}

Tensor dropout(const Tensor& x, double p, bool train_mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ArgumentError("dropout: p must be in [0, 1)");
  if (!train_mode || p == 0.0) return x;

  const double scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(x.size()));
  std::vector<double> out(static_cast<std::size_t>(x.size()));
  const auto xd = x.data();
  for (int i = 0; i < x.size(); ++i) {
    const bool keep = rng.uniform() >= p;
    (*mask)[i] = keep;
    out[i] = keep ? xd[i] * scale : 0.0;
  }
  Tape* tp = common_tape({&x});
  if (!tp) return Tensor::from_raw(x.shape(), std::move(out));
  const int xn = x.node();
  return tp->emit(x.shape(), std::move(out), {xn}, [=](Tape& t, std::span<const double> g) {
    if (xn < 0) return;
    auto dst = t.slot(xn);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if ((*mask)[i]) dst[i] += g[i] * scale;
    }
  });
}

}  // namespace affect

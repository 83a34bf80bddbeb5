#pragma once

#include "affect/tensor.hpp"

namespace affect {

// Full singular value decomposition M = U · diag(sigma) · Vᵀ with U (p×p)
// and V (q×q) orthogonal and sigma (length min(p,q)) nonnegative and
// descending. diag(sigma) is understood as the p×q rectangular diagonal.
struct Svd {
  Tensor u;
  Tensor sigma;
  Tensor v;
};

// One-sided Jacobi. Dense, double precision, intended for matrices up to
// ~1024 per side. Throws NumericError if the rotation sweeps fail to
// converge (reports the worst remaining off-diagonal correlation).
Svd svd(const Tensor& m);

}  // namespace affect

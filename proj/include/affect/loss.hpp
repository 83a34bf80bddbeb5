#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "affect/tensor.hpp"

namespace affect {

inline constexpr std::array<const char*, 3> kAffectDimNames = {"arousal", "valence", "liking"};

// Per-frame affect annotations or predictions: T x 3 matrix with columns
// (arousal, valence, liking). An empty mask means every frame is valid;
// otherwise mask[i] != 0 marks frame i as valid.
struct AffectSequence {
  Tensor values;
  std::vector<std::uint8_t> mask;
};

// Concordance correlation between two equal-length series (vectors, length
// >= 2): 2*cov / (var_x + var_y + (mean_x - mean_y)^2) with population (1/N)
// moments. Differentiable when the inputs live on a tape. Throws
// DegenerateError when the denominator falls below 1e-12 (both series
// constant with equal means), where the coefficient is undefined.
Tensor ccc(const Tensor& x, const Tensor& y);

// Mean over the three affect dimensions of (1 - ccc), restricted to valid
// frames (mask == nullptr means all valid; needs >= 2 valid frames).
// A degenerate dimension raises DegenerateError naming the dimension.
Tensor ccc_loss(const Tensor& pred, const Tensor& gold,
                const std::vector<std::uint8_t>* mask = nullptr);

// Evaluation-time counterpart: never throws on degenerate input, reporting
// CCC 0 for the affected dimension and flagging it instead.
struct CccReport {
  std::array<double, 3> per_dim{};
  std::array<bool, 3> degenerate{};
  double mean = 0.0;
};
CccReport ccc_report(const Tensor& pred, const Tensor& gold,
                     const std::vector<std::uint8_t>* mask = nullptr);

}  // namespace affect

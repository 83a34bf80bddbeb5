#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace affect {

struct GradCheckEntry {
  std::string op;
  int cases = 0;
  double worst_rel_err = 0.0;
  bool pass = false;
};

// Central finite-difference validation of every differentiable building
// block (matmul, softmax, conv1d, maxpool1d, LSTM cell, attention_pair,
// disentangled_fuse, ccc_loss) on `cases` random configurations each.
// An op passes when its worst relative error |analytic - numeric| /
// max(1, |analytic|, |numeric|) stays below `tolerance`.
std::vector<GradCheckEntry> run_gradient_suite(int cases, std::uint64_t seed,
                                               double tolerance = 1e-4);

bool gradient_suite_passed(const std::vector<GradCheckEntry>& entries);

}  // namespace affect

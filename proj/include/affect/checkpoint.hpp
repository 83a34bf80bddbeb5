#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "affect/tensor.hpp"

namespace affect {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// A training snapshot: every named tensor (model parameters plus optimizer
// moments under "adam.m."/"adam.v." prefixes), the optimizer step counter,
// the epoch counter, the best dev score seen, the run configuration as a
// JSON string, and the root RNG state. Saved as a little-endian binary
// file; parameters survive a save/load round trip bit-exactly.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_json;
  std::uint64_t rng_state = 0;
  std::int64_t adam_step = 0;
  std::int32_t epoch = 0;       // completed epochs
  double best_dev = -2.0;       // best dev mean CCC so far
  std::vector<std::pair<std::string, Tensor>> tensors;

  // nullptr when the name is absent.
  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace affect

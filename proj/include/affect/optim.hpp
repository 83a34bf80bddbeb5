#pragma once

#include <span>
#include <vector>

#include "affect/tensor.hpp"

namespace affect {

// Adam with bias correction. One instance owns the moment estimates for a
// fixed parameter group; step() expects the same parameters in the same
// order every call (moments are allocated lazily on the first step and
// matched positionally afterwards).
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);

  // Applies one update to every parameter; the step counter advances once
  // per call, not once per tensor.
  void step(std::span<Tensor*> params, std::span<const Tensor> grads);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  long step_count() const { return t_; }

  // Checkpoint access: moments in parameter order, plus the step counter.
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(std::vector<Tensor> m, std::vector<Tensor> v, long t);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Global-norm gradient clipping: if the L2 norm over all gradients exceeds
// max_norm, every gradient is scaled by max_norm / norm. Returns the
// pre-clip norm.
double clip_grad_norm(std::span<Tensor> grads, double max_norm);

}  // namespace affect

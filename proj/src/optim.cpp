#include "affect/optim.hpp"

#include <cmath>

#include "affect/error.hpp"

namespace affect {

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  if (!(lr_ >= 0.0)) throw ArgumentError("Adam: negative learning rate");
}

void Adam::step(std::span<Tensor*> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw ArgumentError("Adam: " + std::to_string(params.size()) + " parameters but " +
                        std::to_string(grads.size()) + " gradients");
  }
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.push_back(Tensor::zeros(p->shape()));
      v_.push_back(Tensor::zeros(p->shape()));
    }
  } else if (m_.size() != params.size()) {
    throw ArgumentError("Adam: parameter group size changed between steps");
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (p.shape() != g.shape() || p.shape() != m_[i].shape()) {
      throw DimensionError("Adam: parameter " + shape_str(p.shape()) + " vs gradient " +
                           shape_str(g.shape()));
    }
    auto pd = p.mutable_data();
    auto md = m_[i].mutable_data();
    auto vd = v_[i].mutable_data();
    const auto gd = g.data();
    for (std::size_t j = 0; j < pd.size(); ++j) {
      md[j] = beta1_ * md[j] + (1.0 - beta1_) * gd[j];
      vd[j] = beta2_ * vd[j] + (1.0 - beta2_) * gd[j] * gd[j];
      const double mhat = md[j] / bc1;
      const double vhat = vd[j] / bc2;
      pd[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::restore(std::vector<Tensor> m, std::vector<Tensor> v, long t) {
  if (m.size() != v.size()) throw ArgumentError("Adam: moment vectors disagree in length");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

double clip_grad_norm(std::span<Tensor> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ArgumentError("clip_grad_norm: max_norm must be positive");
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.mutable_data()) v *= scale;
    }
  }
  return norm;
}

}  // namespace affect

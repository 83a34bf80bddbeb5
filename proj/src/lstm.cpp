#include "affect/lstm.hpp"

#include <cmath>
#include <vector>

#include "affect/error.hpp"
#include "affect/ops.hpp"

namespace affect {

LstmParams LstmParams::init(int input_dim, int hidden_dim, Rng& rng) {
  if (input_dim < 1 || hidden_dim < 1) throw ArgumentError("lstm dims must be positive");
  auto xavier = [&rng](Shape shape, int fan_in) {
    Tensor t = Tensor::zeros(shape);
    const double std = std::sqrt(1.0 / fan_in);
    for (double& v : t.mutable_data()) v = rng.normal(0.0, std);
    return t;
  };
  LstmParams p;
  p.w_x = xavier({4 * hidden_dim, input_dim}, input_dim);
  p.w_h = xavier({4 * hidden_dim, hidden_dim}, hidden_dim);
  p.b = Tensor::zeros({4 * hidden_dim});
  {
    auto bd = p.b.mutable_data();
    for (int i = hidden_dim; i < 2 * hidden_dim; ++i) bd[i] = 1.0;  // forget chunk
  }
  p.w_out = xavier({3, hidden_dim}, hidden_dim);
  p.b_out = Tensor::zeros({3});
  return p;
}

NamedParams LstmParams::named_params() {
  return {{"lstm.w_x", &w_x},
          {"lstm.w_h", &w_h},
          {"lstm.b", &b},
          {"lstm.w_out", &w_out},
          {"lstm.b_out", &b_out}};
}

Tensor lstm_forward(const Tensor& frames, const LstmParams& params) {
  if (frames.ndim() != 2) {
    throw DimensionError("lstm_forward expects a T x d frame matrix, got " +
                         shape_str(frames.shape()));
  }
  if (frames.dim(1) != params.input_dim()) {
    throw DimensionError("lstm input dim " + std::to_string(frames.dim(1)) +
                         " does not match weights (" + std::to_string(params.input_dim()) + ")");
  }
  const int t_len = frames.dim(0);
  const int h_dim = params.hidden_dim();

  Tensor h = Tensor::zeros({h_dim});
  Tensor c = Tensor::zeros({h_dim});
  std::vector<Tensor> outputs;
  outputs.reserve(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    Tensor x = row(frames, t);
    Tensor gates = add(add(matmul(params.w_x, x), matmul(params.w_h, h)), params.b);
    Tensor g4 = gates.reshaped({4, h_dim});
    Tensor i_gate = sigmoid(row(g4, 0));
    Tensor f_gate = sigmoid(row(g4, 1));
    Tensor g_cell = tanh(row(g4, 2));
    Tensor o_gate = sigmoid(row(g4, 3));
    c = add(mul(f_gate, c), mul(i_gate, g_cell));
    h = mul(o_gate, tanh(c));
    outputs.push_back(add(matmul(params.w_out, h), params.b_out));
  }
  return stack_rows(outputs);
}

}  // namespace affect

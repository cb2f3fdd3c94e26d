#include "gw/nn.hpp"

#include <cmath>

#include "gw/errors.hpp"

namespace gw::nn {

Conv2d Conv2d::init(int in_ch, int out_ch, int k, int stride, int padding, std::mt19937& rng) {
  Conv2d c;
  c.weight = tensor_randn({out_ch, in_ch, k, k}, kInitStddev, rng, true);
  c.bias = tensor_zeros({out_ch}, true);
  c.stride = stride;
  c.padding = padding;
  return c;
}

TensorPtr Conv2d::forward(Tape* tape, const TensorPtr& x) const {
  return ops::conv2d(tape, x, weight, bias, stride, padding);
}

ConvTranspose2d ConvTranspose2d::init(int in_ch, int out_ch, int k, int stride, int padding,
                                      std::mt19937& rng) {
  ConvTranspose2d c;
  c.weight = tensor_randn({in_ch, out_ch, k, k}, kInitStddev, rng, true);
  c.bias = tensor_zeros({out_ch}, true);
  c.stride = stride;
  c.padding = padding;
  return c;
}

TensorPtr ConvTranspose2d::forward(Tape* tape, const TensorPtr& x) const {
  return ops::conv2d_transpose(tape, x, weight, bias, stride, padding);
}

Linear Linear::init(int in_f, int out_f, std::mt19937& rng) {
  Linear l;
  l.weight = tensor_randn({out_f, in_f}, kInitStddev, rng, true);
  l.bias = tensor_zeros({out_f}, true);
  return l;
}

TensorPtr Linear::forward(Tape* tape, const TensorPtr& x) const {
  return ops::linear(tape, x, weight, bias);
}

ResidualBlock ResidualBlock::init(int channels, std::mt19937& rng) {
  ResidualBlock r;
  r.c1 = Conv2d::init(channels, channels, 3, 1, 1, rng);
  r.c2 = Conv2d::init(channels, channels, 3, 1, 1, rng);
  return r;
}

TensorPtr ResidualBlock::forward(Tape* tape, const TensorPtr& x) const {
  auto y = ops::leaky_relu(tape, c1.forward(tape, x), kLeakySlope);
  return ops::add(tape, x, c2.forward(tape, y));
}

void append_params(std::vector<TensorPtr>& out, const Conv2d& c) {
  out.push_back(c.weight);
  out.push_back(c.bias);
}

void append_params(std::vector<TensorPtr>& out, const ConvTranspose2d& c) {
  out.push_back(c.weight);
  out.push_back(c.bias);
}

void append_params(std::vector<TensorPtr>& out, const Linear& l) {
  out.push_back(l.weight);
  out.push_back(l.bias);
}

void append_params(std::vector<TensorPtr>& out, const ResidualBlock& r) {
  append_params(out, r.c1);
  append_params(out, r.c2);
}

void adam_step(const std::vector<TensorPtr>& params, AdamState& state, float lr) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->data.size(), 0.0f);
      state.v[i].assign(params[i]->data.size(), 0.0f);
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), state.step);
  const double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), state.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (p.grad.size() != p.data.size()) {
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " has gradient length " +
                       std::to_string(p.grad.size()) + ", data length " +
                       std::to_string(p.data.size()));
    }
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.data.size()) {
      throw ShapeError("adam_step: moment length mismatch on parameter " + std::to_string(i));
    }
    for (std::size_t j = 0; j < p.data.size(); ++j) {
      const float g = p.grad[j];
      m[j] = state.beta1 * m[j] + (1.0f - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0f - state.beta2) * g * g;
      const float mhat = static_cast<float>(m[j] / bc1);
      const float vhat = static_cast<float>(v[j] / bc2);
      p.data[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void zero_grads(const std::vector<TensorPtr>& params) {
  for (const auto& p : params) {
    p->ensure_grad();
    p->zero_grad();
  }
}

}  // namespace gw::nn

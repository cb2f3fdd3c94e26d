#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "gw/ops.hpp"
#include "gw/tape.hpp"
#include "gw/tensor.hpp"

namespace gw::nn {

// DCGAN-style init: weights ~ N(0, 0.02), biases zero.
inline constexpr float kInitStddev = 0.02f;
inline constexpr float kLeakySlope = 0.2f;

struct Conv2d {
  TensorPtr weight;  // [out, in, k, k]
  TensorPtr bias;    // [out]
  int stride = 1;
  int padding = 0;

  static Conv2d init(int in_ch, int out_ch, int k, int stride, int padding, std::mt19937& rng);
  TensorPtr forward(Tape* tape, const TensorPtr& x) const;
};

struct ConvTranspose2d {
  TensorPtr weight;  // [in, out, k, k]
  TensorPtr bias;    // [out]
  int stride = 1;
  int padding = 0;

  static ConvTranspose2d init(int in_ch, int out_ch, int k, int stride, int padding,
                              std::mt19937& rng);
  TensorPtr forward(Tape* tape, const TensorPtr& x) const;
};

struct Linear {
  TensorPtr weight;  // [out, in]
  TensorPtr bias;    // [out]

  static Linear init(int in_f, int out_f, std::mt19937& rng);
  TensorPtr forward(Tape* tape, const TensorPtr& x) const;
};

// Two 3x3 stride-1 convolutions that preserve the feature-map size, with a
// LeakyReLU between them and an additive skip.
struct ResidualBlock {
  Conv2d c1, c2;

  static ResidualBlock init(int channels, std::mt19937& rng);
  TensorPtr forward(Tape* tape, const TensorPtr& x) const;
};

void append_params(std::vector<TensorPtr>& out, const Conv2d& c);
void append_params(std::vector<TensorPtr>& out, const ConvTranspose2d& c);
void append_params(std::vector<TensorPtr>& out, const Linear& l);
void append_params(std::vector<TensorPtr>& out, const ResidualBlock& r);

// Adam with bias correction. Moment buffers are sized on first use and must
// keep matching the parameter list afterwards.
struct AdamState {
  std::vector<std::vector<float>> m, v;
  std::int64_t step = 0;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

void adam_step(const std::vector<TensorPtr>& params, AdamState& state, float lr);
void zero_grads(const std::vector<TensorPtr>& params);

}  // namespace gw::nn

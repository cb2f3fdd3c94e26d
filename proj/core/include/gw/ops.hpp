#pragma once

#include <cstdint>
#include <vector>

#include "gw/tape.hpp"
#include "gw/tensor.hpp"

namespace gw::ops {

// Every op takes an optional tape; passing nullptr runs forward-only.
// Convolutional ops accept rank-3 (C,H,W) or rank-4 (N,C,H,W) inputs and
// return the same rank.

// kernel: [C_out, C_in, k, k], bias: [C_out].
// Output extent: floor((H + 2*padding - k) / stride) + 1.
TensorPtr conv2d(Tape* tape, const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, int stride, int padding);

// kernel: [C_in, C_out, k, k], bias: [C_out].
// Output extent: (H - 1)*stride - 2*padding + k.
TensorPtr conv2d_transpose(Tape* tape, const TensorPtr& input, const TensorPtr& kernel,
                           const TensorPtr& bias, int stride, int padding);

TensorPtr leaky_relu(Tape* tape, const TensorPtr& x, float slope);
TensorPtr tanh(Tape* tape, const TensorPtr& x);

enum class DropoutMode { kTrain, kEval };

// Train mode zeroes each element with probability `rate` and scales survivors
// by 1/(1-rate); eval mode is the identity. The mask is a pure function of
// `seed`.
TensorPtr dropout(Tape* tape, const TensorPtr& x, float rate, DropoutMode mode,
                  std::uint64_t seed);

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr div(Tape* tape, const TensorPtr& a, const TensorPtr& b);

// y = scale * x + shift, elementwise.
TensorPtr affine(Tape* tape, const TensorPtr& x, float scale, float shift);
TensorPtr abs(Tape* tape, const TensorPtr& x);
TensorPtr clamp_min(Tape* tape, const TensorPtr& x, float lo);
// y = x^p; requires x > 0.
TensorPtr pow_const(Tape* tape, const TensorPtr& x, float p);

TensorPtr mean(Tape* tape, const TensorPtr& x);  // scalar [1]
TensorPtr sum(Tape* tape, const TensorPtr& x);   // scalar [1]

TensorPtr reshape(Tape* tape, const TensorPtr& x, Shape new_shape);

// x: [N, in], weight: [out, in], bias: [out] -> [N, out].
TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& weight,
                 const TensorPtr& bias);

// Depthwise separable Gaussian filter, valid mode; kernel1d must sum to 1.
TensorPtr gaussian_blur(Tape* tape, const TensorPtr& x, const std::vector<float>& kernel1d);

// 2x2 average pooling, stride 2; odd trailing row/column dropped.
TensorPtr avg_pool2(Tape* tape, const TensorPtr& x);

// Extends the bottom/right border by replicating the last row/column.
TensorPtr pad_replicate_end(Tape* tape, const TensorPtr& x, int pad_h, int pad_w);

// Rearranges an [A*D, H, W] map into [A*H*W, D] rows so that per-anchor
// vectors are contiguous; anchor index = (a*H + i)*W + j.
TensorPtr anchor_rows(Tape* tape, const TensorPtr& x, int group);

struct BoxF {
  float x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  float width() const { return x1 - x0; }
  float height() const { return y1 - y0; }
  float cx() const { return 0.5f * (x0 + x1); }
  float cy() const { return 0.5f * (y0 + y1); }
};

// Bilinear crop-and-resize of feature map [C,H,W] at `boxes` (feature-map
// coordinates) to [P, C, out_size, out_size]. Boxes are constants.
TensorPtr crop_resize(Tape* tape, const TensorPtr& features, const std::vector<BoxF>& boxes,
                      int out_size);

// Numerically stable binary cross-entropy on logits:
//   sum_i weights[i] * (max(x,0) - x*t + log(1 + exp(-|x|))).
// targets/weights are constants with the same element count as logits.
TensorPtr bce_with_logits_sum(Tape* tape, const TensorPtr& logits,
                              const std::vector<float>& targets,
                              const std::vector<float>& weights);
TensorPtr bce_with_logits_mean(Tape* tape, const TensorPtr& logits, float target);

// logits: [N, K]; loss_i = -log softmax(logits_i)[labels_i], weighted sum.
TensorPtr softmax_ce_sum(Tape* tape, const TensorPtr& logits, const std::vector<int>& labels,
                         const std::vector<float>& weights);

// pred: [N, D]; per-row weighted sum over components of smooth-L1 (or plain
// L1 when pure_l1) of pred - target.
TensorPtr smooth_l1_sum(Tape* tape, const TensorPtr& pred,
                        const std::vector<float>& targets,
                        const std::vector<float>& row_weights, bool pure_l1);

// pred: [N, K*D]; for each row uses the D-component slice at `labels[i]`.
TensorPtr smooth_l1_sum_indexed(Tape* tape, const TensorPtr& pred, int groups,
                                const std::vector<int>& labels,
                                const std::vector<float>& targets,
                                const std::vector<float>& row_weights, bool pure_l1);

// Forward-only copy that severs the tape link.
TensorPtr detach(const TensorPtr& x);

}  // namespace gw::ops

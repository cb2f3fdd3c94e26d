#include <cmath>
#include <cstring>

#include "gw/errors.hpp"
#include "gw/ops.hpp"

namespace gw::ops {

namespace {

void check_same_shape(const char* op, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  }
}

}  // namespace

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("add", a, b);
  auto out = tensor_zeros(a->shape);
  const std::size_t n = a->data.size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
  if (tape) {
    tape->record(OpKind::kAdd, {a, b}, out, [a, b, out] {
      a->ensure_grad();
      b->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) {
        a->grad[i] += out->grad[i];
        b->grad[i] += out->grad[i];
      }
    });
  }
  return out;
}

TensorPtr sub(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("sub", a, b);
  auto out = tensor_zeros(a->shape);
  const std::size_t n = a->data.size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] - b->data[i];
  if (tape) {
    tape->record(OpKind::kSub, {a, b}, out, [a, b, out] {
      a->ensure_grad();
      b->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) {
        a->grad[i] += out->grad[i];
        b->grad[i] -= out->grad[i];
      }
    });
  }
  return out;
}

TensorPtr mul(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("mul", a, b);
  auto out = tensor_zeros(a->shape);
  const std::size_t n = a->data.size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
  if (tape) {
    tape->record(OpKind::kMul, {a, b}, out, [a, b, out] {
      a->ensure_grad();
      b->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) {
        a->grad[i] += out->grad[i] * b->data[i];
        b->grad[i] += out->grad[i] * a->data[i];
      }
    });
  }
  return out;
}

TensorPtr div(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("div", a, b);
  auto out = tensor_zeros(a->shape);
  const std::size_t n = a->data.size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] / b->data[i];
  if (tape) {
    tape->record(OpKind::kDiv, {a, b}, out, [a, b, out] {
      a->ensure_grad();
      b->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) {
        const float inv = 1.0f / b->data[i];
        a->grad[i] += out->grad[i] * inv;
        b->grad[i] -= out->grad[i] * a->data[i] * inv * inv;
      }
    });
  }
  return out;
}

TensorPtr affine(Tape* tape, const TensorPtr& x, float scale, float shift) {
  auto out = tensor_zeros(x->shape);
  for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = scale * x->data[i] + shift;
  if (tape) {
    tape->record(OpKind::kAffine, {x}, out, [x, out, scale] {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += scale * out->grad[i];
    });
  }
  return out;
}

TensorPtr abs(Tape* tape, const TensorPtr& x) {
  auto out = tensor_zeros(x->shape);
  for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = std::fabs(x->data[i]);
  if (tape) {
    tape->record(OpKind::kAbs, {x}, out, [x, out] {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) {
        const float v = x->data[i];
        const float s = v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f);
        x->grad[i] += s * out->grad[i];
      }
    });
  }
  return out;
}

TensorPtr clamp_min(Tape* tape, const TensorPtr& x, float lo) {
  auto out = tensor_zeros(x->shape);
  for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = std::max(x->data[i], lo);
  if (tape) {
    tape->record(OpKind::kClampMin, {x}, out, [x, out, lo] {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) {
        if (x->data[i] > lo) x->grad[i] += out->grad[i];
      }
    });
  }
  return out;
}

TensorPtr pow_const(Tape* tape, const TensorPtr& x, float p) {
  auto out = tensor_zeros(x->shape);
  for (std::size_t i = 0; i < x->data.size(); ++i) {
    if (x->data[i] <= 0.0f) {
      throw ValueError("pow_const requires strictly positive inputs, got " +
                       std::to_string(x->data[i]));
    }
    out->data[i] = std::pow(x->data[i], p);
  }
  if (tape) {
    tape->record(OpKind::kPowConst, {x}, out, [x, out, p] {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) {
        x->grad[i] += out->grad[i] * p * out->data[i] / x->data[i];
      }
    });
  }
  return out;
}

TensorPtr leaky_relu(Tape* tape, const TensorPtr& x, float slope) {
  auto out = tensor_zeros(x->shape);
  for (std::size_t i = 0; i < x->data.size(); ++i) {
    const float v = x->data[i];
    out->data[i] = v >= 0.0f ? v : slope * v;
  }
  if (tape) {
    tape->record(OpKind::kLeakyRelu, {x}, out, [x, out, slope] {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) {
        x->grad[i] += (x->data[i] >= 0.0f ? 1.0f : slope) * out->grad[i];
      }
    });
  }
  return out;
}

TensorPtr tanh(Tape* tape, const TensorPtr& x) {
  auto out = tensor_zeros(x->shape);
  for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = std::tanh(x->data[i]);
  if (tape) {
    tape->record(OpKind::kTanh, {x}, out, [x, out] {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) {
        const float y = out->data[i];
        x->grad[i] += (1.0f - y * y) * out->grad[i];
      }
    });
  }
  return out;
}

TensorPtr dropout(Tape* tape, const TensorPtr& x, float rate, DropoutMode mode,
                  std::uint64_t seed) {
  if (!(rate >= 0.0f) || rate >= 1.0f) {
    throw ValueError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (mode == DropoutMode::kEval || rate == 0.0f) return x;

  auto out = tensor_zeros(x->shape);
  auto mask = std::make_shared<std::vector<float>>(x->data.size());
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  const float keep_scale = 1.0f / (1.0f - rate);
  for (std::size_t i = 0; i < x->data.size(); ++i) {
    const float m = uni(rng) < rate ? 0.0f : keep_scale;
    (*mask)[i] = m;
    out->data[i] = m * x->data[i];
  }
  if (tape) {
    tape->record(OpKind::kDropout, {x}, out, [x, out, mask] {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) {
        x->grad[i] += (*mask)[i] * out->grad[i];
      }
    });
  }
  return out;
}

TensorPtr mean(Tape* tape, const TensorPtr& x) {
  const auto n = static_cast<double>(x->numel());
  double acc = 0.0;
  for (float v : x->data) acc += v;
  auto out = tensor_from({1}, {static_cast<float>(acc / n)});
  if (tape) {
    tape->record(OpKind::kMean, {x}, out, [x, out] {
      x->ensure_grad();
      const float g = out->grad[0] / static_cast<float>(x->numel());
      for (auto& gi : x->grad) gi += g;
    });
  }
  return out;
}

TensorPtr sum(Tape* tape, const TensorPtr& x) {
  double acc = 0.0;
  for (float v : x->data) acc += v;
  auto out = tensor_from({1}, {static_cast<float>(acc)});
  if (tape) {
    tape->record(OpKind::kSum, {x}, out, [x, out] {
      x->ensure_grad();
      const float g = out->grad[0];
      for (auto& gi : x->grad) gi += g;
    });
  }
  return out;
}

TensorPtr reshape(Tape* tape, const TensorPtr& x, Shape new_shape) {
  if (shape_numel(new_shape) != x->numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x->shape) + " as " +
                     shape_str(new_shape));
  }
  auto out = tensor_from(std::move(new_shape), x->data);
  if (tape) {
    tape->record(OpKind::kReshape, {x}, out, [x, out] {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += out->grad[i];
    });
  }
  return out;
}

TensorPtr linear(Tape* tape, const TensorPtr& x, const TensorPtr& weight,
                 const TensorPtr& bias) {
  if (x->rank() != 2 || weight->rank() != 2 || bias->rank() != 1) {
    throw ShapeError("linear: expected x [N,in], weight [out,in], bias [out]");
  }
  const int n = x->dim(0), in = x->dim(1);
  const int out_f = weight->dim(0);
  if (weight->dim(1) != in || bias->dim(0) != out_f) {
    throw ShapeError("linear: weight " + shape_str(weight->shape) + " / bias " +
                     shape_str(bias->shape) + " incompatible with input " + shape_str(x->shape));
  }
  auto out = tensor_zeros({n, out_f});
  for (int r = 0; r < n; ++r) {
    const float* xr = x->data.data() + static_cast<std::size_t>(r) * in;
    float* yr = out->data.data() + static_cast<std::size_t>(r) * out_f;
    for (int o = 0; o < out_f; ++o) {
      const float* wr = weight->data.data() + static_cast<std::size_t>(o) * in;
      float acc = bias->data[static_cast<std::size_t>(o)];
      for (int i = 0; i < in; ++i) acc += xr[i] * wr[i];
      yr[o] = acc;
    }
  }
  if (tape) {
    tape->record(OpKind::kLinear, {x, weight, bias}, out, [x, weight, bias, out, n, in, out_f] {
      x->ensure_grad();
      weight->ensure_grad();
      bias->ensure_grad();
      for (int r = 0; r < n; ++r) {
        const float* xr = x->data.data() + static_cast<std::size_t>(r) * in;
        const float* gy = out->grad.data() + static_cast<std::size_t>(r) * out_f;
        float* gx = x->grad.data() + static_cast<std::size_t>(r) * in;
        for (int o = 0; o < out_f; ++o) {
          const float g = gy[o];
          if (g == 0.0f) continue;
          const float* wr = weight->data.data() + static_cast<std::size_t>(o) * in;
          float* gw = weight->grad.data() + static_cast<std::size_t>(o) * in;
          for (int i = 0; i < in; ++i) {
            gx[i] += g * wr[i];
            gw[i] += g * xr[i];
          }
          bias->grad[static_cast<std::size_t>(o)] += g;
        }
      }
    });
  }
  return out;
}

TensorPtr detach(const TensorPtr& x) { return tensor_clone(*x); }

}  // namespace gw::ops

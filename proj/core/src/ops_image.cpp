#include <algorithm>
#include <cmath>

#include "gw/errors.hpp"
#include "gw/ops.hpp"
#include "parallel.hpp"

namespace gw::ops {

namespace {

struct PlaneDims {
  std::int64_t planes;  // product of leading dims
  int h, w;
};

PlaneDims plane_dims(const char* op, const TensorPtr& x) {
  if (x->rank() < 2) throw ShapeError(std::string(op) + ": input must have spatial dims");
  PlaneDims d{1, x->dim(x->rank() - 2), x->dim(x->rank() - 1)};
  for (int i = 0; i < x->rank() - 2; ++i) d.planes *= x->dim(i);
  return d;
}

Shape with_spatial(const TensorPtr& x, int h, int w) {
  Shape s = x->shape;
  s[s.size() - 2] = h;
  s[s.size() - 1] = w;
  return s;
}

}  // namespace

TensorPtr gaussian_blur(Tape* tape, const TensorPtr& x, const std::vector<float>& kernel1d) {
  const int k = static_cast<int>(kernel1d.size());
  if (k < 1) throw ValueError("gaussian_blur: empty kernel");
  const PlaneDims d = plane_dims("gaussian_blur", x);
  if (d.h < k || d.w < k) {
    throw ShapeError("gaussian_blur: window " + std::to_string(k) + " exceeds plane " +
                     std::to_string(d.h) + "x" + std::to_string(d.w));
  }
  const int ho = d.h - k + 1, wo = d.w - k + 1;
  auto out = tensor_zeros(with_spatial(x, ho, wo));
  auto kern = std::make_shared<std::vector<float>>(kernel1d);

  // Separable valid-mode correlation: horizontal pass into tmp, vertical into out.
  auto run_fwd = [d, k, ho, wo](const float* src, float* dst, const std::vector<float>& g) {
    parallel_for(d.planes, [&](std::int64_t lo, std::int64_t hi) {
      std::vector<float> tmp(static_cast<std::size_t>(d.h) * wo);
      for (std::int64_t p = lo; p < hi; ++p) {
        const float* in = src + p * d.h * d.w;
        float* outp = dst + p * static_cast<std::int64_t>(ho) * wo;
        for (int r = 0; r < d.h; ++r) {
          const float* row = in + static_cast<std::size_t>(r) * d.w;
          float* trow = tmp.data() + static_cast<std::size_t>(r) * wo;
          for (int c = 0; c < wo; ++c) {
            float acc = 0.0f;
            for (int t = 0; t < k; ++t) acc += g[t] * row[c + t];
            trow[c] = acc;
          }
        }
        for (int r = 0; r < ho; ++r) {
          float* orow = outp + static_cast<std::size_t>(r) * wo;
          for (int c = 0; c < wo; ++c) {
            float acc = 0.0f;
            for (int t = 0; t < k; ++t) acc += g[t] * tmp[static_cast<std::size_t>(r + t) * wo + c];
            orow[c] = acc;
          }
        }
      }
    });
  };
  run_fwd(x->data.data(), out->data.data(), *kern);

  if (tape) {
    tape->record(OpKind::kGaussianBlur, {x}, out, [x, out, kern, d, k, ho, wo] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      const auto& g = *kern;
      // Adjoint of valid correlation is full correlation with the same
      // (symmetric) kernel, run in the opposite pass order.
      parallel_for(d.planes, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<float> tmp(static_cast<std::size_t>(d.h) * wo);
        for (std::int64_t p = lo; p < hi; ++p) {
          const float* go = out->grad.data() + p * static_cast<std::int64_t>(ho) * wo;
          float* gx = x->grad.data() + p * d.h * d.w;
          std::fill(tmp.begin(), tmp.end(), 0.0f);
          for (int r = 0; r < d.h; ++r) {
            float* trow = tmp.data() + static_cast<std::size_t>(r) * wo;
            for (int t = 0; t < k; ++t) {
              const int orow_idx = r - t;
              if (orow_idx < 0 || orow_idx >= ho) continue;
              const float gv = g[t];
              const float* gorow = go + static_cast<std::size_t>(orow_idx) * wo;
              for (int c = 0; c < wo; ++c) trow[c] += gv * gorow[c];
            }
          }
          for (int r = 0; r < d.h; ++r) {
            const float* trow = tmp.data() + static_cast<std::size_t>(r) * wo;
            float* grow = gx + static_cast<std::size_t>(r) * d.w;
            for (int t = 0; t < k; ++t) {
              const float gv = g[t];
              for (int c = 0; c < wo; ++c) grow[c + t] += gv * trow[c];
            }
          }
        }
      });
    });
  }
  return out;
}

TensorPtr avg_pool2(Tape* tape, const TensorPtr& x) {
  const PlaneDims d = plane_dims("avg_pool2", x);
  const int ho = d.h / 2, wo = d.w / 2;
  if (ho < 1 || wo < 1) {
    throw ShapeError("avg_pool2: plane " + std::to_string(d.h) + "x" + std::to_string(d.w) +
                     " too small");
  }
  auto out = tensor_zeros(with_spatial(x, ho, wo));
  for (std::int64_t p = 0; p < d.planes; ++p) {
    const float* in = x->data.data() + p * d.h * d.w;
    float* outp = out->data.data() + p * static_cast<std::int64_t>(ho) * wo;
    for (int r = 0; r < ho; ++r) {
      const float* r0 = in + static_cast<std::size_t>(2 * r) * d.w;
      const float* r1 = r0 + d.w;
      float* orow = outp + static_cast<std::size_t>(r) * wo;
      for (int c = 0; c < wo; ++c) {
        orow[c] = 0.25f * (r0[2 * c] + r0[2 * c + 1] + r1[2 * c] + r1[2 * c + 1]);
      }
    }
  }
  if (tape) {
    tape->record(OpKind::kAvgPool2, {x}, out, [x, out, d, ho, wo] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      for (std::int64_t p = 0; p < d.planes; ++p) {
        const float* go = out->grad.data() + p * static_cast<std::int64_t>(ho) * wo;
        float* gx = x->grad.data() + p * d.h * d.w;
        for (int r = 0; r < ho; ++r) {
          float* g0 = gx + static_cast<std::size_t>(2 * r) * d.w;
          float* g1 = g0 + d.w;
          const float* gorow = go + static_cast<std::size_t>(r) * wo;
          for (int c = 0; c < wo; ++c) {
            const float g = 0.25f * gorow[c];
            g0[2 * c] += g;
            g0[2 * c + 1] += g;
            g1[2 * c] += g;
            g1[2 * c + 1] += g;
          }
        }
      }
    });
  }
  return out;
}

TensorPtr pad_replicate_end(Tape* tape, const TensorPtr& x, int pad_h, int pad_w) {
  if (pad_h < 0 || pad_w < 0) throw ValueError("pad_replicate_end: negative padding");
  if (pad_h == 0 && pad_w == 0) return x;
  const PlaneDims d = plane_dims("pad_replicate_end", x);
  const int ho = d.h + pad_h, wo = d.w + pad_w;
  auto out = tensor_zeros(with_spatial(x, ho, wo));
  for (std::int64_t p = 0; p < d.planes; ++p) {
    const float* in = x->data.data() + p * d.h * d.w;
    float* outp = out->data.data() + p * static_cast<std::int64_t>(ho) * wo;
    for (int r = 0; r < ho; ++r) {
      const int sr = std::min(r, d.h - 1);
      const float* irow = in + static_cast<std::size_t>(sr) * d.w;
      float* orow = outp + static_cast<std::size_t>(r) * wo;
      for (int c = 0; c < wo; ++c) orow[c] = irow[std::min(c, d.w - 1)];
    }
  }
  if (tape) {
    tape->record(OpKind::kPadReplicateEnd, {x}, out, [x, out, d, ho, wo] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      for (std::int64_t p = 0; p < d.planes; ++p) {
        const float* go = out->grad.data() + p * static_cast<std::int64_t>(ho) * wo;
        float* gx = x->grad.data() + p * d.h * d.w;
        for (int r = 0; r < ho; ++r) {
          const int sr = std::min(r, d.h - 1);
          float* grow = gx + static_cast<std::size_t>(sr) * d.w;
          const float* gorow = go + static_cast<std::size_t>(r) * wo;
          for (int c = 0; c < wo; ++c) grow[std::min(c, d.w - 1)] += gorow[c];
        }
      }
    });
  }
  return out;
}

TensorPtr anchor_rows(Tape* tape, const TensorPtr& x, int group) {
  if (x->rank() != 3) throw ShapeError("anchor_rows: expected [A*D, H, W]");
  const int ch = x->dim(0), h = x->dim(1), w = x->dim(2);
  if (group < 1 || ch % group != 0) {
    throw ShapeError("anchor_rows: channel count " + std::to_string(ch) +
                     " not divisible by group " + std::to_string(group));
  }
  const int a = ch / group;
  const int rows = a * h * w;
  auto out = tensor_zeros({rows, group});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int ai = 0; ai < a; ++ai) {
    for (int di = 0; di < group; ++di) {
      const float* src = x->data.data() + (static_cast<std::int64_t>(ai) * group + di) * hw;
      for (std::int64_t cell = 0; cell < hw; ++cell) {
        out->data[static_cast<std::size_t>((ai * hw + cell) * group + di)] = src[cell];
      }
    }
  }
  if (tape) {
    tape->record(OpKind::kAnchorRows, {x}, out, [x, out, a, group, hw] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      for (int ai = 0; ai < a; ++ai) {
        for (int di = 0; di < group; ++di) {
          float* dst = x->grad.data() + (static_cast<std::int64_t>(ai) * group + di) * hw;
          for (std::int64_t cell = 0; cell < hw; ++cell) {
            dst[cell] += out->grad[static_cast<std::size_t>((ai * hw + cell) * group + di)];
          }
        }
      }
    });
  }
  return out;
}

TensorPtr crop_resize(Tape* tape, const TensorPtr& features, const std::vector<BoxF>& boxes,
                      int out_size) {
  if (features->rank() != 3) throw ShapeError("crop_resize: expected features [C,H,W]");
  if (out_size < 1) throw ValueError("crop_resize: out_size must be >= 1");
  if (boxes.empty()) throw ValueError("crop_resize: no boxes");
  const int c = features->dim(0), h = features->dim(1), w = features->dim(2);
  const int p = static_cast<int>(boxes.size());
  auto out = tensor_zeros({p, c, out_size, out_size});

  struct SamplePt {
    int y0, x0;
    float wy, wx;  // weight of the low neighbor
  };
  auto make_axis = [out_size](float lo, float hi, int extent, std::vector<SamplePt>& pts, bool row) {
    // Sample centers of out_size cells spanning [lo, hi].
    const float span = hi - lo;
    for (int i = 0; i < out_size; ++i) {
      float t = out_size > 1 ? lo + span * (static_cast<float>(i) / (out_size - 1)) : 0.5f * (lo + hi);
      t = std::clamp(t, 0.0f, static_cast<float>(extent - 1));
      const int i0 = std::min(static_cast<int>(t), extent - 2 >= 0 ? extent - 2 : 0);
      const float frac = t - static_cast<float>(i0);
      SamplePt sp{};
      if (row) {
        sp.y0 = i0;
        sp.wy = 1.0f - frac;
      } else {
        sp.x0 = i0;
        sp.wx = 1.0f - frac;
      }
      pts.push_back(sp);
    }
  };

  auto grid = std::make_shared<std::vector<std::pair<std::vector<SamplePt>, std::vector<SamplePt>>>>();
  grid->reserve(static_cast<std::size_t>(p));
  for (const auto& b : boxes) {
    std::vector<SamplePt> ys, xs;
    make_axis(b.y0, b.y1, h, ys, true);
    make_axis(b.x0, b.x1, w, xs, false);
    grid->emplace_back(std::move(ys), std::move(xs));
  }

  for (int pi = 0; pi < p; ++pi) {
    const auto& [ys, xs] = (*grid)[static_cast<std::size_t>(pi)];
    for (int ci = 0; ci < c; ++ci) {
      const float* plane = features->data.data() + static_cast<std::int64_t>(ci) * h * w;
      float* outp = out->data.data() +
                    ((static_cast<std::int64_t>(pi) * c + ci) * out_size) * out_size;
      for (int r = 0; r < out_size; ++r) {
        const auto& sy = ys[static_cast<std::size_t>(r)];
        const int y1 = std::min(sy.y0 + 1, h - 1);
        for (int q = 0; q < out_size; ++q) {
          const auto& sx = xs[static_cast<std::size_t>(q)];
          const int x1 = std::min(sx.x0 + 1, w - 1);
          const float v00 = plane[static_cast<std::size_t>(sy.y0) * w + sx.x0];
          const float v01 = plane[static_cast<std::size_t>(sy.y0) * w + x1];
          const float v10 = plane[static_cast<std::size_t>(y1) * w + sx.x0];
          const float v11 = plane[static_cast<std::size_t>(y1) * w + x1];
          outp[r * out_size + q] = sy.wy * (sx.wx * v00 + (1 - sx.wx) * v01) +
                                   (1 - sy.wy) * (sx.wx * v10 + (1 - sx.wx) * v11);
        }
      }
    }
  }

  if (tape) {
    tape->record(OpKind::kCropResize, {features}, out, [features, out, grid, p, c, h, w, out_size] {
      if (!features->requires_grad) return;
      features->ensure_grad();
      for (int pi = 0; pi < p; ++pi) {
        const auto& [ys, xs] = (*grid)[static_cast<std::size_t>(pi)];
        for (int ci = 0; ci < c; ++ci) {
          float* gplane = features->grad.data() + static_cast<std::int64_t>(ci) * h * w;
          const float* go = out->grad.data() +
                            ((static_cast<std::int64_t>(pi) * c + ci) * out_size) * out_size;
          for (int r = 0; r < out_size; ++r) {
            const auto& sy = ys[static_cast<std::size_t>(r)];
            const int y1 = std::min(sy.y0 + 1, h - 1);
            for (int q = 0; q < out_size; ++q) {
              const auto& sx = xs[static_cast<std::size_t>(q)];
              const int x1 = std::min(sx.x0 + 1, w - 1);
              const float g = go[r * out_size + q];
              gplane[static_cast<std::size_t>(sy.y0) * w + sx.x0] += g * sy.wy * sx.wx;
              gplane[static_cast<std::size_t>(sy.y0) * w + x1] += g * sy.wy * (1 - sx.wx);
              gplane[static_cast<std::size_t>(y1) * w + sx.x0] += g * (1 - sy.wy) * sx.wx;
              gplane[static_cast<std::size_t>(y1) * w + x1] += g * (1 - sy.wy) * (1 - sx.wx);
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace gw::ops

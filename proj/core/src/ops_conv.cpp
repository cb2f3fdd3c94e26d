#include <algorithm>
#include <string>

#include "gw/errors.hpp"
#include "gw/ops.hpp"
#include "parallel.hpp"

namespace gw::ops {

namespace {

int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

struct ConvDims {
  int n, cin, h, w;      // input
  int cout, k;           // kernel
  int stride, pad;
  int ho, wo;            // output
  bool batched;          // whether the caller passed rank-4
};

ConvDims conv_dims(const char* op, const TensorPtr& input, const TensorPtr& kernel,
                   const TensorPtr& bias, int stride, int padding, bool transpose) {
  if (stride < 1) throw ValueError(std::string(op) + ": stride must be >= 1");
  if (padding < 0) throw ValueError(std::string(op) + ": padding must be >= 0");
  if (input->rank() != 3 && input->rank() != 4) {
    throw ShapeError(std::string(op) + ": input must be [C,H,W] or [N,C,H,W], got " +
                     shape_str(input->shape));
  }
  if (kernel->rank() != 4 || kernel->dim(2) != kernel->dim(3)) {
    throw ShapeError(std::string(op) + ": kernel must be rank-4 with square window, got " +
                     shape_str(kernel->shape));
  }
  ConvDims d{};
  d.batched = input->rank() == 4;
  d.n = d.batched ? input->dim(0) : 1;
  d.cin = input->dim(d.batched ? 1 : 0);
  d.h = input->dim(d.batched ? 2 : 1);
  d.w = input->dim(d.batched ? 3 : 2);
  d.k = kernel->dim(2);
  d.stride = stride;
  d.pad = padding;

  const int kernel_cin = transpose ? kernel->dim(0) : kernel->dim(1);
  d.cout = transpose ? kernel->dim(1) : kernel->dim(0);
  if (kernel_cin != d.cin) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(d.cin) +
                     " channels but kernel expects " + std::to_string(kernel_cin));
  }
  if (bias->numel() != d.cout) {
    throw ShapeError(std::string(op) + ": bias has " + std::to_string(bias->numel()) +
                     " elements but kernel produces " + std::to_string(d.cout) + " channels");
  }
  if (transpose) {
    d.ho = (d.h - 1) * stride - 2 * padding + d.k;
    d.wo = (d.w - 1) * stride - 2 * padding + d.k;
    if (d.ho < 1 || d.wo < 1) {
      throw ShapeError(std::string(op) + ": output would be " + std::to_string(d.ho) + "x" +
                       std::to_string(d.wo));
    }
  } else {
    if (d.k > d.h + 2 * padding || d.k > d.w + 2 * padding) {
      throw ShapeError(std::string(op) + ": window " + std::to_string(d.k) +
                       " exceeds padded input " + std::to_string(d.h + 2 * padding) + "x" +
                       std::to_string(d.w + 2 * padding));
    }
    d.ho = (d.h + 2 * padding - d.k) / stride + 1;
    d.wo = (d.w + 2 * padding - d.k) / stride + 1;
  }
  return d;
}

Shape out_shape(const ConvDims& d) {
  return d.batched ? Shape{d.n, d.cout, d.ho, d.wo} : Shape{d.cout, d.ho, d.wo};
}

// Valid output range for a kernel tap: positions o with 0 <= o*s - p + koff < extent.
void tap_range(int extent, int out_extent, int stride, int pad, int koff, int& lo, int& hi) {
  lo = std::max(0, ceil_div(pad - koff, stride));
  hi = std::min(out_extent - 1, floor_div(extent - 1 + pad - koff, stride));
}

void conv_fwd(const float* in, const float* ker, const float* bias, float* out,
              const ConvDims& d) {
  const std::int64_t planes = static_cast<std::int64_t>(d.n) * d.cout;
  parallel_for(planes, [&](std::int64_t lo_idx, std::int64_t hi_idx) {
    for (std::int64_t idx = lo_idx; idx < hi_idx; ++idx) {
      const int n = static_cast<int>(idx / d.cout);
      const int co = static_cast<int>(idx % d.cout);
      float* outp = out + (static_cast<std::size_t>(n) * d.cout + co) *
                              static_cast<std::size_t>(d.ho) * d.wo;
      std::fill(outp, outp + static_cast<std::size_t>(d.ho) * d.wo, bias[co]);
      for (int ci = 0; ci < d.cin; ++ci) {
        const float* inp = in + (static_cast<std::size_t>(n) * d.cin + ci) *
                                    static_cast<std::size_t>(d.h) * d.w;
        const float* kerp =
            ker + (static_cast<std::size_t>(co) * d.cin + ci) * static_cast<std::size_t>(d.k) * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          int oh_lo, oh_hi;
          tap_range(d.h, d.ho, d.stride, d.pad, kh, oh_lo, oh_hi);
          for (int kw = 0; kw < d.k; ++kw) {
            const float wv = kerp[kh * d.k + kw];
            int ow_lo, ow_hi;
            tap_range(d.w, d.wo, d.stride, d.pad, kw, ow_lo, ow_hi);
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              const int ih = oh * d.stride - d.pad + kh;
              const float* irow = inp + static_cast<std::size_t>(ih) * d.w +
                                  (ow_lo * d.stride - d.pad + kw);
              float* orow = outp + static_cast<std::size_t>(oh) * d.wo + ow_lo;
              const int cnt = ow_hi - ow_lo + 1;
              for (int t = 0; t < cnt; ++t) orow[t] += wv * irow[t * d.stride];
            }
          }
        }
      }
    }
  });
}

void conv_bwd_input(const float* gout, const float* ker, float* gin, const ConvDims& d) {
  const std::int64_t planes = static_cast<std::int64_t>(d.n) * d.cin;
  parallel_for(planes, [&](std::int64_t lo_idx, std::int64_t hi_idx) {
    for (std::int64_t idx = lo_idx; idx < hi_idx; ++idx) {
      const int n = static_cast<int>(idx / d.cin);
      const int ci = static_cast<int>(idx % d.cin);
      float* ginp = gin + (static_cast<std::size_t>(n) * d.cin + ci) *
                              static_cast<std::size_t>(d.h) * d.w;
      for (int co = 0; co < d.cout; ++co) {
        const float* goutp = gout + (static_cast<std::size_t>(n) * d.cout + co) *
                                        static_cast<std::size_t>(d.ho) * d.wo;
        const float* kerp =
            ker + (static_cast<std::size_t>(co) * d.cin + ci) * static_cast<std::size_t>(d.k) * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          int oh_lo, oh_hi;
          tap_range(d.h, d.ho, d.stride, d.pad, kh, oh_lo, oh_hi);
          for (int kw = 0; kw < d.k; ++kw) {
            const float wv = kerp[kh * d.k + kw];
            int ow_lo, ow_hi;
            tap_range(d.w, d.wo, d.stride, d.pad, kw, ow_lo, ow_hi);
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              const int ih = oh * d.stride - d.pad + kh;
              float* grow = ginp + static_cast<std::size_t>(ih) * d.w +
                            (ow_lo * d.stride - d.pad + kw);
              const float* gorow = goutp + static_cast<std::size_t>(oh) * d.wo + ow_lo;
              const int cnt = ow_hi - ow_lo + 1;
              for (int t = 0; t < cnt; ++t) grow[t * d.stride] += wv * gorow[t];
            }
          }
        }
      }
    }
  });
}

void conv_bwd_kernel_bias(const float* gout, const float* in, float* gker, float* gbias,
                          const ConvDims& d) {
  parallel_for(d.cout, [&](std::int64_t co_lo, std::int64_t co_hi) {
    for (int co = static_cast<int>(co_lo); co < co_hi; ++co) {
      double bias_acc = 0.0;
      for (int n = 0; n < d.n; ++n) {
        const float* goutp = gout + (static_cast<std::size_t>(n) * d.cout + co) *
                                        static_cast<std::size_t>(d.ho) * d.wo;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.ho) * d.wo; ++i) {
          bias_acc += goutp[i];
        }
        for (int ci = 0; ci < d.cin; ++ci) {
          const float* inp = in + (static_cast<std::size_t>(n) * d.cin + ci) *
                                      static_cast<std::size_t>(d.h) * d.w;
          float* gkerp = gker + (static_cast<std::size_t>(co) * d.cin + ci) *
                                    static_cast<std::size_t>(d.k) * d.k;
          for (int kh = 0; kh < d.k; ++kh) {
            int oh_lo, oh_hi;
            tap_range(d.h, d.ho, d.stride, d.pad, kh, oh_lo, oh_hi);
            for (int kw = 0; kw < d.k; ++kw) {
              int ow_lo, ow_hi;
              tap_range(d.w, d.wo, d.stride, d.pad, kw, ow_lo, ow_hi);
              float acc = 0.0f;
              for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                const int ih = oh * d.stride - d.pad + kh;
                const float* irow = inp + static_cast<std::size_t>(ih) * d.w +
                                    (ow_lo * d.stride - d.pad + kw);
                const float* gorow = goutp + static_cast<std::size_t>(oh) * d.wo + ow_lo;
                const int cnt = ow_hi - ow_lo + 1;
                for (int t = 0; t < cnt; ++t) acc += gorow[t] * irow[t * d.stride];
              }
              gkerp[kh * d.k + kw] += acc;
            }
          }
        }
      }
      gbias[co] += static_cast<float>(bias_acc);
    }
  });
}

// Transposed convolution, gather form: for input position i, the tap (kh,kw)
// lands at o = i*s - p + k_off.
void tconv_tap_range(int in_extent, int out_extent, int stride, int pad, int koff, int& lo,
                     int& hi) {
  lo = std::max(0, ceil_div(pad - koff, stride));
  hi = std::min(in_extent - 1, floor_div(out_extent - 1 + pad - koff, stride));
}

void tconv_fwd(const float* in, const float* ker, const float* bias, float* out,
               const ConvDims& d) {
  const std::int64_t planes = static_cast<std::int64_t>(d.n) * d.cout;
  parallel_for(planes, [&](std::int64_t lo_idx, std::int64_t hi_idx) {
    for (std::int64_t idx = lo_idx; idx < hi_idx; ++idx) {
      const int n = static_cast<int>(idx / d.cout);
      const int co = static_cast<int>(idx % d.cout);
      float* outp = out + (static_cast<std::size_t>(n) * d.cout + co) *
                              static_cast<std::size_t>(d.ho) * d.wo;
      std::fill(outp, outp + static_cast<std::size_t>(d.ho) * d.wo, bias[co]);
      for (int ci = 0; ci < d.cin; ++ci) {
        const float* inp = in + (static_cast<std::size_t>(n) * d.cin + ci) *
                                    static_cast<std::size_t>(d.h) * d.w;
        const float* kerp =
            ker + (static_cast<std::size_t>(ci) * d.cout + co) * static_cast<std::size_t>(d.k) * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          int ih_lo, ih_hi;
          tconv_tap_range(d.h, d.ho, d.stride, d.pad, kh, ih_lo, ih_hi);
          for (int kw = 0; kw < d.k; ++kw) {
            const float wv = kerp[kh * d.k + kw];
            int iw_lo, iw_hi;
            tconv_tap_range(d.w, d.wo, d.stride, d.pad, kw, iw_lo, iw_hi);
            for (int ih = ih_lo; ih <= ih_hi; ++ih) {
              const int oh = ih * d.stride - d.pad + kh;
              const float* irow = inp + static_cast<std::size_t>(ih) * d.w + iw_lo;
              float* orow = outp + static_cast<std::size_t>(oh) * d.wo +
                            (iw_lo * d.stride - d.pad + kw);
              const int cnt = iw_hi - iw_lo + 1;
              for (int t = 0; t < cnt; ++t) orow[t * d.stride] += wv * irow[t];
            }
          }
        }
      }
    }
  });
}

void tconv_bwd_input(const float* gout, const float* ker, float* gin, const ConvDims& d) {
  const std::int64_t planes = static_cast<std::int64_t>(d.n) * d.cin;
  parallel_for(planes, [&](std::int64_t lo_idx, std::int64_t hi_idx) {
    for (std::int64_t idx = lo_idx; idx < hi_idx; ++idx) {
      const int n = static_cast<int>(idx / d.cin);
      const int ci = static_cast<int>(idx % d.cin);
      float* ginp = gin + (static_cast<std::size_t>(n) * d.cin + ci) *
                              static_cast<std::size_t>(d.h) * d.w;
      for (int co = 0; co < d.cout; ++co) {
        const float* goutp = gout + (static_cast<std::size_t>(n) * d.cout + co) *
                                        static_cast<std::size_t>(d.ho) * d.wo;
        const float* kerp =
            ker + (static_cast<std::size_t>(ci) * d.cout + co) * static_cast<std::size_t>(d.k) * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          int ih_lo, ih_hi;
          tconv_tap_range(d.h, d.ho, d.stride, d.pad, kh, ih_lo, ih_hi);
          for (int kw = 0; kw < d.k; ++kw) {
            const float wv = kerp[kh * d.k + kw];
            int iw_lo, iw_hi;
            tconv_tap_range(d.w, d.wo, d.stride, d.pad, kw, iw_lo, iw_hi);
            for (int ih = ih_lo; ih <= ih_hi; ++ih) {
              const int oh = ih * d.stride - d.pad + kh;
              float* grow = ginp + static_cast<std::size_t>(ih) * d.w + iw_lo;
              const float* gorow = goutp + static_cast<std::size_t>(oh) * d.wo +
                                   (iw_lo * d.stride - d.pad + kw);
              const int cnt = iw_hi - iw_lo + 1;
              for (int t = 0; t < cnt; ++t) grow[t] += wv * gorow[t * d.stride];
            }
          }
        }
      }
    }
  });
}

void tconv_bwd_kernel(const float* gout, const float* in, float* gker, const ConvDims& d) {
  parallel_for(d.cin, [&](std::int64_t ci_lo, std::int64_t ci_hi) {
    for (int ci = static_cast<int>(ci_lo); ci < ci_hi; ++ci) {
      for (int n = 0; n < d.n; ++n) {
        const float* inp = in + (static_cast<std::size_t>(n) * d.cin + ci) *
                                    static_cast<std::size_t>(d.h) * d.w;
        for (int co = 0; co < d.cout; ++co) {
          const float* goutp = gout + (static_cast<std::size_t>(n) * d.cout + co) *
                                          static_cast<std::size_t>(d.ho) * d.wo;
          float* gkerp = gker + (static_cast<std::size_t>(ci) * d.cout + co) *
                                    static_cast<std::size_t>(d.k) * d.k;
          for (int kh = 0; kh < d.k; ++kh) {
            int ih_lo, ih_hi;
            tconv_tap_range(d.h, d.ho, d.stride, d.pad, kh, ih_lo, ih_hi);
            for (int kw = 0; kw < d.k; ++kw) {
              int iw_lo, iw_hi;
              tconv_tap_range(d.w, d.wo, d.stride, d.pad, kw, iw_lo, iw_hi);
              float acc = 0.0f;
              for (int ih = ih_lo; ih <= ih_hi; ++ih) {
                const int oh = ih * d.stride - d.pad + kh;
                const float* irow = inp + static_cast<std::size_t>(ih) * d.w + iw_lo;
                const float* gorow = goutp + static_cast<std::size_t>(oh) * d.wo +
                                     (iw_lo * d.stride - d.pad + kw);
                const int cnt = iw_hi - iw_lo + 1;
                for (int t = 0; t < cnt; ++t) acc += irow[t] * gorow[t * d.stride];
              }
              gkerp[kh * d.k + kw] += acc;
            }
          }
        }
      }
    }
  });
}

void tconv_bwd_bias(const float* gout, float* gbias, const ConvDims& d) {
  for (int co = 0; co < d.cout; ++co) {
    double acc = 0.0;
    for (int n = 0; n < d.n; ++n) {
      const float* goutp = gout + (static_cast<std::size_t>(n) * d.cout + co) *
                                      static_cast<std::size_t>(d.ho) * d.wo;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.ho) * d.wo; ++i) acc += goutp[i];
    }
    gbias[co] += static_cast<float>(acc);
  }
}

}  // namespace

TensorPtr conv2d(Tape* tape, const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, int stride, int padding) {
  const ConvDims d = conv_dims("conv2d", input, kernel, bias, stride, padding, false);
  auto out = tensor_zeros(out_shape(d));
  conv_fwd(input->data.data(), kernel->data.data(), bias->data.data(), out->data.data(), d);
  if (tape) {
    tape->record(OpKind::kConv2d, {input, kernel, bias}, out, [input, kernel, bias, out, d] {
      if (input->requires_grad) {
        input->ensure_grad();
        conv_bwd_input(out->grad.data(), kernel->data.data(), input->grad.data(), d);
      }
      kernel->ensure_grad();
      bias->ensure_grad();
      conv_bwd_kernel_bias(out->grad.data(), input->data.data(), kernel->grad.data(),
                           bias->grad.data(), d);
    });
  }
  return out;
}

TensorPtr conv2d_transpose(Tape* tape, const TensorPtr& input, const TensorPtr& kernel,
                           const TensorPtr& bias, int stride, int padding) {
  const ConvDims d = conv_dims("conv2d_transpose", input, kernel, bias, stride, padding, true);
  auto out = tensor_zeros(out_shape(d));
  tconv_fwd(input->data.data(), kernel->data.data(), bias->data.data(), out->data.data(), d);
  if (tape) {
    tape->record(OpKind::kConvTranspose2d, {input, kernel, bias}, out,
                 [input, kernel, bias, out, d] {
                   if (input->requires_grad) {
                     input->ensure_grad();
                     tconv_bwd_input(out->grad.data(), kernel->data.data(), input->grad.data(), d);
                   }
                   kernel->ensure_grad();
                   bias->ensure_grad();
                   tconv_bwd_kernel(out->grad.data(), input->data.data(), kernel->grad.data(), d);
                   tconv_bwd_bias(out->grad.data(), bias->grad.data(), d);
                 });
  }
  return out;
}

}  // namespace gw::ops

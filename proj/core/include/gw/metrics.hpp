#pragma once

#include <string>
#include <vector>

#include "gw/tensor.hpp"

namespace gw::metrics {

// Windowed similarity parameters: 11x11 Gaussian (sigma 1.5) whose weights sum
// to 1, stabilizers derived from the dynamic range, and per-term exponents.
struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double dynamic_range = 255.0;  // L
  double k1 = 0.01;
  double k2 = 0.03;
  double alpha = 1.0;  // luminance exponent
  double beta = 1.0;   // contrast exponent
  double gamma = 1.0;  // structure exponent

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  double c3() const { return c2() / 2.0; }
};

// Multi-scale chaining: contrast/structure at every scale, luminance only at
// the coarsest, scales linked by 2x average pooling. Exponents are expressed
// as weights normalized to sum 1.
struct MsSsimParams {
  SsimParams base;
  std::vector<double> scale_weights;  // size = scale count

  MsSsimParams();
  int scales() const { return static_cast<int>(scale_weights.size()); }
};

struct PsnrResult {
  bool perfect_match = false;
  double db = 0.0;  // valid only when !perfect_match
};

// 10*log10(MAX^2 / MSE); identical images yield the distinguished
// perfect-match outcome rather than a number.
PsnrResult psnr(const Tensor& a, const Tensor& b, double max_value);

// Mean over sliding windows of the per-window similarity map, computed per
// channel and averaged. Images are [C,H,W] (or [H,W]) on the 0..max scale
// matching params.dynamic_range.
double ssim(const Tensor& a, const Tensor& b, const SsimParams& params = SsimParams());

double ms_ssim(const Tensor& a, const Tensor& b, const MsSsimParams& params = MsSsimParams());

struct PairScore {
  std::string name;
  PsnrResult psnr;
  double ssim = 0.0;
  double ms_ssim = 0.0;
};

struct BatchReport {
  std::vector<PairScore> pairs;
  double avg_psnr_db = 0.0;  // over non-perfect pairs
  int perfect_matches = 0;
  double avg_ssim = 0.0;
  double avg_ms_ssim = 0.0;
};

BatchReport evaluate_pairs(const std::vector<std::tuple<std::string, Tensor, Tensor>>& pairs,
                           const MsSsimParams& params = MsSsimParams());

}  // namespace gw::metrics

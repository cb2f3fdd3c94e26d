#include "gw/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "gw/errors.hpp"

namespace gw::metrics {

namespace {

struct PlaneD {
  std::vector<double> v;
  int h = 0, w = 0;

  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
};

std::vector<double> gaussian_window_1d(int window, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(window));
  const double mid = (window - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - mid;
    g[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (auto& x : g) x /= total;  // outer product then sums to 1
  return g;
}

// Separable valid-mode correlation with a normalized 1D window.
PlaneD blur_valid(const PlaneD& p, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int ho = p.h - k + 1, wo = p.w - k + 1;
  PlaneD tmp{std::vector<double>(static_cast<std::size_t>(p.h) * wo), p.h, wo};
  for (int r = 0; r < p.h; ++r) {
    for (int c = 0; c < wo; ++c) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += g[static_cast<std::size_t>(t)] * p.at(r, c + t);
      tmp.at(r, c) = acc;
    }
  }
  PlaneD out{std::vector<double>(static_cast<std::size_t>(ho) * wo), ho, wo};
  for (int r = 0; r < ho; ++r) {
    for (int c = 0; c < wo; ++c) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += g[static_cast<std::size_t>(t)] * tmp.at(r + t, c);
      out.at(r, c) = acc;
    }
  }
  return out;
}

PlaneD elemwise(const PlaneD& a, const PlaneD& b) {
  PlaneD out{a.v, a.h, a.w};
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

PlaneD halve(const PlaneD& p) {
  const int ho = p.h / 2, wo = p.w / 2;
  PlaneD out{std::vector<double>(static_cast<std::size_t>(ho) * wo), ho, wo};
  for (int r = 0; r < ho; ++r) {
    for (int c = 0; c < wo; ++c) {
      out.at(r, c) =
          0.25 * (p.at(2 * r, 2 * c) + p.at(2 * r, 2 * c + 1) + p.at(2 * r + 1, 2 * c) +
                  p.at(2 * r + 1, 2 * c + 1));
    }
  }
  return out;
}

std::vector<PlaneD> split_planes(const Tensor& t) {
  if (t.rank() != 2 && t.rank() != 3) {
    throw ShapeError("metrics: expected [H,W] or [C,H,W], got " + shape_str(t.shape));
  }
  const int ch = t.rank() == 3 ? t.dim(0) : 1;
  const int h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  std::vector<PlaneD> planes;
  planes.reserve(static_cast<std::size_t>(ch));
  for (int c = 0; c < ch; ++c) {
    PlaneD p{std::vector<double>(static_cast<std::size_t>(h) * w), h, w};
    const float* src = t.data.data() + static_cast<std::int64_t>(c) * h * w;
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = src[i];
    planes.push_back(std::move(p));
  }
  return planes;
}

double pow_term(double base, double exponent) {
  if (exponent == 1.0) return base;
  return std::pow(std::max(base, 0.0), exponent);
}

// Mean luminance, contrast-structure, and full similarity over the window map
// of one channel pair.
struct SsimMeans {
  double l = 0.0;   // luminance term
  double cs = 0.0;  // contrast * structure
  double full = 0.0;
};

SsimMeans ssim_means(const PlaneD& a, const PlaneD& b, const SsimParams& prm) {
  const auto g = gaussian_window_1d(prm.window, prm.sigma);
  const PlaneD mu_a = blur_valid(a, g);
  const PlaneD mu_b = blur_valid(b, g);
  const PlaneD e_aa = blur_valid(elemwise(a, a), g);
  const PlaneD e_bb = blur_valid(elemwise(b, b), g);
  const PlaneD e_ab = blur_valid(elemwise(a, b), g);
  const double c1 = prm.c1(), c2 = prm.c2(), c3 = prm.c3();
  const bool plain = prm.alpha == 1.0 && prm.beta == 1.0 && prm.gamma == 1.0;

  double sum_l = 0.0, sum_cs = 0.0, sum_full = 0.0;
  const std::size_t n = mu_a.v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = std::max(e_aa.v[i] - ma * ma, 0.0);
    const double vb = std::max(e_bb.v[i] - mb * mb, 0.0);
    const double cov = e_ab.v[i] - ma * mb;
    const double l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    const double cs = (2.0 * cov + c2) / (va + vb + c2);
    sum_l += l;
    sum_cs += cs;
    if (plain) {
      sum_full += l * cs;
    } else {
      const double sa = std::sqrt(va), sb = std::sqrt(vb);
      const double c = (2.0 * sa * sb + c2) / (va + vb + c2);
      const double s = (cov + c3) / (sa * sb + c3);
      sum_full += pow_term(l, prm.alpha) * pow_term(c, prm.beta) * pow_term(s, prm.gamma);
    }
  }
  return SsimMeans{sum_l / n, sum_cs / n, sum_full / n};
}

void check_pair(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  }
}

}  // namespace

MsSsimParams::MsSsimParams() {
  // First three entries of the canonical five-scale weighting, renormalized;
  // three scales keep a 210x150 input above the 11-pixel window at the
  // coarsest level.
  const double raw[3] = {0.0448, 0.2856, 0.3001};
  const double total = raw[0] + raw[1] + raw[2];
  scale_weights = {raw[0] / total, raw[1] / total, raw[2] / total};
}

PsnrResult psnr(const Tensor& a, const Tensor& b, double max_value) {
  check_pair("psnr", a, b);
  if (max_value <= 0.0) throw ValueError("psnr: max_value must be positive");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0.0) return PsnrResult{true, 0.0};
  return PsnrResult{false, 10.0 * std::log10(max_value * max_value / mse)};
}

double ssim(const Tensor& a, const Tensor& b, const SsimParams& params) {
  check_pair("ssim", a, b);
  const auto pa = split_planes(a);
  const auto pb = split_planes(b);
  if (pa[0].h < params.window || pa[0].w < params.window) {
    throw ShapeError("ssim: image " + std::to_string(pa[0].h) + "x" + std::to_string(pa[0].w) +
                     " smaller than window " + std::to_string(params.window));
  }
  double acc = 0.0;
  for (std::size_t c = 0; c < pa.size(); ++c) acc += ssim_means(pa[c], pb[c], params).full;
  return acc / static_cast<double>(pa.size());
}

double ms_ssim(const Tensor& a, const Tensor& b, const MsSsimParams& params) {
  check_pair("ms_ssim", a, b);
  const int m = params.scales();
  if (m < 1) throw ValueError("ms_ssim: at least one scale required");
  auto pa = split_planes(a);
  auto pb = split_planes(b);

  // Coarsest-scale extents must still hold a full window.
  int h = pa[0].h, w = pa[0].w;
  for (int j = 1; j < m; ++j) {
    h /= 2;
    w /= 2;
  }
  if (h < params.base.window || w < params.base.window) {
    throw ValueError("ms_ssim: input " + std::to_string(pa[0].h) + "x" + std::to_string(pa[0].w) +
                     " cannot support " + std::to_string(m) + " scales with window " +
                     std::to_string(params.base.window));
  }

  const std::size_t channels = pa.size();
  double acc = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    PlaneD xa = pa[c], xb = pb[c];
    double value = 1.0;
    for (int j = 0; j < m; ++j) {
      const SsimMeans means = ssim_means(xa, xb, params.base);
      const double weight = params.scale_weights[static_cast<std::size_t>(j)];
      if (j + 1 < m) {
        value *= pow_term(means.cs, weight);
        xa = halve(xa);
        xb = halve(xb);
      } else {
        // Luminance enters only at the coarsest scale, via the full map.
        value *= pow_term(means.full, weight);
      }
    }
    acc += value;
  }
  return acc / static_cast<double>(channels);
}

BatchReport evaluate_pairs(const std::vector<std::tuple<std::string, Tensor, Tensor>>& pairs,
                           const MsSsimParams& params) {
  BatchReport report;
  double psnr_acc = 0.0, ssim_acc = 0.0, ms_acc = 0.0;
  int psnr_n = 0;
  for (const auto& [name, a, b] : pairs) {
    PairScore score;
    score.name = name;
    score.psnr = psnr(a, b, params.base.dynamic_range);
    score.ssim = ssim(a, b, params.base);
    score.ms_ssim = ms_ssim(a, b, params);
    if (score.psnr.perfect_match) {
      ++report.perfect_matches;
    } else {
      psnr_acc += score.psnr.db;
      ++psnr_n;
    }
    ssim_acc += score.ssim;
    ms_acc += score.ms_ssim;
    report.pairs.push_back(std::move(score));
  }
  const auto n = static_cast<double>(pairs.size());
  if (psnr_n > 0) report.avg_psnr_db = psnr_acc / psnr_n;
  if (!pairs.empty()) {
    report.avg_ssim = ssim_acc / n;
    report.avg_ms_ssim = ms_acc / n;
  }
  return report;
}

}  // namespace gw::metrics

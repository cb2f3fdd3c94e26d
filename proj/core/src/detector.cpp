#include "gw/detector.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "binio.hpp"
#include "gw/codec.hpp"
#include "gw/errors.hpp"
#include "gw/image_io.hpp"
#include "gw/ops.hpp"

namespace gw::grasp {

namespace {

constexpr int kW0 = 16, kW1 = 32, kW2 = 48, kW3 = 64;
constexpr int kHidden = 256;
constexpr int kStride = 16;  // four stride-2 blocks
constexpr float kMinBoxSide = 4.0f;
constexpr float kDeltaClamp = 4.0f;

constexpr char kMagic[4] = {'G', 'W', 'D', '1'};
constexpr std::uint16_t kVersion = 1;

int half_extent(int e) { return (e - 2) / 2 + 1; }  // k=4, stride=2, pad=1

}  // namespace

int DetectorConfig::feature_height() const {
  int h = input_height;
  for (int i = 0; i < 4; ++i) h = half_extent(h);
  return h;
}

int DetectorConfig::feature_width() const {
  int w = input_width;
  for (int i = 0; i < 4; ++i) w = half_extent(w);
  return w;
}

void DetectorConfig::validate() const {
  if (input_channels < 1 || input_height < 32 || input_width < 32) {
    throw ValueError("detector config: input too small for a four-stage backbone");
  }
  if (anchor_scales.empty() || anchor_aspects.empty()) {
    throw ValueError("detector config: anchor menu is empty");
  }
  if (!(nms_iou > 0.0f && nms_iou < 1.0f)) {
    throw ValueError("detector config: nms_iou must be in (0,1)");
  }
  if (top_n < 1) throw ValueError("detector config: top_n must be >= 1");
  if (roi_size < 1) throw ValueError("detector config: roi_size must be >= 1");
}

double box_iou(const Box& a, const Box& b) {
  const float ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
  const float ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
  const float iw = std::max(0.0f, ix1 - ix0), ih = std::max(0.0f, iy1 - iy0);
  const double inter = static_cast<double>(iw) * ih;
  const double uni = static_cast<double>(a.area()) + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Box rect_hull(const GraspRect& r) {
  const auto c = r.corners();
  Box b{static_cast<float>(c[0][0]), static_cast<float>(c[0][1]), static_cast<float>(c[0][0]),
        static_cast<float>(c[0][1])};
  for (const auto& p : c) {
    b.x0 = std::min(b.x0, static_cast<float>(p[0]));
    b.y0 = std::min(b.y0, static_cast<float>(p[1]));
    b.x1 = std::max(b.x1, static_cast<float>(p[0]));
    b.y1 = std::max(b.y1, static_cast<float>(p[1]));
  }
  return b;
}

AnchorSet make_anchors(const DetectorConfig& config) {
  AnchorSet set;
  set.fm_h = config.feature_height();
  set.fm_w = config.feature_width();
  set.per_cell = config.anchors_per_cell();
  set.boxes.reserve(static_cast<std::size_t>(set.fm_h) * set.fm_w * set.per_cell);
  // Anchor-type-major ordering to match the [A*D, H, W] head layout.
  for (float scale : config.anchor_scales) {
    for (float aspect : config.anchor_aspects) {
      const float w = scale * std::sqrt(aspect);
      const float h = scale / std::sqrt(aspect);
      for (int i = 0; i < set.fm_h; ++i) {
        for (int j = 0; j < set.fm_w; ++j) {
          const float cy = (static_cast<float>(i) + 0.5f) * kStride;
          const float cx = (static_cast<float>(j) + 0.5f) * kStride;
          set.boxes.push_back(Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2});
        }
      }
    }
  }
  set.labels.assign(set.boxes.size(), 0);
  set.targets.assign(set.boxes.size(), {0, 0, 0, 0});
  return set;
}

std::array<float, 4> encode_box_delta(const Box& anchor, const Box& target) {
  const float aw = std::max(anchor.width(), 1.0f), ah = std::max(anchor.height(), 1.0f);
  return {
      (target.cx() - anchor.cx()) / aw,
      (target.cy() - anchor.cy()) / ah,
      std::log(std::max(target.width(), 1e-3f) / aw),
      std::log(std::max(target.height(), 1e-3f) / ah),
  };
}

Box apply_box_delta(const Box& anchor, const std::array<float, 4>& delta) {
  const float aw = std::max(anchor.width(), 1.0f), ah = std::max(anchor.height(), 1.0f);
  const float cx = anchor.cx() + std::clamp(delta[0], -kDeltaClamp, kDeltaClamp) * aw;
  const float cy = anchor.cy() + std::clamp(delta[1], -kDeltaClamp, kDeltaClamp) * ah;
  const float w = aw * std::exp(std::clamp(delta[2], -kDeltaClamp, kDeltaClamp));
  const float h = ah * std::exp(std::clamp(delta[3], -kDeltaClamp, kDeltaClamp));
  return Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

void assign_anchor_targets(AnchorSet& anchors, const std::vector<GraspRect>& truths) {
  const int n = anchors.count();
  anchors.labels.assign(static_cast<std::size_t>(n), 0);
  anchors.targets.assign(static_cast<std::size_t>(n), {0, 0, 0, 0});
  if (truths.empty()) return;  // everything stays negative

  std::vector<Box> hulls;
  hulls.reserve(truths.size());
  for (const auto& t : truths) hulls.push_back(rect_hull(t.canonical()));

  std::vector<int> best_truth(static_cast<std::size_t>(n), -1);
  std::vector<double> best_iou(static_cast<std::size_t>(n), 0.0);
  std::vector<int> truth_argmax(hulls.size(), -1);
  std::vector<double> truth_best(hulls.size(), -1.0);

  for (int i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < hulls.size(); ++t) {
      const double iou = box_iou(anchors.boxes[static_cast<std::size_t>(i)], hulls[t]);
      if (iou > best_iou[static_cast<std::size_t>(i)]) {
        best_iou[static_cast<std::size_t>(i)] = iou;
        best_truth[static_cast<std::size_t>(i)] = static_cast<int>(t);
      }
      if (iou > truth_best[t]) {
        truth_best[t] = iou;
        truth_argmax[t] = i;
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    const double iou = best_iou[static_cast<std::size_t>(i)];
    if (iou >= 0.5) {
      anchors.labels[static_cast<std::size_t>(i)] = 1;
    } else if (iou < 0.3) {
      anchors.labels[static_cast<std::size_t>(i)] = 0;
    } else {
      anchors.labels[static_cast<std::size_t>(i)] = -1;
    }
  }
  // Every truth keeps its best-overlapping anchor positive.
  for (std::size_t t = 0; t < hulls.size(); ++t) {
    if (truth_argmax[t] >= 0 && truth_best[t] > 0.0) {
      anchors.labels[static_cast<std::size_t>(truth_argmax[t])] = 1;
      best_truth[static_cast<std::size_t>(truth_argmax[t])] = static_cast<int>(t);
    }
  }
  for (int i = 0; i < n; ++i) {
    if (anchors.labels[static_cast<std::size_t>(i)] == 1) {
      const auto& hull = hulls[static_cast<std::size_t>(best_truth[static_cast<std::size_t>(i)])];
      anchors.targets[static_cast<std::size_t>(i)] =
          encode_box_delta(anchors.boxes[static_cast<std::size_t>(i)], hull);
    }
  }
}

DetectorModel detector_init(const DetectorConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  DetectorModel m;
  m.config = config;
  m.b0 = nn::Conv2d::init(config.input_channels, kW0, 4, 2, 1, rng);
  m.b1 = nn::Conv2d::init(kW0, kW1, 4, 2, 1, rng);
  m.b2 = nn::Conv2d::init(kW1, kW2, 4, 2, 1, rng);
  m.b3 = nn::Conv2d::init(kW2, kW3, 4, 2, 1, rng);
  m.head_conv = nn::Conv2d::init(kW3, kW3, 3, 1, 1, rng);
  m.obj_head = nn::Conv2d::init(kW3, config.anchors_per_cell(), 1, 1, 0, rng);
  m.reg_head = nn::Conv2d::init(kW3, 4 * config.anchors_per_cell(), 1, 1, 0, rng);
  m.fc1 = nn::Linear::init(kW3 * config.roi_size * config.roi_size, kHidden, rng);
  m.cls_head = nn::Linear::init(kHidden, kNumBins, rng);
  m.ref_head = nn::Linear::init(kHidden, kNumBins * 4, rng);
  return m;
}

std::vector<TensorPtr> DetectorModel::parameters() const {
  std::vector<TensorPtr> p;
  nn::append_params(p, b0);
  nn::append_params(p, b1);
  nn::append_params(p, b2);
  nn::append_params(p, b3);
  nn::append_params(p, head_conv);
  nn::append_params(p, obj_head);
  nn::append_params(p, reg_head);
  nn::append_params(p, fc1);
  nn::append_params(p, cls_head);
  nn::append_params(p, ref_head);
  return p;
}

namespace {

TensorPtr backbone_forward(Tape* tape, const DetectorModel& m, const TensorPtr& image) {
  auto x = ops::leaky_relu(tape, m.b0.forward(tape, image), nn::kLeakySlope);
  x = ops::leaky_relu(tape, m.b1.forward(tape, x), nn::kLeakySlope);
  x = ops::leaky_relu(tape, m.b2.forward(tape, x), nn::kLeakySlope);
  x = ops::leaky_relu(tape, m.b3.forward(tape, x), nn::kLeakySlope);
  return ops::leaky_relu(tape, m.head_conv.forward(tape, x), nn::kLeakySlope);
}

struct StageTwoOut {
  TensorPtr cls;  // [P, 21]
  TensorPtr ref;  // [P, 84]
};

StageTwoOut stage_two_forward(Tape* tape, const DetectorModel& m, const TensorPtr& features,
                              const std::vector<Box>& boxes) {
  std::vector<ops::BoxF> fboxes;
  fboxes.reserve(boxes.size());
  for (const auto& b : boxes) {
    fboxes.push_back(ops::BoxF{b.x0 / kStride, b.y0 / kStride, b.x1 / kStride, b.y1 / kStride});
  }
  auto crops = ops::crop_resize(tape, features, fboxes, m.config.roi_size);
  const int p = static_cast<int>(boxes.size());
  auto flat = ops::reshape(tape, crops, {p, kW3 * m.config.roi_size * m.config.roi_size});
  auto hidden = ops::leaky_relu(tape, m.fc1.forward(tape, flat), nn::kLeakySlope);
  return StageTwoOut{m.cls_head.forward(tape, hidden), m.ref_head.forward(tape, hidden)};
}

void softmax_row(const float* logits, int k, std::vector<float>& probs) {
  probs.resize(static_cast<std::size_t>(k));
  float mx = logits[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (int i = 0; i < k; ++i) {
    probs[static_cast<std::size_t>(i)] = std::exp(logits[i] - mx);
    z += probs[static_cast<std::size_t>(i)];
  }
  for (auto& v : probs) v = static_cast<float>(v / z);
}

struct Proposal {
  Box box;
  float score = 0.0f;
  int anchor_index = 0;
};

std::vector<Proposal> propose(const DetectorModel& m, const AnchorSet& anchors,
                              const TensorPtr& obj_rows, const TensorPtr& reg_rows) {
  const auto& cfg = m.config;
  std::vector<Proposal> all;
  all.reserve(anchors.boxes.size());
  for (int i = 0; i < anchors.count(); ++i) {
    std::array<float, 4> delta{
        reg_rows->data[static_cast<std::size_t>(i) * 4 + 0],
        reg_rows->data[static_cast<std::size_t>(i) * 4 + 1],
        reg_rows->data[static_cast<std::size_t>(i) * 4 + 2],
        reg_rows->data[static_cast<std::size_t>(i) * 4 + 3],
    };
    Box b = apply_box_delta(anchors.boxes[static_cast<std::size_t>(i)], delta);
    b.x0 = std::clamp(b.x0, 0.0f, static_cast<float>(cfg.input_width - 1));
    b.x1 = std::clamp(b.x1, 0.0f, static_cast<float>(cfg.input_width - 1));
    b.y0 = std::clamp(b.y0, 0.0f, static_cast<float>(cfg.input_height - 1));
    b.y1 = std::clamp(b.y1, 0.0f, static_cast<float>(cfg.input_height - 1));
    if (b.width() < kMinBoxSide || b.height() < kMinBoxSide) continue;
    const float logit = obj_rows->data[static_cast<std::size_t>(i)];
    all.push_back(Proposal{b, 1.0f / (1.0f + std::exp(-logit)), i});
  }
  std::sort(all.begin(), all.end(), [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.anchor_index < b.anchor_index;
  });
  std::vector<Proposal> kept;
  for (const auto& cand : all) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (box_iou(cand.box, k.box) > cfg.nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      kept.push_back(cand);
      if (static_cast<int>(kept.size()) >= cfg.top_n) break;
    }
  }
  return kept;
}

}  // namespace

TensorPtr gpn_loss(Tape* tape, const AnchorSet& anchors, const TensorPtr& obj_logits,
                   const TensorPtr& deltas, float lambda, bool pure_l1) {
  const int n = anchors.count();
  if (obj_logits->numel() != n) {
    throw ShapeError("gpn_loss: " + std::to_string(obj_logits->numel()) + " logits for " +
                     std::to_string(n) + " anchors");
  }
  if (deltas->rank() != 2 || deltas->dim(0) != n || deltas->dim(1) != 4) {
    throw ShapeError("gpn_loss: deltas must be [" + std::to_string(n) + ",4], got " +
                     shape_str(deltas->shape));
  }
  std::vector<float> cls_targets(static_cast<std::size_t>(n));
  std::vector<float> cls_weights(static_cast<std::size_t>(n));
  std::vector<float> reg_weights(static_cast<std::size_t>(n));
  std::vector<float> reg_targets(static_cast<std::size_t>(n) * 4);
  for (int i = 0; i < n; ++i) {
    const auto label = anchors.labels[static_cast<std::size_t>(i)];
    cls_targets[static_cast<std::size_t>(i)] = label == 1 ? 1.0f : 0.0f;
    cls_weights[static_cast<std::size_t>(i)] = label >= 0 ? 1.0f : 0.0f;
    reg_weights[static_cast<std::size_t>(i)] = label == 1 ? 1.0f : 0.0f;
    for (int j = 0; j < 4; ++j) {
      reg_targets[static_cast<std::size_t>(i) * 4 + j] =
          anchors.targets[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  auto cls = ops::bce_with_logits_sum(tape, obj_logits, cls_targets, cls_weights);
  auto reg = ops::smooth_l1_sum(tape, deltas, reg_targets, reg_weights, pure_l1);
  return ops::add(tape, cls, ops::affine(tape, reg, lambda, 0.0f));
}

TensorPtr gcr_loss(Tape* tape, const TensorPtr& bin_logits, const TensorPtr& refinements,
                   const std::vector<int>& truth_bins,
                   const std::vector<std::array<float, 4>>& truth_deltas, float lambda2,
                   bool pure_l1) {
  if (bin_logits->rank() != 2 || bin_logits->dim(1) != kNumBins) {
    throw ShapeError("gcr_loss: logits must be [P," + std::to_string(kNumBins) + "], got " +
                     shape_str(bin_logits->shape));
  }
  const int p = bin_logits->dim(0);
  if (refinements->rank() != 2 || refinements->dim(0) != p ||
      refinements->dim(1) != kNumBins * 4) {
    throw ShapeError("gcr_loss: refinements must be [P," + std::to_string(kNumBins * 4) +
                     "], got " + shape_str(refinements->shape));
  }
  if (static_cast<int>(truth_bins.size()) != p || static_cast<int>(truth_deltas.size()) != p) {
    throw ShapeError("gcr_loss: " + std::to_string(truth_bins.size()) + " bins / " +
                     std::to_string(truth_deltas.size()) + " boxes for " + std::to_string(p) +
                     " candidates");
  }
  for (int b : truth_bins) {
    if (b < 0 || b >= kNumBins) throw ValueError("gcr_loss: bin label out of range");
  }
  std::vector<float> cls_weights(static_cast<std::size_t>(p), 1.0f);
  std::vector<float> reg_weights(static_cast<std::size_t>(p));
  std::vector<float> reg_targets(static_cast<std::size_t>(p) * 4);
  for (int i = 0; i < p; ++i) {
    reg_weights[static_cast<std::size_t>(i)] =
        truth_bins[static_cast<std::size_t>(i)] != 0 ? 1.0f : 0.0f;
    for (int j = 0; j < 4; ++j) {
      reg_targets[static_cast<std::size_t>(i) * 4 + j] =
          truth_deltas[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  auto cls = ops::softmax_ce_sum(tape, bin_logits, truth_bins, cls_weights);
  auto reg = ops::smooth_l1_sum_indexed(tape, refinements, kNumBins, truth_bins, reg_targets,
                                        reg_weights, pure_l1);
  return ops::add(tape, cls, ops::affine(tape, reg, lambda2, 0.0f));
}

TensorPtr total_loss(Tape* tape, const TensorPtr& l_gpn, const TensorPtr& l_gcr) {
  return ops::add(tape, l_gpn, l_gcr);
}

std::vector<GraspCandidate> detect(const DetectorModel& model, const Tensor& image) {
  const auto& cfg = model.config;
  const Shape expected{cfg.input_channels, cfg.input_height, cfg.input_width};
  if (image.shape != expected) {
    throw ShapeError("detect: image shape " + shape_str(image.shape) + " does not match config " +
                     shape_str(expected));
  }
  auto x = tensor_clone(image);
  auto features = backbone_forward(nullptr, model, x);
  auto obj = model.obj_head.forward(nullptr, features);
  auto reg = model.reg_head.forward(nullptr, features);
  auto obj_rows = ops::anchor_rows(nullptr, obj, 1);
  auto reg_rows = ops::anchor_rows(nullptr, reg, 4);

  const AnchorSet anchors = make_anchors(cfg);
  const auto proposals = propose(model, anchors, obj_rows, reg_rows);
  if (proposals.empty()) return {};

  std::vector<Box> boxes;
  boxes.reserve(proposals.size());
  for (const auto& pr : proposals) boxes.push_back(pr.box);
  const auto heads = stage_two_forward(nullptr, model, features, boxes);

  std::vector<GraspCandidate> out;
  std::vector<float> probs;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const float* row = heads.cls->data.data() + i * kNumBins;
    softmax_row(row, kNumBins, probs);
    int best = 1;
    for (int b = 2; b < kNumBins; ++b) {
      if (probs[static_cast<std::size_t>(b)] > probs[static_cast<std::size_t>(best)]) best = b;
    }
    // No-grasp dominance suppresses the candidate.
    if (probs[static_cast<std::size_t>(best)] <= probs[0]) continue;

    std::array<float, 4> delta{
        heads.ref->data[i * kNumBins * 4 + static_cast<std::size_t>(best) * 4 + 0],
        heads.ref->data[i * kNumBins * 4 + static_cast<std::size_t>(best) * 4 + 1],
        heads.ref->data[i * kNumBins * 4 + static_cast<std::size_t>(best) * 4 + 2],
        heads.ref->data[i * kNumBins * 4 + static_cast<std::size_t>(best) * 4 + 3],
    };
    const Box refined = apply_box_delta(proposals[i].box, delta);
    GraspCandidate cand;
    cand.rect.x = refined.cx();
    cand.rect.y = refined.cy();
    cand.rect.w = std::max(refined.width(), 1.0f);
    cand.rect.h = std::max(refined.height(), 1.0f);
    cand.rect.theta_deg = bin_to_angle(best);
    cand.bin = best;
    cand.confidence = probs[static_cast<std::size_t>(best)];
    out.push_back(cand);
    order.push_back(i);
  }
  std::vector<std::size_t> idx(out.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (out[a].confidence != out[b].confidence) return out[a].confidence > out[b].confidence;
    return proposals[order[a]].anchor_index < proposals[order[b]].anchor_index;
  });
  std::vector<GraspCandidate> sorted;
  sorted.reserve(out.size());
  for (std::size_t i : idx) sorted.push_back(out[i]);
  return sorted;
}

GraspDataset load_dataset(const std::string& index_json_path, const DetectorConfig& config) {
  namespace fs = std::filesystem;
  std::ifstream in(index_json_path);
  if (!in) throw ValueError("load_dataset: cannot open " + index_json_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValueError("load_dataset: bad index JSON: " + std::string(e.what()));
  }
  if (!j.contains("items") || !j["items"].is_array()) {
    throw ValueError("load_dataset: index must contain an \"items\" array");
  }
  const fs::path base = fs::path(index_json_path).parent_path();
  GraspDataset ds;
  for (const auto& item : j["items"]) {
    const fs::path img_path = base / item.at("image").get<std::string>();
    const fs::path ann_path = base / item.at("annotations").get<std::string>();
    Tensor img255 = io::read_png(img_path.string());
    const int in_h = img255.dim(1), in_w = img255.dim(2);
    const float sy = static_cast<float>(config.input_height) / in_h;
    const float sx = static_cast<float>(config.input_width) / in_w;
    img255 = io::resize_bilinear(img255, config.input_height, config.input_width);

    std::ifstream ann(ann_path);
    if (!ann) throw ValueError("load_dataset: cannot open " + ann_path.string());
    std::string text((std::istreambuf_iterator<char>(ann)), std::istreambuf_iterator<char>());
    auto parsed = parse_rect_annotations(text);

    GraspSample sample;
    sample.image = io::to_unit_range(img255);
    for (auto r : parsed.rects) {
      // Exact mapping of the rect's own axes under per-axis scaling.
      const double th = r.theta_deg * 3.14159265358979323846 / 180.0;
      const double wx = std::cos(th) * sx, wy = std::sin(th) * sy;
      const double hx = -std::sin(th) * sx, hy = std::cos(th) * sy;
      GraspRect s;
      s.x = r.x * sx;
      s.y = r.y * sy;
      s.w = static_cast<float>(r.w * std::hypot(wx, wy));
      s.h = static_cast<float>(r.h * std::hypot(hx, hy));
      s.theta_deg = canonical_angle_deg(
          static_cast<float>(std::atan2(wy, wx) * 180.0 / 3.14159265358979323846));
      sample.truths.push_back(s);
    }
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

namespace {

// Stage-2 training pool: truth hulls, jittered copies, and background boxes.
struct StageTwoBatch {
  std::vector<Box> boxes;
  std::vector<int> bins;
  std::vector<std::array<float, 4>> deltas;
};

StageTwoBatch stage_two_batch(const GraspSample& sample, const DetectorConfig& cfg,
                              int bg_per_image, std::mt19937& rng) {
  StageTwoBatch batch;
  std::vector<Box> hulls;
  std::uniform_real_distribution<float> uni(-1.0f, 1.0f);
  for (const auto& truth : sample.truths) {
    const auto canon = truth.canonical();
    const Box hull = rect_hull(canon);
    hulls.push_back(hull);
    const Box oriented{canon.x - canon.w / 2, canon.y - canon.h / 2, canon.x + canon.w / 2,
                       canon.y + canon.h / 2};
    batch.boxes.push_back(hull);
    batch.bins.push_back(angle_to_bin(canon.theta_deg));
    batch.deltas.push_back(encode_box_delta(hull, oriented));
    // One jittered copy keeps the refinement head tolerant of stage-1 noise.
    Box jit = hull;
    const float jx = uni(rng) * 0.08f * hull.width();
    const float jy = uni(rng) * 0.08f * hull.height();
    const float jscale = 1.0f + uni(rng) * 0.12f;
    const float cw = hull.width() * jscale / 2, ch = hull.height() * jscale / 2;
    jit = Box{hull.cx() + jx - cw, hull.cy() + jy - ch, hull.cx() + jx + cw, hull.cy() + jy + ch};
    batch.boxes.push_back(jit);
    batch.bins.push_back(angle_to_bin(canon.theta_deg));
    batch.deltas.push_back(encode_box_delta(jit, oriented));
  }
  std::uniform_real_distribution<float> ux(0.0f, static_cast<float>(cfg.input_width - 1));
  std::uniform_real_distribution<float> uy(0.0f, static_cast<float>(cfg.input_height - 1));
  std::uniform_real_distribution<float> usz(16.0f, 64.0f);
  for (int b = 0; b < bg_per_image; ++b) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      const float w = usz(rng), h = usz(rng);
      const float cx = ux(rng), cy = uy(rng);
      Box box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
      box.x0 = std::clamp(box.x0, 0.0f, static_cast<float>(cfg.input_width - 1));
      box.x1 = std::clamp(box.x1, 0.0f, static_cast<float>(cfg.input_width - 1));
      box.y0 = std::clamp(box.y0, 0.0f, static_cast<float>(cfg.input_height - 1));
      box.y1 = std::clamp(box.y1, 0.0f, static_cast<float>(cfg.input_height - 1));
      if (box.width() < kMinBoxSide || box.height() < kMinBoxSide) continue;
      bool clear = true;
      for (const auto& hull : hulls) {
        if (box_iou(box, hull) >= 0.3) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      batch.boxes.push_back(box);
      batch.bins.push_back(0);
      batch.deltas.push_back({0, 0, 0, 0});
      break;
    }
  }
  return batch;
}

}  // namespace

DetectorModel train_detector(const GraspDataset& dataset, const DetectorConfig& config,
                             const DetectorTrainConfig& train_config,
                             DetectorTrainReport* report) {
  config.validate();
  if (dataset.samples.empty()) throw ValueError("train_detector: dataset is empty");
  if (train_config.steps < 1) throw ValueError("train_detector: steps must be >= 1");
  const Shape expected{config.input_channels, config.input_height, config.input_width};
  for (const auto& s : dataset.samples) {
    if (s.image.shape != expected) {
      throw ShapeError("train_detector: sample shape " + shape_str(s.image.shape) +
                       " does not match config " + shape_str(expected));
    }
  }

  DetectorModel model = detector_init(config, train_config.seed);
  auto params = model.parameters();
  nn::AdamState opt;
  std::mt19937 rng(static_cast<std::mt19937::result_type>(train_config.seed) + 17);

  // Anchor targets are fixed per sample; precompute them.
  std::vector<AnchorSet> assigned(dataset.samples.size(), make_anchors(config));
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    assign_anchor_targets(assigned[i], dataset.samples[i].truths);
  }

  std::vector<int> order(dataset.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  float last_loss = 0.0f;
  for (int step = 1; step <= train_config.steps; ++step) {
    if (cursor >= order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const int si = order[cursor++];
    const auto& sample = dataset.samples[static_cast<std::size_t>(si)];
    const auto& anchors = assigned[static_cast<std::size_t>(si)];

    nn::zero_grads(params);
    Tape tape;
    auto features = backbone_forward(&tape, model, tensor_clone(sample.image));
    auto obj_rows = ops::anchor_rows(&tape, model.obj_head.forward(&tape, features), 1);
    auto reg_rows = ops::anchor_rows(&tape, model.reg_head.forward(&tape, features), 4);
    auto l_gpn = gpn_loss(&tape, anchors, obj_rows, reg_rows, config.lambda, config.pure_l1);

    auto stage2 = stage_two_batch(sample, config, train_config.background_per_image, rng);
    TensorPtr loss;
    const float anchor_norm = 1.0f / static_cast<float>(anchors.count());
    if (!stage2.boxes.empty()) {
      auto heads = stage_two_forward(&tape, model, features, stage2.boxes);
      auto l_gcr =
          gcr_loss(&tape, heads.cls, heads.ref, stage2.bins, stage2.deltas, config.lambda2,
                   config.pure_l1);
      // Per-term normalization conditions the step size; the objective is
      // still the Eq-10 style sum of both stages.
      loss = total_loss(&tape, ops::affine(&tape, l_gpn, anchor_norm, 0.0f),
                        ops::affine(&tape, l_gcr, 1.0f / static_cast<float>(stage2.boxes.size()),
                                    0.0f));
    } else {
      loss = ops::affine(&tape, l_gpn, anchor_norm, 0.0f);
    }
    if (!std::isfinite(loss->data[0])) {
      throw ValueError("train_detector: loss diverged at step " + std::to_string(step));
    }
    last_loss = loss->data[0];
    tape.backward(loss);
    nn::adam_step(params, opt, train_config.learning_rate);

    if (report && step % train_config.log_every == 0) {
      report->points.push_back(DetectorTrainPoint{step, last_loss});
    }
  }
  if (report) report->final_loss = last_loss;
  return model;
}

DetectorEval evaluate_detector(const DetectorModel& model, const GraspDataset& dataset) {
  DetectorEval eval;
  for (const auto& sample : dataset.samples) {
    ++eval.images;
    const auto candidates = detect(model, sample.image);
    eval.emitted += static_cast<int>(candidates.size());
    if (sample.truths.empty()) continue;
    ++eval.images_with_truths;
    bool top_ok = false;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const bool ok = is_success(candidates[i], sample.truths);
      if (ok) ++eval.successes;
      if (i == 0 && ok) top_ok = true;
    }
    if (top_ok) ++eval.images_with_success;
  }
  return eval;
}

void save_detector(const DetectorModel& model, const std::string& path) {
  std::vector<std::uint8_t> bytes;
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  put_u16le(bytes, kVersion);
  const auto& c = model.config;
  put_u32le(bytes, static_cast<std::uint32_t>(c.input_channels));
  put_u32le(bytes, static_cast<std::uint32_t>(c.input_height));
  put_u32le(bytes, static_cast<std::uint32_t>(c.input_width));
  put_u32le(bytes, static_cast<std::uint32_t>(c.top_n));
  put_u32le(bytes, static_cast<std::uint32_t>(c.roi_size));
  put_f32le(bytes, c.nms_iou);
  put_u32le(bytes, static_cast<std::uint32_t>(c.anchor_scales.size()));
  for (float s : c.anchor_scales) put_f32le(bytes, s);
  put_u32le(bytes, static_cast<std::uint32_t>(c.anchor_aspects.size()));
  for (float a : c.anchor_aspects) put_f32le(bytes, a);

  const auto params = model.parameters();
  std::uint64_t count = 0;
  for (const auto& t : params) count += static_cast<std::uint64_t>(t->numel());
  put_u64le(bytes, count);
  std::vector<std::uint8_t> payload;
  for (const auto& t : params) {
    for (float v : t->data) put_f32le(payload, v);
  }
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  put_u64le(bytes, fnv1a64(payload.data(), payload.size()));

  std::string err;
  if (!write_file_bytes(path, bytes, err)) {
    throw codec::CheckpointError(codec::CheckpointErrorKind::kIo, "save_detector: " + err);
  }
}

DetectorModel load_detector(const std::string& path) {
  using codec::CheckpointError;
  using codec::CheckpointErrorKind;
  std::string err;
  const auto bytes = read_file_bytes(path, err);
  if (!err.empty()) throw CheckpointError(CheckpointErrorKind::kIo, "load_detector: " + err);

  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  if (!r.bytes(magic, 4)) {
    throw CheckpointError(CheckpointErrorKind::kTruncated, "detector file shorter than magic");
  }
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrorKind::kBadMagic, "not a detector checkpoint (bad magic)");
  }
  const std::uint16_t version = r.u16le();
  if (r.ok() && version != kVersion) {
    throw CheckpointError(CheckpointErrorKind::kBadVersion,
                          "unsupported detector version " + std::to_string(version));
  }
  DetectorConfig cfg;
  cfg.input_channels = static_cast<int>(r.u32le());
  cfg.input_height = static_cast<int>(r.u32le());
  cfg.input_width = static_cast<int>(r.u32le());
  cfg.top_n = static_cast<int>(r.u32le());
  cfg.roi_size = static_cast<int>(r.u32le());
  cfg.nms_iou = r.f32le();
  cfg.anchor_scales.assign(r.u32le(), 0.0f);
  if (cfg.anchor_scales.size() > 64) {
    throw CheckpointError(CheckpointErrorKind::kConfigInvalid, "implausible anchor scale count");
  }
  for (auto& s : cfg.anchor_scales) s = r.f32le();
  cfg.anchor_aspects.assign(r.u32le(), 0.0f);
  if (cfg.anchor_aspects.size() > 64) {
    throw CheckpointError(CheckpointErrorKind::kConfigInvalid, "implausible anchor aspect count");
  }
  for (auto& a : cfg.anchor_aspects) a = r.f32le();
  const std::uint64_t count = r.u64le();
  if (!r.ok()) {
    throw CheckpointError(CheckpointErrorKind::kTruncated, "detector header truncated");
  }
  try {
    cfg.validate();
  } catch (const ValueError& e) {
    throw CheckpointError(CheckpointErrorKind::kConfigInvalid, e.what());
  }

  DetectorModel model = detector_init(cfg, 0);
  const auto params = model.parameters();
  std::uint64_t expected = 0;
  for (const auto& t : params) expected += static_cast<std::uint64_t>(t->numel());
  if (count != expected) {
    throw CheckpointError(CheckpointErrorKind::kCountMismatch,
                          "detector declares " + std::to_string(count) +
                              " parameters, config requires " + std::to_string(expected));
  }
  if (r.remaining() != count * 4 + 8) {
    throw CheckpointError(CheckpointErrorKind::kTruncated,
                          "detector payload is " + std::to_string(r.remaining()) +
                              " bytes, expected " + std::to_string(count * 4 + 8));
  }
  const std::size_t payload_start = r.pos;
  for (const auto& t : params) {
    for (auto& v : t->data) v = r.f32le();
  }
  const std::uint64_t stored = r.u64le();
  const std::uint64_t actual = fnv1a64(bytes.data() + payload_start, count * 4);
  if (stored != actual) {
    throw CheckpointError(CheckpointErrorKind::kHashMismatch,
                          "parameter content hash mismatch (corrupt detector file)");
  }
  return model;
}

}  // namespace gw::grasp

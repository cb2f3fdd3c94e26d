#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gw/grasp.hpp"
#include "gw/nn.hpp"
#include "gw/tensor.hpp"

namespace gw::grasp {

struct DetectorConfig {
  int input_channels = 3;
  int input_height = 210;
  int input_width = 150;

  // Anchor menu over the backbone feature map (stride 16 after four stride-2
  // blocks): 3 scales x 3 aspect ratios per cell.
  std::vector<float> anchor_scales = {24.0f, 48.0f, 96.0f};
  std::vector<float> anchor_aspects = {0.5f, 1.0f, 2.0f};
  float nms_iou = 0.5f;
  int top_n = 32;
  int roi_size = 7;

  float lambda = 1.0f;    // proposal-stage regression weight
  float lambda2 = 1.0f;   // configuration-stage refinement weight
  bool pure_l1 = false;   // plain L1 instead of smooth-L1 regression

  int anchors_per_cell() const {
    return static_cast<int>(anchor_scales.size() * anchor_aspects.size());
  }
  int feature_height() const;
  int feature_width() const;
  void validate() const;
};

// Axis-aligned box in pixel coordinates.
struct Box {
  float x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  float width() const { return x1 - x0; }
  float height() const { return y1 - y0; }
  float cx() const { return 0.5f * (x0 + x1); }
  float cy() const { return 0.5f * (y0 + y1); }
  float area() const { return std::max(0.0f, width()) * std::max(0.0f, height()); }
};

double box_iou(const Box& a, const Box& b);
Box rect_hull(const GraspRect& r);

// Anchor grid with graspability labels (1 positive, 0 negative, -1 ignored)
// and 4-parameter offset targets for positives. Ordering matches the head
// tensors: index = (a*H + i)*W + j.
struct AnchorSet {
  int fm_h = 0, fm_w = 0, per_cell = 0;
  std::vector<Box> boxes;
  std::vector<std::int8_t> labels;
  std::vector<std::array<float, 4>> targets;

  int count() const { return static_cast<int>(boxes.size()); }
};

AnchorSet make_anchors(const DetectorConfig& config);

// Positive iff hull IoU >= 0.5 or the anchor is some truth's argmax; negative
// iff best IoU < 0.3; everything else ignored.
void assign_anchor_targets(AnchorSet& anchors, const std::vector<GraspRect>& truths);

std::array<float, 4> encode_box_delta(const Box& anchor, const Box& target);
Box apply_box_delta(const Box& anchor, const std::array<float, 4>& delta);

struct DetectorModel {
  DetectorConfig config;
  nn::Conv2d b0, b1, b2, b3;       // stride-2 backbone
  nn::Conv2d head_conv;            // 3x3 context conv
  nn::Conv2d obj_head;             // 1x1 -> A graspability logits
  nn::Conv2d reg_head;             // 1x1 -> 4A offsets
  nn::Linear fc1;                  // roi features -> hidden
  nn::Linear cls_head;             // hidden -> 21 orientation classes
  nn::Linear ref_head;             // hidden -> 21*4 per-class refinements

  std::vector<TensorPtr> parameters() const;
};

DetectorModel detector_init(const DetectorConfig& config, std::uint64_t seed);

// Graspability cross-entropy over anchors plus lambda-weighted offset
// regression gated on positive anchors. obj_logits: [N,1]; deltas: [N,4].
TensorPtr gpn_loss(Tape* tape, const AnchorSet& anchors, const TensorPtr& obj_logits,
                   const TensorPtr& deltas, float lambda, bool pure_l1);

// 21-class orientation cross-entropy plus lambda2-weighted per-class box
// refinement; the no-grasp class contributes no regression.
TensorPtr gcr_loss(Tape* tape, const TensorPtr& bin_logits, const TensorPtr& refinements,
                   const std::vector<int>& truth_bins,
                   const std::vector<std::array<float, 4>>& truth_deltas, float lambda2,
                   bool pure_l1);

TensorPtr total_loss(Tape* tape, const TensorPtr& l_gpn, const TensorPtr& l_gcr);

// Two-stage inference. Emits a candidate only when its best orientation bin
// outscores the no-grasp class; candidates are sorted by confidence then
// originating anchor index.
std::vector<GraspCandidate> detect(const DetectorModel& model, const Tensor& image);

struct GraspSample {
  Tensor image;  // [3,H,W] in [-1,1]
  std::vector<GraspRect> truths;
};

struct GraspDataset {
  std::vector<GraspSample> samples;
};

// Directory layout: PNG images with sibling annotation text files, bound by
// an index.json of {"items": [{"image": ..., "annotations": ...}]}.
GraspDataset load_dataset(const std::string& index_json_path, const DetectorConfig& config);

struct DetectorTrainConfig {
  int steps = 600;
  float learning_rate = 0.0005f;
  std::uint64_t seed = 0;
  int background_per_image = 4;
  int log_every = 50;
};

struct DetectorTrainPoint {
  int step = 0;
  float loss = 0.0f;
};

struct DetectorTrainReport {
  std::vector<DetectorTrainPoint> points;
  float final_loss = 0.0f;
};

DetectorModel train_detector(const GraspDataset& dataset, const DetectorConfig& config,
                             const DetectorTrainConfig& train_config,
                             DetectorTrainReport* report = nullptr);

struct DetectorEval {
  int images = 0;
  int emitted = 0;
  int successes = 0;
  int images_with_success = 0;   // top candidate succeeds
  int images_with_truths = 0;
  double per_candidate_rate() const { return emitted > 0 ? double(successes) / emitted : 0.0; }
  double per_image_rate() const {
    return images_with_truths > 0 ? double(images_with_success) / images_with_truths : 0.0;
  }
};

DetectorEval evaluate_detector(const DetectorModel& model, const GraspDataset& dataset);

// Same container discipline as the codec checkpoint, magic "GWD1".
void save_detector(const DetectorModel& model, const std::string& path);
DetectorModel load_detector(const std::string& path);

}  // namespace gw::grasp

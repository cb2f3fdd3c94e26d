#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace gw::grasp {

// Oriented grasp rectangle: (x, y) center in pixels, w the gripper-opening
// extent, h the plate extent, theta the opening direction in degrees
// canonicalized to [-90, 90).
struct GraspRect {
  float x = 0, y = 0;
  float w = 0, h = 0;
  float theta_deg = 0;

  void validate() const;
  GraspRect canonical() const;
  // Corner order matches the annotation convention: first edge runs along w.
  std::array<std::array<double, 2>, 4> corners() const;
};

// Wraps into [-90, 90) with period 180.
float canonical_angle_deg(float theta_deg);

// Circular angle difference with period 180, in [0, 90].
double angle_diff_deg(float a, float b);

inline constexpr int kOrientationBins = 20;  // bins 1..20, 9 degrees each
inline constexpr int kNumBins = kOrientationBins + 1;  // bin 0 = no-grasp
inline constexpr float kBinWidthDeg = 9.0f;

// Bin k (1-based) covers [-90 + (k-1)*9, -90 + k*9); angles canonicalize
// first. Bin 0 is the explicit no-grasp class and has no angle.
int angle_to_bin(float theta_deg);
float bin_to_angle(int bin);  // interval center; rejects bin 0 and out-of-range

struct GraspCandidate {
  GraspRect rect;
  int bin = 0;
  float confidence = 0.0f;  // normalized over all 21 classes
};

// Oriented-rectangle intersection over union via convex polygon clipping.
double rect_iou(const GraspRect& a, const GraspRect& b);

// True iff some ground truth is within 30 degrees (period 180) and has
// IoU > 0.25 with the prediction.
bool is_success(const GraspCandidate& pred, const std::vector<GraspRect>& truths);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line) : std::runtime_error(msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct ParsedAnnotations {
  std::vector<GraspRect> rects;
  int skipped_groups = 0;  // groups dropped for non-finite coordinates
};

// Parses vertex-quadruple annotations: groups of four "x y" lines per
// rectangle. The first edge defines w and theta; line counts not divisible by
// four raise ParseError with the offending line number.
ParsedAnnotations parse_rect_annotations(const std::string& text);

}  // namespace gw::grasp

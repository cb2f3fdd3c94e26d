#include "gw/grasp.hpp"

#include <cmath>
#include <sstream>

#include "gw/errors.hpp"

namespace gw::grasp {

namespace {

constexpr double kPi = 3.14159265358979323846;

double deg2rad(double d) { return d * kPi / 180.0; }

using Pt = std::array<double, 2>;

double polygon_area(const std::vector<Pt>& poly) {
  double acc = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    acc += p[0] * q[1] - q[0] * p[1];
  }
  return std::fabs(acc) * 0.5;
}

// Sutherland-Hodgman clip of a convex polygon against the half-plane on the
// left of edge a->b.
std::vector<Pt> clip_edge(const std::vector<Pt>& poly, const Pt& a, const Pt& b) {
  std::vector<Pt> out;
  const std::size_t n = poly.size();
  auto side = [&](const Pt& p) {
    return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const Pt& cur = poly[i];
    const Pt& nxt = poly[(i + 1) % n];
    const double sc = side(cur), sn = side(nxt);
    if (sc >= 0) out.push_back(cur);
    if ((sc > 0 && sn < 0) || (sc < 0 && sn > 0)) {
      const double t = sc / (sc - sn);
      out.push_back(Pt{cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])});
    }
  }
  return out;
}

}  // namespace

void GraspRect::validate() const {
  if (!(w > 0.0f) || !(h > 0.0f)) {
    throw ValueError("grasp rect: extents must be positive (w=" + std::to_string(w) +
                     ", h=" + std::to_string(h) + ")");
  }
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(theta_deg)) {
    throw ValueError("grasp rect: non-finite field");
  }
}

float canonical_angle_deg(float theta_deg) {
  double t = std::fmod(static_cast<double>(theta_deg) + 90.0, 180.0);
  if (t < 0) t += 180.0;
  return static_cast<float>(t - 90.0);
}

GraspRect GraspRect::canonical() const {
  GraspRect r = *this;
  r.theta_deg = canonical_angle_deg(theta_deg);
  return r;
}

std::array<std::array<double, 2>, 4> GraspRect::corners() const {
  const double th = deg2rad(theta_deg);
  const double ux = std::cos(th), uy = std::sin(th);    // along w
  const double vx = -std::sin(th), vy = std::cos(th);   // along h
  const double hw = w / 2.0, hh = h / 2.0;
  return {
      Pt{x - hw * ux - hh * vx, y - hw * uy - hh * vy},
      Pt{x + hw * ux - hh * vx, y + hw * uy - hh * vy},
      Pt{x + hw * ux + hh * vx, y + hw * uy + hh * vy},
      Pt{x - hw * ux + hh * vx, y - hw * uy + hh * vy},
  };
}

double angle_diff_deg(float a, float b) {
  double d = std::fabs(static_cast<double>(canonical_angle_deg(a)) - canonical_angle_deg(b));
  d = std::fmod(d, 180.0);
  return std::min(d, 180.0 - d);
}

int angle_to_bin(float theta_deg) {
  if (!std::isfinite(theta_deg)) throw ValueError("angle_to_bin: non-finite angle");
  const float t = canonical_angle_deg(theta_deg);
  int k = 1 + static_cast<int>(std::floor((t + 90.0f) / kBinWidthDeg));
  if (k > kOrientationBins) k = kOrientationBins;  // t just below +90
  if (k < 1) k = 1;
  return k;
}

float bin_to_angle(int bin) {
  if (bin == 0) throw ValueError("bin_to_angle: the no-grasp class has no orientation");
  if (bin < 1 || bin > kOrientationBins) {
    throw ValueError("bin_to_angle: bin " + std::to_string(bin) + " out of range 1.." +
                     std::to_string(kOrientationBins));
  }
  return -90.0f + (static_cast<float>(bin) - 0.5f) * kBinWidthDeg;
}

double rect_iou(const GraspRect& a, const GraspRect& b) {
  a.validate();
  b.validate();
  const auto ca = a.corners();
  const auto cb = b.corners();
  std::vector<Pt> poly(ca.begin(), ca.end());
  for (std::size_t i = 0; i < 4 && !poly.empty(); ++i) {
    poly = clip_edge(poly, cb[i], cb[(i + 1) % 4]);
  }
  const double inter = poly.size() >= 3 ? polygon_area(poly) : 0.0;
  const double area_a = static_cast<double>(a.w) * a.h;
  const double area_b = static_cast<double>(b.w) * b.h;
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::min(1.0, std::max(0.0, inter / uni));
}

bool is_success(const GraspCandidate& pred, const std::vector<GraspRect>& truths) {
  if (truths.empty()) throw ValueError("is_success: ground-truth list is empty");
  for (const auto& t : truths) {
    if (angle_diff_deg(pred.rect.theta_deg, t.theta_deg) <= 30.0 &&
        rect_iou(pred.rect, t) > 0.25) {
      return true;
    }
  }
  return false;
}

ParsedAnnotations parse_rect_annotations(const std::string& text) {
  ParsedAnnotations result;
  std::istringstream in(text);
  std::string line;
  std::vector<Pt> vertices;
  int line_no = 0;
  int parsed_lines = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // Tolerate blank trailing lines but not blanks inside a group.
    std::istringstream ls(line);
    double px = 0, py = 0;
    if (!(ls >> px)) {
      bool only_space = line.find_first_not_of(" \t\r\n") == std::string::npos;
      if (only_space && vertices.empty()) continue;
      throw ParseError("annotation line " + std::to_string(line_no) + " is not an \"x y\" pair",
                       line_no);
    }
    if (!(ls >> py)) {
      throw ParseError("annotation line " + std::to_string(line_no) + " is missing its y value",
                       line_no);
    }
    vertices.push_back(Pt{px, py});
    ++parsed_lines;
    if (vertices.size() == 4) {
      bool finite = true;
      for (const auto& v : vertices) {
        finite = finite && std::isfinite(v[0]) && std::isfinite(v[1]);
      }
      if (!finite) {
        ++result.skipped_groups;
      } else {
        const Pt& p1 = vertices[0];
        const Pt& p2 = vertices[1];
        const Pt& p3 = vertices[2];
        GraspRect r;
        r.x = static_cast<float>((vertices[0][0] + vertices[1][0] + vertices[2][0] +
                                  vertices[3][0]) / 4.0);
        r.y = static_cast<float>((vertices[0][1] + vertices[1][1] + vertices[2][1] +
                                  vertices[3][1]) / 4.0);
        const double ex = p2[0] - p1[0], ey = p2[1] - p1[1];
        r.w = static_cast<float>(std::hypot(ex, ey));
        r.h = static_cast<float>(std::hypot(p3[0] - p2[0], p3[1] - p2[1]));
        r.theta_deg = canonical_angle_deg(static_cast<float>(std::atan2(ey, ex) * 180.0 / kPi));
        result.rects.push_back(r);
      }
      vertices.clear();
    }
  }
  if (!vertices.empty()) {
    throw ParseError("annotation has " + std::to_string(parsed_lines) +
                         " vertex lines, not a multiple of 4",
                     line_no);
  }
  return result;
}

}  // namespace gw::grasp

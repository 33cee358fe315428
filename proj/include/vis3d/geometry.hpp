#pragma once

// Camera poses, pinhole projection, gravity-aligned cuboids and the
// visibility test shared by the filter, the simulator and the evaluator.
//
// Conventions:
//   * world frame is gravity aligned, +z up, ground plane z = 0;
//   * camera frame is the usual optical frame (x right, y down, z forward);
//   * RigidPose maps camera coordinates to world coordinates.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace vis3d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double theta) {
  double r = std::remainder(theta, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

/// Absolute wrapped difference, in [0, pi].
inline double angular_distance(double a, double b) { return std::abs(wrap_angle(a - b)); }

inline Mat3 yaw_rotation(double yaw) {
  return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
}

/// Heading of a camera-to-world rotation: yaw of the camera x axis in the
/// ground plane. Zero for the identity rotation.
inline double camera_heading(const Eigen::Quaterniond& camera_to_world) {
  const Vec3 x = camera_to_world * Vec3::UnitX();
  return std::atan2(x.y(), x.x());
}

struct RigidPose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose identity() { return {}; }

  Vec3 operator*(const Vec3& x) const { return rotation * x + translation; }

  RigidPose inverse() const {
    const Eigen::Quaterniond inv = rotation.conjugate();
    return {inv, -(inv * translation)};
  }
};

inline RigidPose compose(const RigidPose& a, const RigidPose& b) {
  Eigen::Quaterniond q = a.rotation * b.rotation;
  q.normalize();
  return {q, a.rotation * b.translation + a.translation};
}

inline RigidPose invert(const RigidPose& p) { return p.inverse(); }

/// Camera-to-world pose of a camera at `position` whose optical axis points
/// along `forward`, with the image y axis as close to world -z as possible.
inline RigidPose look_along(const Vec3& position, const Vec3& forward) {
  const Vec3 f = forward.normalized();
  Vec3 r = f.cross(Vec3::UnitZ());
  if (r.norm() < 1e-9) r = Vec3::UnitX();  // looking straight up or down
  r.normalize();
  const Vec3 d = f.cross(r);
  Mat3 R;
  R.col(0) = r;
  R.col(1) = d;
  R.col(2) = f;
  RigidPose pose;
  pose.rotation = Eigen::Quaterniond(R).normalized();
  pose.translation = position;
  return pose;
}

struct Intrinsics {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  bool valid() const { return fx > 0 && fy > 0 && width > 0 && height > 0; }

  /// Unnormalized ray direction (camera frame) through pixel (u, v).
  Vec3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
};

/// Gravity-aligned box. dims = (extent along local x, local y, vertical).
struct Cuboid {
  Vec3 center = Vec3::Zero();
  double yaw = 0.0;
  Vec3 dims = Vec3::Ones();

  bool valid() const { return (dims.array() > 0.0).all() && center.allFinite() && std::isfinite(yaw); }
  double volume() const { return dims.prod(); }
};

struct PixelBox {
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  double diagonal() const { return std::hypot(width(), height()); }
  Vec2 center() const { return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}; }
  bool contains(const Vec2& p) const { return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax; }
  Vec4 vector() const { return {xmin, ymin, xmax, ymax}; }
  static PixelBox from_vector(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }

  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

/// Intersection of two boxes; empty (negative extents clamped) if disjoint.
inline PixelBox intersect(const PixelBox& a, const PixelBox& b) {
  PixelBox r{std::max(a.xmin, b.xmin), std::max(a.ymin, b.ymin), std::min(a.xmax, b.xmax), std::min(a.ymax, b.ymax)};
  if (r.xmax < r.xmin) r.xmax = r.xmin;
  if (r.ymax < r.ymin) r.ymax = r.ymin;
  return r;
}

inline PixelBox image_rect(const Intrinsics& K) {
  return {0.0, 0.0, static_cast<double>(K.width), static_cast<double>(K.height)};
}

inline constexpr double kDepthEpsilon = 1e-6;

/// Pinhole projection of a world point; nullopt when the point is behind
/// the camera (depth <= kDepthEpsilon).
inline std::optional<Vec2> project_point(const Intrinsics& K, const RigidPose& g, const Vec3& X) {
  const Vec3 Xc = g.rotation.conjugate() * (X - g.translation);
  if (Xc.z() <= kDepthEpsilon) return std::nullopt;
  return Vec2{K.fx * Xc.x() / Xc.z() + K.cx, K.fy * Xc.y() / Xc.z() + K.cy};
}

/// Sign pattern of corner i: bit 2 -> x, bit 1 -> y, bit 0 -> z.
inline Vec3 corner_signs(int i) {
  return {(i & 4) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 1) ? 1.0 : -1.0};
}

inline std::array<Vec3, 8> cuboid_corners(const Cuboid& c) {
  const Mat3 R = yaw_rotation(c.yaw);
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) out[i] = c.center + R * (0.5 * corner_signs(i).cwiseProduct(c.dims));
  return out;
}

/// Axis-aligned hull of the projected corners; nullopt if any corner is
/// behind the camera.
inline std::optional<PixelBox> project_cuboid(const Intrinsics& K, const RigidPose& g, const Cuboid& c) {
  PixelBox box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
               -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Vec3& X : cuboid_corners(c)) {
    const auto p = project_point(K, g, X);
    if (!p) return std::nullopt;
    box.xmin = std::min(box.xmin, p->x());
    box.ymin = std::min(box.ymin, p->y());
    box.xmax = std::max(box.xmax, p->x());
    box.ymax = std::max(box.ymax, p->y());
  }
  return box;
}

// ---------------------------------------------------------------------------
// Oriented 3D overlap

namespace detail {

using Polygon = std::vector<Vec2>;

inline Polygon footprint(const Cuboid& c) {
  const double hw = 0.5 * c.dims.x(), hh = 0.5 * c.dims.y();
  const double cs = std::cos(c.yaw), sn = std::sin(c.yaw);
  const std::array<Vec2, 4> local{Vec2{-hw, -hh}, Vec2{hw, -hh}, Vec2{hw, hh}, Vec2{-hw, hh}};
  Polygon out;
  out.reserve(4);
  for (const Vec2& p : local)
    out.emplace_back(c.center.x() + cs * p.x() - sn * p.y(), c.center.y() + sn * p.x() + cs * p.y());
  return out;
}

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Sutherland-Hodgman: clip `subject` against the convex CCW polygon `clip`.
inline Polygon clip_polygon(Polygon subject, const Polygon& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    const Vec2 edge = b - a;
    Polygon input;
    input.swap(subject);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Vec2& p = input[i];
      const Vec2& q = input[(i + 1) % input.size()];
      const double sp = cross2(edge, p - a);
      const double sq = cross2(edge, q - a);
      if (sp >= 0) subject.push_back(p);
      if ((sp >= 0) != (sq >= 0)) {
        const double t = sp / (sp - sq);
        subject.push_back(p + t * (q - p));
      }
    }
  }
  return subject;
}

inline double polygon_area(const Polygon& poly) {
  double a = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) a += cross2(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * std::abs(a);
}

}  // namespace detail

/// Volume IoU of two gravity-aligned cuboids: footprint polygon overlap
/// times vertical overlap.
inline double oriented_overlap_3d(const Cuboid& a, const Cuboid& b) {
  const double az0 = a.center.z() - 0.5 * a.dims.z(), az1 = a.center.z() + 0.5 * a.dims.z();
  const double bz0 = b.center.z() - 0.5 * b.dims.z(), bz1 = b.center.z() + 0.5 * b.dims.z();
  const double dz = std::min(az1, bz1) - std::max(az0, bz0);
  if (dz <= 0) return 0.0;
  // cheap circumscribed-circle rejection
  const double ra = 0.5 * std::hypot(a.dims.x(), a.dims.y());
  const double rb = 0.5 * std::hypot(b.dims.x(), b.dims.y());
  if ((a.center.head<2>() - b.center.head<2>()).norm() >= ra + rb) return 0.0;

  const double area = detail::polygon_area(detail::clip_polygon(detail::footprint(a), detail::footprint(b)));
  const double inter = area * dz;
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Visibility

/// Entry parameter t >= 0 of the ray origin + t * dir into the cuboid
/// (slab method in the cuboid frame). Zero if the origin is inside.
inline std::optional<double> ray_cuboid_entry(const Vec3& origin, const Vec3& dir, const Cuboid& c) {
  const Mat3 Rt = yaw_rotation(c.yaw).transpose();
  const Vec3 o = Rt * (origin - c.center);
  const Vec3 d = Rt * dir;
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double h = 0.5 * c.dims[i];
    if (std::abs(d[i]) < 1e-15) {
      if (o[i] < -h || o[i] > h) return std::nullopt;
      continue;
    }
    double ta = (-h - o[i]) / d[i];
    double tb = (h - o[i]) / d[i];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

enum class VisibilityKind { Visible, Occluded, OutOfView };

struct Visibility {
  VisibilityKind kind = VisibilityKind::OutOfView;
  /// Fraction of target samples blocked by other cuboids; reported for
  /// Visible targets as well.
  double occluded_fraction = 0.0;

  bool visible() const { return kind == VisibilityKind::Visible; }
  bool occluded() const { return kind == VisibilityKind::Occluded; }
  friend bool operator==(const Visibility&, const Visibility&) = default;
};

struct VisibilityParams {
  int grid = 5;
  double occlusion_threshold = 0.7;
  double min_visible_area = 64.0;  // px^2 of box inside the image
};

inline Visibility visibility_status(const Cuboid& target, std::span<const Cuboid> others, const Intrinsics& K,
                                    const RigidPose& g, const VisibilityParams& params = {}) {
  const auto box = project_cuboid(K, g, target);
  if (!box) return {VisibilityKind::OutOfView, 0.0};
  const PixelBox clipped = intersect(*box, image_rect(K));
  if (clipped.area() < params.min_visible_area) return {VisibilityKind::OutOfView, 0.0};

  const int S = std::max(1, params.grid);
  int hits = 0, blocked = 0;
  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < S; ++j) {
      const double u = clipped.xmin + (i + 0.5) / S * clipped.width();
      const double v = clipped.ymin + (j + 0.5) / S * clipped.height();
      const Vec3 dir = g.rotation * K.ray(u, v);
      const auto t_target = ray_cuboid_entry(g.translation, dir, target);
      if (!t_target) continue;  // sample falls on the hull but off the silhouette
      ++hits;
      for (const Cuboid& o : others) {
        const auto t = ray_cuboid_entry(g.translation, dir, o);
        if (t && *t < *t_target) {
          ++blocked;
          break;
        }
      }
    }
  }
  const double f = hits > 0 ? static_cast<double>(blocked) / hits : 0.0;
  if (f >= params.occlusion_threshold) return {VisibilityKind::Occluded, f};
  return {VisibilityKind::Visible, f};
}

}  // namespace vis3d

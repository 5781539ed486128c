#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "locnav/common.hpp"

namespace locnav {

inline constexpr double kPi = std::numbers::pi;

// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  Vec2& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }

  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm_sq() const { return x * x + y * y; }
  double norm() const { return std::sqrt(norm_sq()); }
  // Zero vector normalizes to zero.
  Vec2 normalized() const {
    double n = norm();
    if (n <= 0.0) return {0.0, 0.0};
    return {x / n, y / n};
  }
  Vec2 rotated(double angle) const {
    double c = std::cos(angle), s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
  }
  // Counter-clockwise perpendicular.
  Vec2 perp() const { return {-y, x}; }
  double angle() const { return std::atan2(y, x); }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

// 2D cross product (z component).
inline double det(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;  // radians, kept in (-pi, pi]

  Vec2 position() const { return {x, y}; }
  Vec2 heading() const { return {std::cos(yaw), std::sin(yaw)}; }
};

inline Pose2D make_pose(double x, double y, double yaw) { return {x, y, wrap_angle(yaw)}; }

inline Vec2 body_to_world(const Pose2D& frame, Vec2 p) {
  return p.rotated(frame.yaw) + frame.position();
}

inline Vec2 world_to_body(const Pose2D& frame, Vec2 p) {
  return (p - frame.position()).rotated(-frame.yaw);
}

// delta expressed in base's body frame, applied to base.
inline Pose2D compose(const Pose2D& base, const Pose2D& delta) {
  Vec2 t = body_to_world(base, delta.position());
  return {t.x, t.y, wrap_angle(base.yaw + delta.yaw)};
}

// b expressed in a's body frame, i.e. compose(a, relative_pose(a, b)) == b.
inline Pose2D relative_pose(const Pose2D& a, const Pose2D& b) {
  Vec2 t = world_to_body(a, b.position());
  return {t.x, t.y, wrap_angle(b.yaw - a.yaw)};
}

struct Segment {
  Vec2 a;
  Vec2 b;
  double length() const { return (b - a).norm(); }
};

// Axis-aligned box. Degenerate (zero-area) boxes are legal and denote a point
// or a line.
struct Rect {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  Vec2 center() const { return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}; }
  bool contains(Vec2 p) const {
    return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
  }
  bool contains(const Rect& o) const {
    return o.xmin >= xmin && o.xmax <= xmax && o.ymin >= ymin && o.ymax <= ymax;
  }
  bool valid() const {
    return std::isfinite(xmin) && std::isfinite(ymin) && std::isfinite(xmax) &&
           std::isfinite(ymax) && xmax >= xmin && ymax >= ymin;
  }
};

struct Disc {
  Vec2 center;
  double radius = 0.0;
};

inline Vec2 closest_point_on_segment(Vec2 p, const Segment& s) {
  Vec2 e = s.b - s.a;
  double len_sq = e.norm_sq();
  if (len_sq <= 0.0) return s.a;
  double t = std::clamp((p - s.a).dot(e) / len_sq, 0.0, 1.0);
  return s.a + e * t;
}

inline double point_segment_distance(Vec2 p, const Segment& s) {
  return (p - closest_point_on_segment(p, s)).norm();
}

// Distance along the (unit-direction) ray to the segment, if hit. Rays
// collinear with the segment are treated as misses (measure-zero case).
inline std::optional<double> ray_segment_intersection(Vec2 origin, Vec2 dir, const Segment& s) {
  Vec2 e = s.b - s.a;
  double denom = det(dir, e);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  Vec2 ao = s.a - origin;
  double t = det(ao, e) / denom;
  double u = det(ao, dir) / denom;
  if (t < 0.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

// Distance along the ray to the circle boundary. Origins inside the circle
// report 0 (the beam is already blocked).
inline std::optional<double> ray_circle_intersection(Vec2 origin, Vec2 dir, Vec2 center,
                                                     double radius) {
  Vec2 oc = origin - center;
  double b = oc.dot(dir);
  double c = oc.norm_sq() - radius * radius;
  if (c <= 0.0) return 0.0;
  double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  double t = -b - std::sqrt(disc);
  if (t < 0.0) return std::nullopt;
  return t;
}

// Closed-box test: touching the boundary counts as intersecting.
inline bool segment_intersects_rect(const Segment& s, const Rect& r) {
  if (r.contains(s.a) || r.contains(s.b)) return true;
  // Liang-Barsky clip of the parametric segment against each slab.
  Vec2 d = s.b - s.a;
  double t0 = 0.0, t1 = 1.0;
  const double p[4] = {-d.x, d.x, -d.y, d.y};
  const double q[4] = {s.a.x - r.xmin, r.xmax - s.a.x, s.a.y - r.ymin, r.ymax - s.a.y};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    double t = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, t);
    } else {
      t1 = std::min(t1, t);
    }
  }
  return t0 <= t1;
}

inline double point_rect_distance(Vec2 p, const Rect& r) {
  double dx = std::max({r.xmin - p.x, 0.0, p.x - r.xmax});
  double dy = std::max({r.ymin - p.y, 0.0, p.y - r.ymax});
  return std::hypot(dx, dy);
}

}  // namespace locnav

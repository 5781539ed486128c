// Independent brute-force reference implementations used only by tests.
// These deliberately avoid the closed-form geometry the library uses:
// raycasts are resolved by marching and bisection, convolutions by plain
// nested loops.
#pragma once

#include <cmath>
#include <vector>

#include "locnav/geometry.hpp"
#include "locnav/world.hpp"

namespace oracle {

using locnav::Disc;
using locnav::Segment;
using locnav::Vec2;
using locnav::WorldModel;

// Root of f on [lo, hi] given f(lo), f(hi) with opposite signs.
template <typename F>
double bisect(F f, double lo, double hi, double f_lo) {
  for (int i = 0; i < 60; ++i) {
    double mid = 0.5 * (lo + hi);
    double fm = f(mid);
    if ((fm < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Ray range by 1 mm marching: walk each primitive's implicit function along
// the ray until it changes sign, then bisect the bracketing interval.
inline double ray_march_range(const WorldModel& world, const std::vector<Disc>& discs,
                              Vec2 origin, double angle, double max_range,
                              double step = 1e-3) {
  Vec2 dir{std::cos(angle), std::sin(angle)};
  auto point = [&](double t) { return origin + dir * t; };
  double best = max_range;

  for (const Segment& s : world.segments) {
    Vec2 e = s.b - s.a;
    double len_sq = e.norm_sq();
    if (len_sq <= 0.0) continue;
    // Signed side of the segment's carrier line; linear along the ray, so at
    // most one sign change.
    auto side = [&](double t) { return locnav::det(e, point(t) - s.a); };
    double prev = side(0.0);
    for (double t = step; t <= best + step; t += step) {
      double cur = side(t);
      if ((cur < 0.0) != (prev < 0.0)) {
        double root = bisect(side, t - step, t, prev);
        double u = (point(root) - s.a).dot(e) / len_sq;
        if (u >= 0.0 && u <= 1.0 && root < best) best = root;
        break;
      }
      prev = cur;
    }
  }

  for (const Disc& d : discs) {
    auto inside = [&](double t) { return (point(t) - d.center).norm_sq() - d.radius * d.radius; };
    double prev = inside(0.0);
    if (prev <= 0.0) {
      best = 0.0;
      continue;
    }
    for (double t = step; t <= best + step; t += step) {
      double cur = inside(t);
      if (cur <= 0.0) {
        double root = bisect(inside, t - step, t, prev);
        if (root < best) best = root;
        break;
      }
      prev = cur;
    }
  }
  return std::min(best, max_range);
}

}  // namespace oracle

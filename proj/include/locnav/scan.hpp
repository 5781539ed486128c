#pragma once

#include <vector>

#include "locnav/common.hpp"
#include "locnav/geometry.hpp"

namespace locnav {

// Planar lidar layout: `beams` rays spread over `fov` radians centered on the
// robot heading, beam 0 pointing at yaw - fov/2, the last at yaw + fov/2.
struct LaserConfig {
  int beams = 720;
  double fov = kPi;
  double max_range = 12.0;

  double beam_offset(int i) const {
    return -0.5 * fov + fov * static_cast<double>(i) / static_cast<double>(beams - 1);
  }

  void validate() const {
    if (beams < 2) throw ValidationError("laser: need at least 2 beams");
    if (!(fov > 0.0) || !(max_range > 0.0))
      throw ValidationError("laser: fov and max_range must be positive");
  }
};

struct ScanObservation {
  std::vector<double> ranges;

  int size() const { return static_cast<int>(ranges.size()); }
};

}  // namespace locnav

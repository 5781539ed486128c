#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "locnav/config.hpp"
#include "locnav/geometry.hpp"
#include "locnav/rng.hpp"
#include "locnav/scan.hpp"

namespace locnav {

// Static geometry: thin wall segments inside an axis-aligned boundary.
struct WorldModel {
  std::string name;
  Rect bounds;
  std::vector<Segment> segments;

  void validate() const {
    if (!bounds.valid()) throw ValidationError("world '" + name + "': bounds malformed");
    for (size_t i = 0; i < segments.size(); ++i) {
      const Segment& s = segments[i];
      if (!std::isfinite(s.a.x) || !std::isfinite(s.a.y) || !std::isfinite(s.b.x) ||
          !std::isfinite(s.b.y))
        throw ValidationError("world '" + name + "': segment " + std::to_string(i) +
                              " has non-finite endpoint");
      if (!bounds.contains(s.a) || !bounds.contains(s.b))
        throw ValidationError("world '" + name + "': segment " + std::to_string(i) +
                              " lies outside bounds");
    }
  }
};

enum class CrowdDriver { kOrca, kSfm };

inline CrowdDriver parse_driver(const std::string& s, const std::string& where) {
  if (s == "orca") return CrowdDriver::kOrca;
  if (s == "sfm") return CrowdDriver::kSfm;
  throw ValidationError(where + ": unknown driver '" + s + "' (expected \"orca\" or \"sfm\")");
}

struct PedestrianSpec {
  Rect start_region;
  Rect goal_region;
  double radius = 0.3;
  double preferred_speed = 1.0;
  CrowdDriver driver = CrowdDriver::kOrca;
  // Raw per-pedestrian driver overrides (time_horizon, relaxation_time, ...);
  // resolved by the crowd module against scenario-level defaults.
  ConfigTable driver_params;
};

struct ScenarioSpec {
  WorldModel world;
  Rect robot_start_region;
  Rect robot_goal_region;
  double robot_radius = 0.17;
  std::vector<PedestrianSpec> pedestrian_specs;
  // Scenario-level [orca] / [sfm] sections, applied to every pedestrian
  // before its own block overrides.
  ConfigTable orca_defaults;
  ConfigTable sfm_defaults;

  void validate() const {
    world.validate();
    auto check_region = [&](const Rect& r, const std::string& what) {
      if (!r.valid()) throw ValidationError("scenario '" + world.name + "': " + what + " malformed");
      if (!world.bounds.contains(r))
        throw ValidationError("scenario '" + world.name + "': " + what + " outside world bounds");
    };
    check_region(robot_start_region, "robot start_region");
    check_region(robot_goal_region, "robot goal_region");
    if (!(robot_radius > 0.0))
      throw ValidationError("scenario '" + world.name + "': robot radius must be > 0");
    for (size_t i = 0; i < pedestrian_specs.size(); ++i) {
      const PedestrianSpec& p = pedestrian_specs[i];
      std::string tag = "pedestrian[" + std::to_string(i) + "]";
      check_region(p.start_region, tag + " start_region");
      check_region(p.goal_region, tag + " goal_region");
      if (!(p.radius > 0.0))
        throw ValidationError("scenario '" + world.name + "': " + tag + " radius must be > 0");
      if (!(p.preferred_speed > 0.0))
        throw ValidationError("scenario '" + world.name + "': " + tag + " speed must be > 0");
    }
  }
};

namespace detail {

inline Rect rect_from_array(const ConfigTable& t, const std::string& key) {
  std::vector<double> v = t.require_double_array(key);
  if (v.size() != 4)
    throw ValidationError(t.where(key) + ": expected [xmin, ymin, xmax, ymax]");
  return Rect{v[0], v[1], v[2], v[3]};
}

}  // namespace detail

// Scenario file layout: [world] name/bounds/segments, [robot]
// start_region/goal_region/radius, optional [orca]/[sfm] driver defaults, and
// one [[pedestrian]] block per pedestrian group (optional count to repeat).
inline ScenarioSpec parse_scenario(const Config& cfg) {
  ScenarioSpec spec;

  const ConfigTable* world_tbl = cfg.find_section("world");
  if (world_tbl == nullptr)
    throw ValidationError(cfg.source + ": missing [world] section");
  spec.world.name = world_tbl->get_string("name", "unnamed");
  spec.world.bounds = detail::rect_from_array(*world_tbl, "bounds");
  const auto& segs = world_tbl->require("segments").as_array(world_tbl->where("segments"));
  for (size_t i = 0; i < segs.size(); ++i) {
    std::string where = world_tbl->where("segments") + "[" + std::to_string(i) + "]";
    const auto& row = segs[i].as_array(where);
    if (row.size() != 4) throw ValidationError(where + ": expected [x1, y1, x2, y2]");
    spec.world.segments.push_back(Segment{{row[0].as_double(where), row[1].as_double(where)},
                                          {row[2].as_double(where), row[3].as_double(where)}});
  }

  const ConfigTable* robot_tbl = cfg.find_section("robot");
  if (robot_tbl == nullptr)
    throw ValidationError(cfg.source + ": missing [robot] section");
  spec.robot_start_region = detail::rect_from_array(*robot_tbl, "start_region");
  spec.robot_goal_region = detail::rect_from_array(*robot_tbl, "goal_region");
  spec.robot_radius = robot_tbl->get_double("radius", 0.17);

  spec.orca_defaults = cfg.section_or_empty("orca");
  spec.sfm_defaults = cfg.section_or_empty("sfm");

  for (const ConfigTable* ped : cfg.blocks_named("pedestrian")) {
    PedestrianSpec p;
    p.start_region = detail::rect_from_array(*ped, "start_region");
    p.goal_region = detail::rect_from_array(*ped, "goal_region");
    p.radius = ped->get_double("radius", 0.3);
    p.preferred_speed = ped->get_double("speed", 1.0);
    p.driver = parse_driver(ped->get_string("driver", "orca"), ped->where("driver"));
    p.driver_params = *ped;
    long long count = ped->get_int("count", 1);
    if (count < 1) throw ValidationError(ped->where("count") + ": must be >= 1");
    for (long long c = 0; c < count; ++c) spec.pedestrian_specs.push_back(p);
  }

  spec.validate();
  return spec;
}

inline ScenarioSpec load_scenario(const std::string& path) {
  return parse_scenario(load_config_file(path));
}

// Distance along the ray (from `origin` at absolute `angle`) to the nearest
// wall segment or pedestrian disc, clamped to max_range.
inline double raycast(const WorldModel& world, const std::vector<Disc>& discs, Vec2 origin,
                      double angle, double max_range) {
  if (!(max_range > 0.0)) throw ContractError("raycast: max_range must be > 0");
  Vec2 dir{std::cos(angle), std::sin(angle)};
  double best = max_range;
  for (const Segment& s : world.segments) {
    if (auto t = ray_segment_intersection(origin, dir, s); t && *t < best) best = *t;
  }
  for (const Disc& d : discs) {
    if (auto t = ray_circle_intersection(origin, dir, d.center, d.radius); t && *t < best)
      best = *t;
  }
  return best;
}

inline ScanObservation scan_ground_truth(const WorldModel& world, const std::vector<Disc>& discs,
                                         const Pose2D& pose, const LaserConfig& laser = {}) {
  ScanObservation scan;
  scan.ranges.resize(laser.beams);
  for (int i = 0; i < laser.beams; ++i) {
    double angle = pose.yaw + laser.beam_offset(i);
    scan.ranges[i] = raycast(world, discs, pose.position(), angle, laser.max_range);
  }
  return scan;
}

inline double min_segment_distance(const WorldModel& world, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  for (const Segment& s : world.segments) best = std::min(best, point_segment_distance(p, s));
  return best;
}

inline bool check_collision(const WorldModel& world, const std::vector<Disc>& discs,
                            const Pose2D& pose, double robot_radius) {
  if (!(robot_radius > 0.0)) throw ContractError("check_collision: robot_radius must be > 0");
  Vec2 p = pose.position();
  for (const Segment& s : world.segments)
    if (point_segment_distance(p, s) < robot_radius) return true;
  for (const Disc& d : discs)
    if ((p - d.center).norm() < robot_radius + d.radius) return true;
  return false;
}

// Uniform pose draw from a (possibly degenerate) rectangle, rejecting poses
// closer than `clearance` to any wall. Throws SamplingExhausted when the
// region is effectively blocked.
inline Pose2D sample_pose_in_region(const WorldModel& world, const Rect& region, Rng& rng,
                                    double clearance = 0.0) {
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Vec2 p{rng.uniform(region.xmin, region.xmax), rng.uniform(region.ymin, region.ymax)};
    double yaw = wrap_angle(rng.uniform(-kPi, kPi));
    if (clearance > 0.0 && min_segment_distance(world, p) < clearance) continue;
    return Pose2D{p.x, p.y, yaw};
  }
  throw SamplingExhausted("no collision-free pose found in region [" +
                          std::to_string(region.xmin) + ", " + std::to_string(region.ymin) +
                          ", " + std::to_string(region.xmax) + ", " + std::to_string(region.ymax) +
                          "] of world '" + world.name + "' after 1000 attempts");
}

struct OccupancyGrid {
  double resolution = 0.05;
  Pose2D origin;  // world position of cell (0,0)'s min corner, yaw always 0
  int width = 0;
  int height = 0;
  std::vector<uint8_t> cells;

  bool inside(int ix, int iy) const { return ix >= 0 && ix < width && iy >= 0 && iy < height; }
  size_t index(int ix, int iy) const {
    return static_cast<size_t>(iy) * static_cast<size_t>(width) + static_cast<size_t>(ix);
  }
  bool occupied(int ix, int iy) const { return inside(ix, iy) && cells[index(ix, iy)] != 0; }

  int cell_x(double wx) const { return static_cast<int>(std::floor((wx - origin.x) / resolution)); }
  int cell_y(double wy) const { return static_cast<int>(std::floor((wy - origin.y) / resolution)); }

  Rect cell_box(int ix, int iy) const {
    double x0 = origin.x + ix * resolution;
    double y0 = origin.y + iy * resolution;
    return Rect{x0, y0, x0 + resolution, y0 + resolution};
  }

  // DDA traversal. Returns distance to the entry face of the first occupied
  // cell (0 when the start cell is occupied); cells beyond the grid read as
  // free space.
  double raycast(Vec2 origin_p, double angle, double max_range) const {
    Vec2 dir{std::cos(angle), std::sin(angle)};
    int ix = cell_x(origin_p.x);
    int iy = cell_y(origin_p.y);
    if (occupied(ix, iy)) return 0.0;

    int step_x = dir.x > 0.0 ? 1 : -1;
    int step_y = dir.y > 0.0 ? 1 : -1;
    double inv_dx = std::abs(dir.x) > 1e-15 ? 1.0 / dir.x : 0.0;
    double inv_dy = std::abs(dir.y) > 1e-15 ? 1.0 / dir.y : 0.0;

    double next_bx = origin.x + (ix + (step_x > 0 ? 1 : 0)) * resolution;
    double next_by = origin.y + (iy + (step_y > 0 ? 1 : 0)) * resolution;
    double t_max_x = std::abs(dir.x) > 1e-15 ? (next_bx - origin_p.x) * inv_dx
                                             : std::numeric_limits<double>::infinity();
    double t_max_y = std::abs(dir.y) > 1e-15 ? (next_by - origin_p.y) * inv_dy
                                             : std::numeric_limits<double>::infinity();
    double t_delta_x = std::abs(dir.x) > 1e-15 ? resolution * std::abs(inv_dx)
                                               : std::numeric_limits<double>::infinity();
    double t_delta_y = std::abs(dir.y) > 1e-15 ? resolution * std::abs(inv_dy)
                                               : std::numeric_limits<double>::infinity();

    for (;;) {
      double t;
      if (t_max_x < t_max_y) {
        t = t_max_x;
        t_max_x += t_delta_x;
        ix += step_x;
      } else {
        t = t_max_y;
        t_max_y += t_delta_y;
        iy += step_y;
      }
      if (t >= max_range) return max_range;
      if (occupied(ix, iy)) return t;
    }
  }
};

// Cell occupied iff any segment touches the (closed) cell box.
inline OccupancyGrid rasterize(const WorldModel& world, double resolution) {
  if (!(resolution > 0.0)) throw ContractError("rasterize: resolution must be > 0");
  OccupancyGrid g;
  g.resolution = resolution;
  g.origin = Pose2D{world.bounds.xmin, world.bounds.ymin, 0.0};
  g.width = std::max(1, static_cast<int>(std::ceil(world.bounds.width() / resolution - 1e-9)));
  g.height = std::max(1, static_cast<int>(std::ceil(world.bounds.height() / resolution - 1e-9)));
  g.cells.assign(static_cast<size_t>(g.width) * g.height, 0);
  for (const Segment& s : world.segments) {
    int x0 = std::clamp(g.cell_x(std::min(s.a.x, s.b.x)) - 1, 0, g.width - 1);
    int x1 = std::clamp(g.cell_x(std::max(s.a.x, s.b.x)) + 1, 0, g.width - 1);
    int y0 = std::clamp(g.cell_y(std::min(s.a.y, s.b.y)) - 1, 0, g.height - 1);
    int y1 = std::clamp(g.cell_y(std::max(s.a.y, s.b.y)) + 1, 0, g.height - 1);
    for (int iy = y0; iy <= y1; ++iy)
      for (int ix = x0; ix <= x1; ++ix)
        if (segment_intersects_rect(s, g.cell_box(ix, iy))) g.cells[g.index(ix, iy)] = 1;
  }
  return g;
}

}  // namespace locnav

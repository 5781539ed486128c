#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "locnav/geometry.hpp"
#include "locnav/rng.hpp"
#include "locnav/world.hpp"

namespace locnav {

struct OrcaParams {
  double time_horizon = 5.0;       // s, agent-agent
  double time_horizon_obst = 2.0;  // s, agent-wall
  double neighbor_dist = 10.0;     // m
  double max_speed = 1.2;          // m/s
  double time_step = 0.1;          // s

  void validate() const {
    if (!(time_horizon > 0.0) || !(time_horizon_obst > 0.0) || !(neighbor_dist > 0.0) ||
        !(max_speed > 0.0) || !(time_step > 0.0))
      throw ValidationError("orca params: all fields must be positive");
  }

  static OrcaParams resolve(const ConfigTable& defaults, const ConfigTable& overrides) {
    OrcaParams p;
    auto pick = [&](const char* key, double fallback) {
      return overrides.has(key) ? overrides.require_double(key)
                                : defaults.get_double(key, fallback);
    };
    p.time_horizon = pick("time_horizon", p.time_horizon);
    p.time_horizon_obst = pick("time_horizon_obst", p.time_horizon_obst);
    p.neighbor_dist = pick("neighbor_dist", p.neighbor_dist);
    p.max_speed = pick("max_speed", p.max_speed);
    p.time_step = pick("time_step", p.time_step);
    p.validate();
    return p;
  }
};

struct SfmParams {
  double relaxation_time = 0.5;    // s
  double repulsion_strength = 2.0;
  double repulsion_range = 0.35;   // m
  double obstacle_strength = 3.0;
  double obstacle_range = 0.2;     // m

  void validate() const {
    if (!(relaxation_time > 0.0) || !(repulsion_strength > 0.0) || !(repulsion_range > 0.0) ||
        !(obstacle_strength > 0.0) || !(obstacle_range > 0.0))
      throw ValidationError("sfm params: all fields must be positive");
  }

  static SfmParams resolve(const ConfigTable& defaults, const ConfigTable& overrides) {
    SfmParams p;
    auto pick = [&](const char* key, double fallback) {
      return overrides.has(key) ? overrides.require_double(key)
                                : defaults.get_double(key, fallback);
    };
    p.relaxation_time = pick("relaxation_time", p.relaxation_time);
    p.repulsion_strength = pick("repulsion_strength", p.repulsion_strength);
    p.repulsion_range = pick("repulsion_range", p.repulsion_range);
    p.obstacle_strength = pick("obstacle_strength", p.obstacle_strength);
    p.obstacle_range = pick("obstacle_range", p.obstacle_range);
    p.validate();
    return p;
  }
};

struct PedestrianState {
  Vec2 position;
  Vec2 velocity;
  double radius = 0.3;
  Vec2 goal;
  double preferred_speed = 1.0;
  CrowdDriver driver = CrowdDriver::kOrca;
  bool heading_to_goal = true;  // goal cycling: which region the goal was drawn from

  Disc disc() const { return {position, radius}; }
};

inline std::vector<Disc> pedestrian_discs(const std::vector<PedestrianState>& peds) {
  std::vector<Disc> discs;
  discs.reserve(peds.size());
  for (const PedestrianState& p : peds) discs.push_back(p.disc());
  return discs;
}

// How pedestrians perceive the robot: a plain disc with velocity. The robot
// never reciprocates, so pedestrians take full avoidance responsibility.
struct RobotDisc {
  Vec2 position;
  Vec2 velocity;
  double radius = 0.17;
};

// Preferred velocity: straight at the goal, slowing within the last meter so
// agents settle instead of orbiting.
inline Vec2 preferred_velocity(Vec2 position, Vec2 goal, double preferred_speed) {
  Vec2 to_goal = goal - position;
  double dist = to_goal.norm();
  if (dist < 1e-9) return {0.0, 0.0};
  return to_goal * (std::min(preferred_speed, dist) / dist);
}

// Half-plane constraint in velocity space: feasible velocities v satisfy
// det(direction, point - v) <= 0 (RVO2 convention).
struct OrcaLine {
  Vec2 point;
  Vec2 direction;

  bool satisfied_by(Vec2 v, double tol = 1e-9) const {
    return det(direction, point - v) <= tol;
  }
};

namespace detail {

constexpr double kOrcaEpsilon = 1e-5;

// Solves the 1D sub-program on line `line_no` clipped by all earlier lines.
inline bool orca_lp1(const std::vector<OrcaLine>& lines, size_t line_no, double radius,
                     Vec2 opt_velocity, bool direction_opt, Vec2& result) {
  const OrcaLine& ln = lines[line_no];
  double dot = ln.point.dot(ln.direction);
  double discriminant = dot * dot + radius * radius - ln.point.norm_sq();
  if (discriminant < 0.0) return false;
  double sqrt_disc = std::sqrt(discriminant);
  double t_left = -dot - sqrt_disc;
  double t_right = -dot + sqrt_disc;

  for (size_t i = 0; i < line_no; ++i) {
    double denominator = det(ln.direction, lines[i].direction);
    double numerator = det(lines[i].direction, ln.point - lines[i].point);
    if (std::abs(denominator) <= kOrcaEpsilon) {
      if (numerator < 0.0) return false;
      continue;
    }
    double t = numerator / denominator;
    if (denominator >= 0.0) {
      t_right = std::min(t_right, t);
    } else {
      t_left = std::max(t_left, t);
    }
    if (t_left > t_right) return false;
  }

  if (direction_opt) {
    result = ln.point + (opt_velocity.dot(ln.direction) > 0.0 ? t_right : t_left) * ln.direction;
  } else {
    double t = ln.direction.dot(opt_velocity - ln.point);
    result = ln.point + std::clamp(t, t_left, t_right) * ln.direction;
  }
  return true;
}

// Returns lines.size() on success, otherwise the index of the first
// unsatisfiable constraint.
inline size_t orca_lp2(const std::vector<OrcaLine>& lines, double radius, Vec2 opt_velocity,
                       bool direction_opt, Vec2& result) {
  if (direction_opt) {
    result = opt_velocity * radius;
  } else if (opt_velocity.norm_sq() > radius * radius) {
    result = opt_velocity.normalized() * radius;
  } else {
    result = opt_velocity;
  }
  for (size_t i = 0; i < lines.size(); ++i) {
    if (det(lines[i].direction, lines[i].point - result) > 0.0) {
      Vec2 temp = result;
      if (!orca_lp1(lines, i, radius, opt_velocity, direction_opt, result)) {
        result = temp;
        return i;
      }
    }
  }
  return lines.size();
}

// Infeasible fallback: minimize the worst constraint violation, keeping the
// first num_obst_lines (wall) constraints hard.
inline void orca_lp3(const std::vector<OrcaLine>& lines, size_t num_obst_lines, size_t begin_line,
                     double radius, Vec2& result) {
  double distance = 0.0;
  for (size_t i = begin_line; i < lines.size(); ++i) {
    if (det(lines[i].direction, lines[i].point - result) > distance) {
      std::vector<OrcaLine> proj_lines(lines.begin(),
                                       lines.begin() + static_cast<long>(num_obst_lines));
      for (size_t j = num_obst_lines; j < i; ++j) {
        OrcaLine line;
        double determinant = det(lines[i].direction, lines[j].direction);
        if (std::abs(determinant) <= kOrcaEpsilon) {
          if (lines[i].direction.dot(lines[j].direction) > 0.0) continue;
          line.point = 0.5 * (lines[i].point + lines[j].point);
        } else {
          line.point = lines[i].point +
                       (det(lines[j].direction, lines[i].point - lines[j].point) / determinant) *
                           lines[i].direction;
        }
        line.direction = (lines[j].direction - lines[i].direction).normalized();
        proj_lines.push_back(line);
      }
      Vec2 temp = result;
      if (orca_lp2(proj_lines, radius, lines[i].direction.perp(), true, result) <
          proj_lines.size()) {
        result = temp;
      }
      distance = det(lines[i].direction, lines[i].point - result);
    }
  }
}

// Velocity-obstacle half-plane of `other` as seen by `self`; responsibility
// is the fraction of the avoidance `self` takes on (0.5 reciprocal, 1.0
// against the robot).
inline OrcaLine orca_line_against(Vec2 self_pos, Vec2 self_vel, double self_radius,
                                  Vec2 other_pos, Vec2 other_vel, double other_radius,
                                  double time_horizon, double time_step, double responsibility) {
  Vec2 relative_position = other_pos - self_pos;
  Vec2 relative_velocity = self_vel - other_vel;
  double dist_sq = relative_position.norm_sq();
  double combined_radius = self_radius + other_radius;
  double combined_radius_sq = combined_radius * combined_radius;

  OrcaLine line;
  Vec2 u;
  if (dist_sq > combined_radius_sq) {
    double inv_horizon = 1.0 / time_horizon;
    Vec2 w = relative_velocity - inv_horizon * relative_position;
    double w_len_sq = w.norm_sq();
    double dot1 = w.dot(relative_position);
    if (dot1 < 0.0 && dot1 * dot1 > combined_radius_sq * w_len_sq) {
      // Project on the cut-off circle.
      double w_len = std::sqrt(w_len_sq);
      Vec2 unit_w = w / w_len;
      line.direction = Vec2{unit_w.y, -unit_w.x};
      u = (combined_radius * inv_horizon - w_len) * unit_w;
    } else {
      // Project on the nearer leg.
      double leg = std::sqrt(dist_sq - combined_radius_sq);
      if (det(relative_position, w) > 0.0) {
        line.direction = Vec2{relative_position.x * leg - relative_position.y * combined_radius,
                              relative_position.x * combined_radius + relative_position.y * leg} /
                         dist_sq;
      } else {
        line.direction = -Vec2{relative_position.x * leg + relative_position.y * combined_radius,
                               -relative_position.x * combined_radius + relative_position.y * leg} /
                         dist_sq;
      }
      u = relative_velocity.dot(line.direction) * line.direction - relative_velocity;
    }
  } else {
    // Already overlapping: resolve within one time step.
    double inv_step = 1.0 / time_step;
    Vec2 w = relative_velocity - inv_step * relative_position;
    double w_len = w.norm();
    Vec2 unit_w = w_len > 1e-12 ? w / w_len : Vec2{1.0, 0.0};
    line.direction = Vec2{unit_w.y, -unit_w.x};
    u = (combined_radius * inv_step - w_len) * unit_w;
  }
  line.point = self_vel + responsibility * u;
  return line;
}

}  // namespace detail

struct OrcaResult {
  Vec2 velocity;
  std::vector<OrcaLine> lines;
  size_t num_obst_lines = 0;
  bool lp_feasible = true;
};

// New velocity for one agent given everything it can see. Wall segments turn
// into conservative half-planes (approach speed toward the nearest point
// limited by the gap over time_horizon_obst); these stay hard in the
// infeasible fallback, mirroring the reference treatment of obstacles.
inline OrcaResult orca_agent_velocity(const PedestrianState& self,
                                      const std::vector<PedestrianState>& agents, size_t self_idx,
                                      const std::optional<RobotDisc>& robot,
                                      const WorldModel& world, const OrcaParams& params) {
  OrcaResult res;
  double radius_cap = std::min(params.max_speed, 1.5 * self.preferred_speed);

  for (const Segment& seg : world.segments) {
    Vec2 cp = closest_point_on_segment(self.position, seg);
    double dist = (self.position - cp).norm();
    if (dist > params.neighbor_dist || dist < 1e-9) continue;
    Vec2 n = (self.position - cp) / dist;
    double bound = -(dist - self.radius) / params.time_horizon_obst;
    res.lines.push_back(OrcaLine{bound * n, Vec2{n.y, -n.x}});
  }
  res.num_obst_lines = res.lines.size();

  double neighbor_sq = params.neighbor_dist * params.neighbor_dist;
  for (size_t j = 0; j < agents.size(); ++j) {
    if (j == self_idx) continue;
    const PedestrianState& other = agents[j];
    if ((other.position - self.position).norm_sq() > neighbor_sq) continue;
    res.lines.push_back(detail::orca_line_against(
        self.position, self.velocity, self.radius, other.position, other.velocity, other.radius,
        params.time_horizon, params.time_step, 0.5));
  }
  if (robot && (robot->position - self.position).norm_sq() <= neighbor_sq) {
    res.lines.push_back(detail::orca_line_against(
        self.position, self.velocity, self.radius, robot->position, robot->velocity,
        robot->radius, params.time_horizon, params.time_step, 1.0));
  }

  Vec2 pref = preferred_velocity(self.position, self.goal, self.preferred_speed);
  size_t fail = detail::orca_lp2(res.lines, radius_cap, pref, false, res.velocity);
  if (fail < res.lines.size()) {
    res.lp_feasible = false;
    detail::orca_lp3(res.lines, res.num_obst_lines, fail, radius_cap, res.velocity);
  }
  return res;
}

inline std::vector<Vec2> orca_step(const std::vector<PedestrianState>& agents,
                                   const std::optional<RobotDisc>& robot, const WorldModel& world,
                                   const OrcaParams& params, double dt) {
  if (!(dt > 0.0)) throw ContractError("orca_step: dt must be > 0");
  params.validate();
  std::vector<Vec2> velocities(agents.size());
  for (size_t i = 0; i < agents.size(); ++i)
    velocities[i] = orca_agent_velocity(agents[i], agents, i, robot, world, params).velocity;
  return velocities;
}

// Repulsion potential between two discs at center distance `dist`; the force
// below is its exact negative gradient.
inline double sfm_repulsion_potential(double dist, double radius_sum, double strength,
                                      double range) {
  return strength * range * std::exp((radius_sum - dist) / range);
}

inline Vec2 sfm_force(const PedestrianState& self, const std::vector<PedestrianState>& agents,
                      size_t self_idx, const std::optional<RobotDisc>& robot,
                      const WorldModel& world, const SfmParams& params) {
  Vec2 pref = preferred_velocity(self.position, self.goal, self.preferred_speed);
  Vec2 force = (pref - self.velocity) / params.relaxation_time;

  auto disc_repulsion = [&](Vec2 other_pos, double other_radius) {
    Vec2 diff = self.position - other_pos;
    double dist = diff.norm();
    if (dist < 1e-9) return;  // coincident centers give no direction
    double magnitude =
        params.repulsion_strength * std::exp((self.radius + other_radius - dist) /
                                             params.repulsion_range);
    force += (diff / dist) * magnitude;
  };

  for (size_t j = 0; j < agents.size(); ++j) {
    if (j != self_idx) disc_repulsion(agents[j].position, agents[j].radius);
  }
  if (robot) disc_repulsion(robot->position, robot->radius);

  for (const Segment& seg : world.segments) {
    Vec2 cp = closest_point_on_segment(self.position, seg);
    Vec2 diff = self.position - cp;
    double dist = diff.norm();
    if (dist < 1e-9 || dist > 3.0) continue;
    double magnitude =
        params.obstacle_strength * std::exp((self.radius - dist) / params.obstacle_range);
    force += (diff / dist) * magnitude;
  }
  return force;
}

inline std::vector<Vec2> sfm_step(const std::vector<PedestrianState>& agents,
                                  const std::optional<RobotDisc>& robot, const WorldModel& world,
                                  const SfmParams& params, double dt) {
  if (!(dt > 0.0)) throw ContractError("sfm_step: dt must be > 0");
  params.validate();
  std::vector<Vec2> velocities(agents.size());
  for (size_t i = 0; i < agents.size(); ++i) {
    Vec2 v = agents[i].velocity + sfm_force(agents[i], agents, i, robot, world, params) * dt;
    double cap = 1.5 * agents[i].preferred_speed;
    double speed = v.norm();
    if (speed > cap) v = v * (cap / speed);
    velocities[i] = v;
  }
  return velocities;
}

inline Vec2 sample_point_in_rect(const Rect& r, Rng& rng) {
  return {rng.uniform(r.xmin, r.xmax), rng.uniform(r.ymin, r.ymax)};
}

// Initial pedestrian placement: rejection-sample inside each start region,
// avoiding walls and already-placed agents. If a region is too crowded for
// separation, fall back to wall clearance only (the collision branch of ORCA
// then separates them within a few steps).
inline std::vector<PedestrianState> spawn_pedestrians(const ScenarioSpec& scenario, Rng& rng) {
  std::vector<PedestrianState> agents;
  agents.reserve(scenario.pedestrian_specs.size());
  for (const PedestrianSpec& spec : scenario.pedestrian_specs) {
    PedestrianState a;
    a.radius = spec.radius;
    a.preferred_speed = spec.preferred_speed;
    a.driver = spec.driver;
    a.heading_to_goal = true;

    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      Vec2 p = sample_point_in_rect(spec.start_region, rng);
      if (min_segment_distance(scenario.world, p) < spec.radius) continue;
      bool overlaps = false;
      for (const PedestrianState& other : agents) {
        if ((other.position - p).norm() < spec.radius + other.radius) {
          overlaps = true;
          break;
        }
      }
      if (overlaps) continue;
      a.position = p;
      placed = true;
    }
    if (!placed) {
      log_warn("pedestrian spawn region too crowded in '" + scenario.world.name +
               "', allowing initial overlap");
      for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
        Vec2 p = sample_point_in_rect(spec.start_region, rng);
        if (min_segment_distance(scenario.world, p) < spec.radius) continue;
        a.position = p;
        placed = true;
      }
      if (!placed)
        throw SamplingExhausted("pedestrian start region fully blocked in '" +
                                scenario.world.name + "'");
    }
    a.goal = sample_point_in_rect(spec.goal_region, rng);
    agents.push_back(a);
  }
  return agents;
}

// One crowd step: new velocities per driver (every agent sees every other
// agent regardless of driver), integrate, keep agents out of walls and inside
// bounds, recycle goals between the start/goal regions.
inline void update_pedestrians(std::vector<PedestrianState>& agents,
                               const ScenarioSpec& scenario,
                               const std::optional<RobotDisc>& robot, double dt, Rng& rng) {
  if (!(dt > 0.0)) throw ContractError("update_pedestrians: dt must be > 0");
  if (agents.size() != scenario.pedestrian_specs.size())
    throw ContractError("update_pedestrians: agent list does not match scenario specs");

  std::vector<Vec2> new_velocities(agents.size());
  for (size_t i = 0; i < agents.size(); ++i) {
    const PedestrianSpec& spec = scenario.pedestrian_specs[i];
    if (agents[i].driver == CrowdDriver::kOrca) {
      OrcaParams params = OrcaParams::resolve(scenario.orca_defaults, spec.driver_params);
      new_velocities[i] =
          orca_agent_velocity(agents[i], agents, i, robot, scenario.world, params).velocity;
    } else {
      SfmParams params = SfmParams::resolve(scenario.sfm_defaults, spec.driver_params);
      Vec2 v = agents[i].velocity +
               sfm_force(agents[i], agents, i, robot, scenario.world, params) * dt;
      double cap = 1.5 * agents[i].preferred_speed;
      double speed = v.norm();
      if (speed > cap) v = v * (cap / speed);
      new_velocities[i] = v;
    }
  }

  const Rect& b = scenario.world.bounds;
  for (size_t i = 0; i < agents.size(); ++i) {
    PedestrianState& a = agents[i];
    a.velocity = new_velocities[i];
    a.position += a.velocity * dt;

    for (const Segment& seg : scenario.world.segments) {
      Vec2 cp = closest_point_on_segment(a.position, seg);
      Vec2 diff = a.position - cp;
      double dist = diff.norm();
      if (dist < a.radius && dist > 1e-9) a.position += diff * ((a.radius - dist) / dist);
    }
    a.position.x = std::clamp(a.position.x, b.xmin + a.radius, b.xmax - a.radius);
    a.position.y = std::clamp(a.position.y, b.ymin + a.radius, b.ymax - a.radius);

    if ((a.position - a.goal).norm() < 0.3) {
      const PedestrianSpec& spec = scenario.pedestrian_specs[i];
      a.heading_to_goal = !a.heading_to_goal;
      a.goal = sample_point_in_rect(a.heading_to_goal ? spec.goal_region : spec.start_region, rng);
    }
  }
}

}  // namespace locnav

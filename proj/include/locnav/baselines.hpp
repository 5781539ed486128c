#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "locnav/actions.hpp"
#include "locnav/config.hpp"
#include "locnav/scan.hpp"
#include "locnav/sensors.hpp"

namespace locnav {

struct DwaParams {
  double accel_v = 6.0;   // m/s^2, window growth per control period
  double accel_w = 9.0;   // rad/s^2
  double control_dt = 0.1;  // s, one command interval
  double sim_horizon = 1.0;  // s of constant-command forward simulation
  double sim_dt = 0.1;
  double robot_radius = 0.17;
  double w_heading = 0.8;
  double w_clearance = 0.1;
  double w_velocity = 0.1;
  int scan_subsample = 4;     // every n-th beam becomes an obstacle point
  double clearance_cap = 2.0;  // m, clearance beyond this saturates the score
  LaserConfig laser;

  void validate() const {
    if (w_heading < 0.0 || w_clearance < 0.0 || w_velocity < 0.0)
      throw ValidationError("dwa: objective weights must be >= 0");
    if (!(sim_horizon > 0.0) || !(sim_dt > 0.0) || !(control_dt > 0.0))
      throw ValidationError("dwa: sim_horizon, sim_dt, control_dt must be > 0");
    if (!(accel_v > 0.0) || !(accel_w > 0.0))
      throw ValidationError("dwa: acceleration limits must be > 0");
    if (scan_subsample < 1) throw ValidationError("dwa: scan_subsample must be >= 1");
    if (!(robot_radius > 0.0) || !(clearance_cap > 0.0))
      throw ValidationError("dwa: robot_radius and clearance_cap must be > 0");
    laser.validate();
  }

  static DwaParams from_config(const ConfigTable& t) {
    DwaParams p;
    p.accel_v = t.get_double("accel_v", p.accel_v);
    p.accel_w = t.get_double("accel_w", p.accel_w);
    p.sim_horizon = t.get_double("sim_horizon", p.sim_horizon);
    p.sim_dt = t.get_double("sim_dt", p.sim_dt);
    p.robot_radius = t.get_double("robot_radius", p.robot_radius);
    p.w_heading = t.get_double("w_heading", p.w_heading);
    p.w_clearance = t.get_double("w_clearance", p.w_clearance);
    p.w_velocity = t.get_double("w_velocity", p.w_velocity);
    p.scan_subsample = static_cast<int>(t.get_int("scan_subsample", p.scan_subsample));
    p.clearance_cap = t.get_double("clearance_cap", p.clearance_cap);
    p.validate();
    return p;
  }
};

struct DwaDecision {
  int action_index = 0;
  Action action{0.0, 0.0};
  bool recovery = false;       // every candidate was pruned
  double min_clearance = 0.0;  // center-to-obstacle distance along the winner
};

namespace detail {

// Scan rays re-anchored at the estimated pose. Max-range returns carry no
// obstacle and are skipped.
inline std::vector<Vec2> scan_obstacle_points(const ScanObservation& scan, const Pose2D& est,
                                              const DwaParams& p) {
  std::vector<Vec2> points;
  for (int i = 0; i < scan.size(); i += p.scan_subsample) {
    double r = scan.ranges[i];
    if (r >= p.laser.max_range - 1e-6) continue;
    double angle = est.yaw + p.laser.beam_offset(i);
    points.push_back(est.position() + Vec2{std::cos(angle), std::sin(angle)} * r);
  }
  return points;
}

inline double min_distance_to(const std::vector<Vec2>& points, Vec2 q) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec2& p : points) best = std::min(best, (p - q).norm());
  return best;
}

}  // namespace detail

// Dynamic window step: catalog commands inside the acceleration window are
// rolled out for sim_horizon seconds against the scan's obstacle points.
// Colliding candidates are pruned; survivors score
//   w_h * heading-to-goal at the end pose
// + w_c * capped clearance
// + w_v * forward speed projected on the goal bearing.
// If everything collides, the recovery action rotates in place toward the
// goal at the fastest rate.
inline DwaDecision dwa_plan(const ScanObservation& scan, const Pose2D& est_pose,
                            const Pose2D& goal, Action current, const DwaParams& params) {
  if (scan.size() != params.laser.beams)
    throw ContractError("dwa_plan: scan has " + std::to_string(scan.size()) +
                        " beams, laser expects " + std::to_string(params.laser.beams));
  std::vector<Vec2> obstacles = detail::scan_obstacle_points(scan, est_pose, params);

  double v_lo = current.v - params.accel_v * params.control_dt;
  double v_hi = current.v + params.accel_v * params.control_dt;
  double w_lo = current.w - params.accel_w * params.control_dt;
  double w_hi = current.w + params.accel_w * params.control_dt;

  int steps = std::max(1, static_cast<int>(std::round(params.sim_horizon / params.sim_dt)));
  double best_score = -std::numeric_limits<double>::infinity();
  DwaDecision best;
  bool any = false;

  for (int i = 0; i < kNumActions; ++i) {
    Action a = action_at(i);
    if (a.v < v_lo - 1e-9 || a.v > v_hi + 1e-9 || a.w < w_lo - 1e-9 || a.w > w_hi + 1e-9)
      continue;

    Pose2D pose = est_pose;
    double clearance = obstacles.empty() ? params.clearance_cap
                                         : detail::min_distance_to(obstacles, pose.position());
    bool collides = clearance < params.robot_radius;
    for (int s = 0; s < steps && !collides; ++s) {
      pose = integrate_unicycle(pose, a.v, a.w, params.sim_dt);
      if (!obstacles.empty()) {
        double d = detail::min_distance_to(obstacles, pose.position());
        clearance = std::min(clearance, d);
        collides = clearance < params.robot_radius;
      }
    }
    if (collides) continue;

    double bearing = std::atan2(goal.y - pose.y, goal.x - pose.x);
    double heading_err = std::abs(wrap_angle(bearing - pose.yaw));
    double heading_score = 1.0 - heading_err / kPi;
    double clearance_score = std::min(clearance, params.clearance_cap) / params.clearance_cap;
    double v_max = action_catalog().back().v;
    double velocity_score = std::max(0.0, a.v * std::cos(heading_err)) / v_max;
    double score = params.w_heading * heading_score + params.w_clearance * clearance_score +
                   params.w_velocity * velocity_score;
    if (score > best_score) {
      best_score = score;
      best.action_index = i;
      best.action = a;
      best.min_clearance = clearance;
      any = true;
    }
  }

  if (!any) {
    // Rotate in place toward the goal at the fastest admissible rate.
    double bearing = std::atan2(goal.y - est_pose.y, goal.x - est_pose.x);
    double w_max = action_catalog().back().w;
    double turn = wrap_angle(bearing - est_pose.yaw) >= 0.0 ? w_max : -w_max;
    for (int i = 0; i < kNumActions; ++i) {
      Action a = action_at(i);
      if (a.v == 0.0 && a.w == turn) {
        best.action_index = i;
        best.action = a;
        break;
      }
    }
    best.recovery = true;
    best.min_clearance =
        obstacles.empty() ? params.clearance_cap
                          : detail::min_distance_to(obstacles, est_pose.position());
    log_debug("dwa: all candidates pruned, recovering with rotation " +
              std::to_string(best.action.w));
  }
  return best;
}

}  // namespace locnav

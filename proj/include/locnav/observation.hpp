#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "locnav/crowd.hpp"
#include "locnav/geometry.hpp"
#include "locnav/localization.hpp"
#include "locnav/scan.hpp"

namespace locnav {

// Policy/input variants. The first three run on the estimated pose; the two
// laser baselines assume perfect localization and read the ground-truth pose.
enum class Variant {
  kLndrl,         // full state: goal belief with variances + scan + pedestrian map
  kNoVariance,    // variances removed from the goal input
  kNoPoseReward,  // same state as lndrl; pose-accuracy reward term removed
  kDrlLaser,      // 3-frame scan stack, no pedestrian map, ground-truth goal
  kDrlLaserPed,   // 3-frame scan stack + pedestrian map, ground-truth goal
};

inline Variant parse_variant(const std::string& s) {
  if (s == "lndrl") return Variant::kLndrl;
  if (s == "no_variance") return Variant::kNoVariance;
  if (s == "no_pose_reward") return Variant::kNoPoseReward;
  if (s == "drl_laser") return Variant::kDrlLaser;
  if (s == "drl_laser_ped") return Variant::kDrlLaserPed;
  throw ValidationError("unknown variant '" + s +
                        "' (expected lndrl, no_variance, no_pose_reward, drl_laser, "
                        "drl_laser_ped or dwa)");
}

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kLndrl: return "lndrl";
    case Variant::kNoVariance: return "no_variance";
    case Variant::kNoPoseReward: return "no_pose_reward";
    case Variant::kDrlLaser: return "drl_laser";
    case Variant::kDrlLaserPed: return "drl_laser_ped";
  }
  return "?";
}

inline int variant_scan_frames(Variant v) {
  return (v == Variant::kDrlLaser || v == Variant::kDrlLaserPed) ? 3 : 1;
}

inline bool variant_has_ped_map(Variant v) { return v != Variant::kDrlLaser; }

// Whether the goal vector carries the three variance fields.
inline bool variant_has_goal_variance(Variant v) {
  return v == Variant::kLndrl || v == Variant::kNoPoseReward;
}

// Whether the policy runs on the belief mean (true) or the ground-truth pose.
inline bool variant_uses_belief(Variant v) {
  return v == Variant::kLndrl || v == Variant::kNoVariance || v == Variant::kNoPoseReward;
}

struct GoalBelief {
  double x = 0.0;      // goal in the (estimated) robot frame, m
  double y = 0.0;
  double alpha = 0.0;  // relative goal orientation, rad
  double var_x = 0.0;
  double var_y = 0.0;
  double var_alpha = 0.0;
};

// Goal expressed in the belief frame with first-order uncertainty
// propagation: position variances rotate into the robot frame, and yaw
// uncertainty inflates the lateral component by var_yaw * d^2.
inline GoalBelief build_goal_belief(const BeliefSummary& belief, const Pose2D& goal) {
  GoalBelief g;
  Vec2 rel = world_to_body(belief.mean, goal.position());
  g.x = rel.x;
  g.y = rel.y;
  g.alpha = wrap_angle(goal.yaw - belief.mean.yaw);
  double c = std::cos(belief.mean.yaw), s = std::sin(belief.mean.yaw);
  double d_sq = rel.norm_sq();
  g.var_x = c * c * belief.var_x + s * s * belief.var_y;
  g.var_y = s * s * belief.var_x + c * c * belief.var_y + belief.var_yaw * d_sq;
  g.var_alpha = belief.var_yaw;
  return g;
}

struct PedestrianMap {
  static constexpr int kCells = 48;
  static constexpr double kExtent = 6.0;  // m, side length
  static constexpr double kResolution = kExtent / kCells;

  // Channel-major [channel][row][col]; channel 0 occupancy, 1/2 the x/y
  // velocity in the robot frame. Row indexes the robot-frame y axis (left),
  // col the x axis (forward), both ascending from the -3 m corner.
  std::vector<double> data = std::vector<double>(3 * kCells * kCells, 0.0);

  double& at(int channel, int row, int col) {
    return data[(static_cast<size_t>(channel) * kCells + row) * kCells + col];
  }
  double at(int channel, int row, int col) const {
    return data[(static_cast<size_t>(channel) * kCells + row) * kCells + col];
  }

  static double cell_coord(int idx) { return -0.5 * kExtent + (idx + 0.5) * kResolution; }
};

// Rasterizes pedestrian discs into the robot-centered map: a cell is occupied
// when its center falls inside a disc; velocity channels carry that
// pedestrian's robot-frame velocity over its occupied cells.
inline PedestrianMap build_pedestrian_map(const std::vector<PedestrianState>& peds,
                                          const Pose2D& robot_gt) {
  PedestrianMap map;
  double reach = 0.5 * PedestrianMap::kExtent;
  for (const PedestrianState& ped : peds) {
    Vec2 rel = world_to_body(robot_gt, ped.position);
    if (std::abs(rel.x) > reach + ped.radius || std::abs(rel.y) > reach + ped.radius) continue;
    Vec2 vel = ped.velocity.rotated(-robot_gt.yaw);
    int col0 = std::max(0, static_cast<int>(std::floor(
                               (rel.x - ped.radius + reach) / PedestrianMap::kResolution)));
    int col1 = std::min(PedestrianMap::kCells - 1,
                        static_cast<int>(std::floor((rel.x + ped.radius + reach) /
                                                    PedestrianMap::kResolution)));
    int row0 = std::max(0, static_cast<int>(std::floor(
                               (rel.y - ped.radius + reach) / PedestrianMap::kResolution)));
    int row1 = std::min(PedestrianMap::kCells - 1,
                        static_cast<int>(std::floor((rel.y + ped.radius + reach) /
                                                    PedestrianMap::kResolution)));
    double r_sq = ped.radius * ped.radius;
    for (int row = row0; row <= row1; ++row) {
      for (int col = col0; col <= col1; ++col) {
        double dx = PedestrianMap::cell_coord(col) - rel.x;
        double dy = PedestrianMap::cell_coord(row) - rel.y;
        if (dx * dx + dy * dy > r_sq) continue;
        map.at(0, row, col) = 1.0;
        map.at(1, row, col) = vel.x;
        map.at(2, row, col) = vel.y;
      }
    }
  }
  return map;
}

struct ObservationBundle {
  Variant variant = Variant::kLndrl;
  GoalBelief goal;
  // Oldest first; size = variant_scan_frames(variant).
  std::vector<ScanObservation> scans;
  std::optional<PedestrianMap> ped_map;
};

// scan_history: oldest first, newest last; callers pad at episode start by
// repeating the first scan. Baseline variants take the goal relative to the
// ground-truth pose with zero variances.
inline ObservationBundle assemble_observation(Variant variant, const BeliefSummary& belief,
                                              const Pose2D& goal,
                                              const std::vector<ScanObservation>& scan_history,
                                              const std::vector<PedestrianState>& peds,
                                              const Pose2D& robot_gt) {
  ObservationBundle bundle;
  bundle.variant = variant;

  int frames = variant_scan_frames(variant);
  if (static_cast<int>(scan_history.size()) < frames)
    throw ContractError("assemble_observation: need " + std::to_string(frames) +
                        " scan frames, have " + std::to_string(scan_history.size()));
  bundle.scans.assign(scan_history.end() - frames, scan_history.end());

  if (variant_uses_belief(variant)) {
    bundle.goal = build_goal_belief(belief, goal);
    if (!variant_has_goal_variance(variant)) {
      bundle.goal.var_x = bundle.goal.var_y = bundle.goal.var_alpha = 0.0;
    }
  } else {
    BeliefSummary exact;
    exact.mean = robot_gt;
    bundle.goal = build_goal_belief(exact, goal);
  }

  if (variant_has_ped_map(variant)) bundle.ped_map = build_pedestrian_map(peds, robot_gt);
  return bundle;
}

}  // namespace locnav

#pragma once

#include <cmath>
#include <string>

#include "locnav/config.hpp"
#include "locnav/geometry.hpp"
#include "locnav/localization.hpp"

namespace locnav {

enum class StepOutcome { kRunning, kArrived, kCollided, kLost, kTimeout };

inline const char* outcome_name(StepOutcome o) {
  switch (o) {
    case StepOutcome::kRunning: return "running";
    case StepOutcome::kArrived: return "arrived";
    case StepOutcome::kCollided: return "collided";
    case StepOutcome::kLost: return "lost";
    case StepOutcome::kTimeout: return "timeout";
  }
  return "?";
}

struct RewardParams {
  double k_a = 200.0;     // approach gain
  double k_p = 400.0;     // pose-accuracy gain
  double r_arr = 500.0;
  double r_col = -800.0;
  double r_lost = -500.0;
  double r_step = -6.0;   // per-step cost, anything below -5
  double eps_a = 0.5;           // m, arrival threshold on the estimated position
  double eps_l = 2.0;           // m, lost threshold on estimate-vs-truth position
  double eps_yaw = 0.25 * kPi;  // rad, lost threshold on estimate-vs-truth yaw
  double pose_yaw_weight = 1.0; // radians weighted as meters in the pose-error norm
  int max_episode_len = 400;    // steps at the 10 Hz control rate
  // The approach denominator uses belief variances; switch to standard
  // deviations for comparison runs.
  bool uncertainty_denominator_std = false;
  // Variant switches: laser baselines drop the localization-aware terms and
  // the uncertainty weighting entirely; the reward ablation drops only the
  // pose term.
  bool enable_pose_term = true;
  bool enable_lost_term = true;
  bool enable_uncertainty_weight = true;

  void validate() const {
    if (!(eps_a > 0.0) || !(eps_l > 0.0) || !(eps_yaw > 0.0))
      throw ValidationError("reward: thresholds eps_a, eps_l, eps_yaw must be > 0");
    if (!(r_arr > 0.0)) throw ValidationError("reward: r_arr must be > 0");
    if (!(r_col < 0.0) || !(r_lost < 0.0) || !(r_step < 0.0))
      throw ValidationError("reward: r_col, r_lost, r_step must be < 0");
    if (max_episode_len < 1) throw ValidationError("reward: max_episode_len must be >= 1");
  }

  static RewardParams from_config(const ConfigTable& t) {
    RewardParams p;
    p.k_a = t.get_double("k_a", p.k_a);
    p.k_p = t.get_double("k_p", p.k_p);
    p.r_arr = t.get_double("r_arr", p.r_arr);
    p.r_col = t.get_double("r_col", p.r_col);
    p.r_lost = t.get_double("r_lost", p.r_lost);
    p.r_step = t.get_double("r_step", p.r_step);
    p.eps_a = t.get_double("eps_a", p.eps_a);
    p.eps_l = t.get_double("eps_l", p.eps_l);
    p.eps_yaw = t.get_double("eps_yaw", p.eps_yaw);
    p.pose_yaw_weight = t.get_double("pose_yaw_weight", p.pose_yaw_weight);
    p.max_episode_len = static_cast<int>(t.get_int("max_episode_len", p.max_episode_len));
    p.uncertainty_denominator_std =
        t.get_bool("uncertainty_denominator_std", p.uncertainty_denominator_std);
    p.validate();
    return p;
  }
};

struct RewardBreakdown {
  double app = 0.0;
  double pose = 0.0;
  double arr = 0.0;
  double col = 0.0;
  double lost = 0.0;
  double step = 0.0;
  double total = 0.0;
  StepOutcome terminal = StepOutcome::kRunning;
};

// SE(2) distance between estimate and truth with yaw in meters-equivalent.
inline double pose_error_norm(const Pose2D& est, const Pose2D& gt, double yaw_weight) {
  double dx = est.x - gt.x;
  double dy = est.y - gt.y;
  double dyaw = yaw_weight * wrap_angle(est.yaw - gt.yaw);
  return std::sqrt(dx * dx + dy * dy + dyaw * dyaw);
}

inline StepOutcome classify_outcome(bool collided, bool lost, bool arrived, int step_index,
                                    int max_len) {
  if (collided) return StepOutcome::kCollided;
  if (lost) return StepOutcome::kLost;
  if (arrived) return StepOutcome::kArrived;
  if (step_index >= max_len) return StepOutcome::kTimeout;
  return StepOutcome::kRunning;
}

// One step's reward. Approach progress is measured on ground truth and
// divided down by the belief uncertainty; arrival fires on the estimated
// position (the robot stops where it believes the goal is); lost compares
// estimate against truth.
inline RewardBreakdown compute_reward(const Pose2D& prev_gt, const Pose2D& cur_gt,
                                      const Pose2D& prev_est, const Pose2D& cur_est,
                                      const Pose2D& goal, const BeliefSummary& belief,
                                      bool collided, int step_index, const RewardParams& params) {
  RewardBreakdown r;

  double denom = 1.0;
  if (params.enable_uncertainty_weight) {
    if (params.uncertainty_denominator_std) {
      denom += std::sqrt(belief.var_x) + std::sqrt(belief.var_y) + std::sqrt(belief.var_yaw);
    } else {
      denom += belief.var_x + belief.var_y + belief.var_yaw;
    }
  }
  double progress = (prev_gt.position() - goal.position()).norm() -
                    (cur_gt.position() - goal.position()).norm();
  r.app = params.k_a * progress / denom;

  if (params.enable_pose_term) {
    r.pose = params.k_p * (pose_error_norm(prev_est, prev_gt, params.pose_yaw_weight) -
                           pose_error_norm(cur_est, cur_gt, params.pose_yaw_weight));
  }

  bool arrived = (cur_est.position() - goal.position()).norm() < params.eps_a;
  bool lost = (cur_est.position() - cur_gt.position()).norm() > params.eps_l ||
              std::abs(wrap_angle(cur_est.yaw - cur_gt.yaw)) > params.eps_yaw;

  if (arrived) r.arr = params.r_arr;
  if (collided) r.col = params.r_col;
  if (lost && params.enable_lost_term) r.lost = params.r_lost;
  r.step = params.r_step;

  r.terminal = classify_outcome(collided, lost, arrived, step_index, params.max_episode_len);
  r.total = r.app + r.pose + r.arr + r.col + r.lost + r.step;
  return r;
}

}  // namespace locnav

#pragma once

#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "locnav/actions.hpp"
#include "locnav/crowd.hpp"
#include "locnav/localization.hpp"
#include "locnav/observation.hpp"
#include "locnav/reward.hpp"
#include "locnav/sensors.hpp"
#include "locnav/world.hpp"

namespace locnav {

// Reward ablations per variant: the laser baselines learn without the
// localization-aware terms, the reward ablation only drops the pose term.
inline void apply_variant_reward(RewardParams& p, Variant v) {
  if (v == Variant::kNoPoseReward) p.enable_pose_term = false;
  if (v == Variant::kDrlLaser || v == Variant::kDrlLaserPed) {
    p.enable_pose_term = false;
    p.enable_lost_term = false;
    p.enable_uncertainty_weight = false;
  }
}

struct EnvParams {
  Variant variant = Variant::kLndrl;
  LaserConfig laser;
  BeamModelParams beam;   // simulated sensor noise
  OdomNoiseParams odom;   // actuation noise applied to commanded velocities
  AmclParams amcl;
  RewardParams reward;
  double dt = 0.1;             // control period, s
  double grid_resolution = 0.05;  // m, localization map raster
  int spawn_attempts = 200;    // retries for a start pose clear of pedestrians

  void validate() const {
    if (!(dt > 0.0)) throw ValidationError("env: dt must be > 0");
    if (!(grid_resolution > 0.0)) throw ValidationError("env: grid_resolution must be > 0");
    if (spawn_attempts < 1) throw ValidationError("env: spawn_attempts must be >= 1");
    laser.validate();
    beam.validate();
    odom.validate();
    amcl.validate();
    reward.validate();
  }

  // Reads the [sensors], [amcl], [reward] sections plus variant/dt keys from
  // a run config. Missing sections fall back to defaults.
  static EnvParams from_config(const Config& cfg) {
    EnvParams p;
    const ConfigTable* run = cfg.find_section("run");
    if (run != nullptr) {
      p.variant = parse_variant(run->get_string("variant", "lndrl"));
      p.dt = run->get_double("dt", p.dt);
      p.grid_resolution = run->get_double("grid_resolution", p.grid_resolution);
    }
    const ConfigTable* sensors = cfg.find_section("sensors");
    if (sensors != nullptr) {
      p.laser.beams = static_cast<int>(sensors->get_int("beams", p.laser.beams));
      p.laser.fov = sensors->get_double("fov", p.laser.fov);
      p.laser.max_range = sensors->get_double("max_range", p.laser.max_range);
      p.beam.z_hit = sensors->get_double("z_hit", p.beam.z_hit);
      p.beam.z_max = sensors->get_double("z_max", p.beam.z_max);
      p.beam.z_rand = sensors->get_double("z_rand", p.beam.z_rand);
      p.beam.sigma_hit = sensors->get_double("sigma_hit", p.beam.sigma_hit);
      p.beam.max_range = p.laser.max_range;
      p.odom.gain_std = sensors->get_double("odom_gain_std", p.odom.gain_std);
    }
    const ConfigTable* amcl = cfg.find_section("amcl");
    if (amcl != nullptr) p.amcl = AmclParams::from_config(*amcl);
    const ConfigTable* reward = cfg.find_section("reward");
    if (reward != nullptr) p.reward = RewardParams::from_config(*reward);
    p.validate();
    return p;
  }
};

struct StepResult {
  RewardBreakdown reward;
  StepOutcome outcome = StepOutcome::kRunning;
  bool done = false;
};

// One robot, one crowd, one particle filter. Everything the policy sees goes
// through the noisy sensing path; ground truth leaves this class only via the
// reward computation and the explicitly named ground-truth accessors.
class Env {
 public:
  Env(ScenarioSpec scenario, EnvParams params, uint64_t seed)
      : scenario_(std::move(scenario)), params_(std::move(params)), rng_(seed) {
    params_.validate();
    // The filter consumes the scans this sim emits; keep the geometry single
    // sourced so a config override cannot desynchronize them.
    params_.amcl.laser = params_.laser;
    params_.amcl.model.max_range = params_.laser.max_range;
    apply_variant_reward(params_.reward, params_.variant);
    grid_ = std::make_shared<OccupancyGrid>(rasterize(scenario_.world, params_.grid_resolution));
    if (params_.amcl.use_range_cache)
      cache_ = std::make_shared<ExpectedScanCache>(*grid_, params_.amcl.cache_cell,
                                                   params_.amcl.cache_angle_bins,
                                                   params_.laser.max_range);
    reset();
  }

  // Replaces the random stream and starts a fresh episode. Training reseeds
  // every env at each iteration boundary so a resumed run replays the exact
  // same episodes without serializing generator state.
  void reseed(uint64_t seed) {
    rng_ = Rng(seed);
    reset();
  }

  // Starts a fresh episode from the internal stream: new crowd, new start and
  // goal, re-initialized belief around the true start pose.
  void reset() {
    peds_ = spawn_pedestrians(scenario_, rng_);
    std::vector<Disc> discs = pedestrian_discs(peds_);
    gt_pose_ = sample_clear_pose(scenario_.robot_start_region, discs);
    goal_ = sample_pose_in_region(scenario_.world, scenario_.robot_goal_region, rng_,
                                  scenario_.robot_radius);
    odom_pose_ = gt_pose_;

    belief_ = init_belief(gt_pose_, params_.amcl.init_spread_x, params_.amcl.init_spread_y,
                          params_.amcl.init_spread_yaw, params_.amcl.max_particles, rng_);
    belief_.expected_scan_cache = cache_;
    summary_ = summarize(belief_);

    ScanObservation truth = scan_ground_truth(scenario_.world, discs, gt_pose_, params_.laser);
    last_scan_ = apply_beam_noise(truth, params_.beam, rng_);
    scan_history_.assign(variant_scan_frames(params_.variant), last_scan_);

    step_index_ = 0;
    done_ = false;
    last_cmd_ = Action{0.0, 0.0};
    rebuild_observation();
  }

  StepResult step(int action_index) {
    if (done_) throw ContractError("env: episode finished; call reset() before stepping");
    Action cmd = action_at(action_index);

    // The crowd reacts to the robot disc before anyone moves this tick.
    Velocity actual = apply_odom_noise(Velocity{cmd.v, cmd.w}, params_.odom, rng_);
    RobotDisc robot{gt_pose_.position(),
                    Vec2{std::cos(gt_pose_.yaw), std::sin(gt_pose_.yaw)} * actual.v,
                    scenario_.robot_radius};
    update_pedestrians(peds_, scenario_, robot, params_.dt, rng_);

    Pose2D prev_gt = gt_pose_;
    Pose2D prev_est = summary_.mean;

    // True motion follows the noisy velocities; dead reckoning integrates the
    // clean command, so the odometry delta drifts from the truth exactly the
    // way a wheel encoder would.
    gt_pose_ = integrate_unicycle(gt_pose_, actual.v, actual.w, params_.dt);
    Pose2D odom_new = integrate_unicycle(odom_pose_, cmd.v, cmd.w, params_.dt);
    Pose2D odom_delta = relative_pose(odom_pose_, odom_new);
    odom_pose_ = odom_new;

    std::vector<Disc> discs = pedestrian_discs(peds_);
    bool collided = check_collision(scenario_.world, discs, gt_pose_, scenario_.robot_radius);

    ScanObservation truth = scan_ground_truth(scenario_.world, discs, gt_pose_, params_.laser);
    last_scan_ = apply_beam_noise(truth, params_.beam, rng_);
    summary_ = localize_step(belief_, odom_delta, last_scan_, *grid_, params_.amcl, rng_);

    scan_history_.erase(scan_history_.begin());
    scan_history_.push_back(last_scan_);
    ++step_index_;

    StepResult out;
    out.reward = compute_reward(prev_gt, gt_pose_, prev_est, summary_.mean, goal_, summary_,
                                collided, step_index_, params_.reward);
    out.outcome = out.reward.terminal;
    out.done = out.outcome != StepOutcome::kRunning;
    done_ = out.done;
    last_cmd_ = cmd;
    rebuild_observation();
    return out;
  }

  // Kidnaps the robot: shifts the true pose without telling odometry or the
  // filter, forcing estimate/truth divergence on the next step.
  void displace_ground_truth(double dx, double dy) {
    gt_pose_.x += dx;
    gt_pose_.y += dy;
  }

  const ObservationBundle& observation() const { return obs_; }
  const BeliefSummary& belief() const { return summary_; }
  const Pose2D& ground_truth() const { return gt_pose_; }
  const Pose2D& odometry() const { return odom_pose_; }
  const Pose2D& goal() const { return goal_; }
  const std::vector<PedestrianState>& pedestrians() const { return peds_; }
  const ScanObservation& last_scan() const { return last_scan_; }
  Action last_command() const { return last_cmd_; }
  int step_index() const { return step_index_; }
  bool done() const { return done_; }
  const ScenarioSpec& scenario() const { return scenario_; }
  const EnvParams& params() const { return params_; }
  const OccupancyGrid& grid() const { return *grid_; }

 private:
  Pose2D sample_clear_pose(const Rect& region, const std::vector<Disc>& discs) {
    for (int attempt = 0; attempt < params_.spawn_attempts; ++attempt) {
      Pose2D pose =
          sample_pose_in_region(scenario_.world, region, rng_, scenario_.robot_radius);
      if (!check_collision(scenario_.world, discs, pose, scenario_.robot_radius)) return pose;
    }
    throw SamplingExhausted("env: no robot start clear of pedestrians after " +
                            std::to_string(params_.spawn_attempts) + " attempts");
  }

  void rebuild_observation() {
    obs_ = assemble_observation(params_.variant, summary_, goal_, scan_history_, peds_, gt_pose_);
  }

  ScenarioSpec scenario_;
  EnvParams params_;
  Rng rng_;
  std::shared_ptr<OccupancyGrid> grid_;
  std::shared_ptr<ExpectedScanCache> cache_;

  std::vector<PedestrianState> peds_;
  Pose2D gt_pose_;
  Pose2D odom_pose_;
  Pose2D goal_;
  ParticleSet belief_;
  BeliefSummary summary_;
  ScanObservation last_scan_;
  std::vector<ScanObservation> scan_history_;
  ObservationBundle obs_;
  Action last_cmd_{0.0, 0.0};
  int step_index_ = 0;
  bool done_ = false;
};

}  // namespace locnav

#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "locnav/agent.hpp"
#include "locnav/baselines.hpp"
#include "locnav/checkpoint.hpp"
#include "locnav/env.hpp"
#include "locnav/network.hpp"
#include "locnav/parallel.hpp"

namespace locnav {

// Maps the current environment state to a catalog action index. Benchmark
// episodes may run concurrently, so implementations must be safe to call
// from several threads at once.
using PolicyFn = std::function<int(const Env&)>;

struct LoadedPolicy {
  std::shared_ptr<ParamStore> store;
  std::shared_ptr<PolicyValueNet> net;
  Variant variant = Variant::kLndrl;
  uint64_t iteration = 0;
};

inline LoadedPolicy load_policy(const std::string& checkpoint_path) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  LoadedPolicy lp;
  lp.variant = parse_variant(ck.variant);
  lp.store = std::make_shared<ParamStore>();
  apply_checkpoint(ck, *lp.store);
  // The net adopts the restored tensors; the rng is only consulted for
  // parameters a checkpoint failed to provide.
  Rng init_rng(1);
  lp.net = std::make_shared<PolicyValueNet>(lp.variant, *lp.store, init_rng);
  lp.iteration = ck.iteration;
  return lp;
}

// Greedy action head: the most probable action, ties to the lowest index.
inline PolicyFn make_net_policy(const LoadedPolicy& lp) {
  if (!lp.net || !lp.store) throw ContractError("make_net_policy: empty policy");
  return [lp](const Env& env) {
    if (env.params().variant != lp.variant)
      throw ContractError(std::string("policy trained for variant '") +
                          variant_name(lp.variant) + "' driven in a '" +
                          variant_name(env.params().variant) + "' environment");
    ObsBatch b = batch_observations(lp.variant, std::vector<ObservationBundle>{env.observation()});
    Graph g;
    const Tensor& logp = g.value(lp.net->policy_logprobs(g, b));
    return detail::argmax_row(logp, 0);
  };
}

inline PolicyFn make_dwa_policy(const DwaParams& params) {
  return [params](const Env& env) {
    DwaParams p = params;
    p.laser = env.params().laser;
    return dwa_plan(env.last_scan(), env.belief().mean, env.goal(), env.last_command(), p)
        .action_index;
  };
}

struct StepRow {
  double t = 0.0;  // seconds since episode start, stamped after the step
  Pose2D gt;
  Pose2D est;
  double var_x = 0.0;
  double var_y = 0.0;
  double var_yaw = 0.0;
  int action = 0;
  RewardBreakdown reward;
  std::vector<Vec2> ped_positions;
};

struct EpisodeRecord {
  uint64_t seed = 0;
  Pose2D start;
  Pose2D goal;
  std::vector<StepRow> rows;
  StepOutcome outcome = StepOutcome::kRunning;
  // The environment declares arrival on the estimated pose; this checks the
  // ground truth against the same radius, so a confidently wrong belief
  // counts as stuck rather than arrived.
  bool arrived_true = false;
  double duration_s = 0.0;
  double path_length_m = 0.0;
};

inline EpisodeRecord run_episode(const ScenarioSpec& scenario, const EnvParams& params,
                                 const PolicyFn& policy, uint64_t seed) {
  Env env(scenario, params, seed);
  EpisodeRecord rec;
  rec.seed = seed;
  rec.start = env.ground_truth();
  rec.goal = env.goal();
  Pose2D prev = env.ground_truth();
  while (!env.done()) {
    int a = policy(env);
    StepResult res = env.step(a);
    StepRow row;
    row.t = env.step_index() * params.dt;
    row.gt = env.ground_truth();
    row.est = env.belief().mean;
    row.var_x = env.belief().var_x;
    row.var_y = env.belief().var_y;
    row.var_yaw = env.belief().var_yaw;
    row.action = a;
    row.reward = res.reward;
    row.ped_positions.reserve(env.pedestrians().size());
    for (const PedestrianState& ped : env.pedestrians()) row.ped_positions.push_back(ped.position);
    rec.rows.push_back(std::move(row));
    rec.path_length_m += (env.ground_truth().position() - prev.position()).norm();
    prev = env.ground_truth();
  }
  rec.outcome = rec.rows.back().reward.terminal;
  rec.duration_s = static_cast<double>(rec.rows.size()) * params.dt;
  rec.arrived_true = rec.outcome == StepOutcome::kArrived &&
                     (env.ground_truth().position() - rec.goal.position()).norm() <=
                         params.reward.eps_a;
  return rec;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  int n = 0;
};

namespace detail {

// Population statistics; an empty sample reports zeros.
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  m.n = static_cast<int>(xs.size());
  if (m.n == 0) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / m.n;
  double sq = 0.0;
  for (double x : xs) sq += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(sq / m.n);
  return m;
}

}  // namespace detail

struct MetricsRow {
  std::string policy;
  std::string scenario;
  int episodes = 0;
  uint64_t seed = 0;
  double ar = 0.0;  // arrived with the true pose inside the goal radius
  double cr = 0.0;  // collided
  double lr = 0.0;  // localization lost
  double sr = 0.0;  // timed out or arrived only in belief
  MeanStd time_s;        // arrivals only
  MeanStd dist_m;        // arrivals only
  MeanStd err_pos;       // per step, all episodes
  MeanStd err_yaw;       // per step, all episodes
  MeanStd sigma_sum;     // per step: sqrt(var_x) + sqrt(var_y) + sqrt(var_yaw)
};

inline MetricsRow compute_metrics(const std::string& policy, const std::string& scenario,
                                  const std::vector<EpisodeRecord>& records, uint64_t seed) {
  if (records.empty()) throw ContractError("compute_metrics: no episodes");
  MetricsRow m;
  m.policy = policy;
  m.scenario = scenario;
  m.episodes = static_cast<int>(records.size());
  m.seed = seed;
  std::vector<double> times, dists, errs_p, errs_a, sigmas;
  int arrived = 0, collided = 0, lost = 0, stuck = 0;
  for (const EpisodeRecord& r : records) {
    if (r.arrived_true) {
      ++arrived;
      times.push_back(r.duration_s);
      dists.push_back(r.path_length_m);
    } else if (r.outcome == StepOutcome::kCollided) {
      ++collided;
    } else if (r.outcome == StepOutcome::kLost) {
      ++lost;
    } else {
      ++stuck;
    }
    for (const StepRow& row : r.rows) {
      errs_p.push_back((row.est.position() - row.gt.position()).norm());
      errs_a.push_back(std::abs(wrap_angle(row.est.yaw - row.gt.yaw)));
      sigmas.push_back(std::sqrt(row.var_x) + std::sqrt(row.var_y) + std::sqrt(row.var_yaw));
    }
  }
  double n = static_cast<double>(m.episodes);
  m.ar = arrived / n;
  m.cr = collided / n;
  m.lr = lost / n;
  m.sr = stuck / n;
  m.time_s = detail::mean_std(times);
  m.dist_m = detail::mean_std(dists);
  m.err_pos = detail::mean_std(errs_p);
  m.err_yaw = detail::mean_std(errs_a);
  m.sigma_sum = detail::mean_std(sigmas);
  return m;
}

// Episodes are seeded from a counter so results are independent of worker
// count and identical across runs.
inline std::vector<EpisodeRecord> run_benchmark(const ScenarioSpec& scenario,
                                                const EnvParams& params, const PolicyFn& policy,
                                                int episodes, uint64_t seed, int workers = 1) {
  if (episodes < 1) throw ContractError("run_benchmark: episodes must be >= 1");
  std::vector<EpisodeRecord> records(static_cast<size_t>(episodes));
  parallel_for(episodes, workers, [&](int i) {
    records[static_cast<size_t>(i)] =
        run_episode(scenario, params, policy, derive_seed(seed, static_cast<uint64_t>(i), 0, 0xB));
  });
  return records;
}

namespace detail {

inline std::string fmt6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

}  // namespace detail

inline std::string metrics_csv_header() {
  return "policy,scenario,n,AR,CR,LR,SR,t_mean,t_std,d_mean,d_std,ep_mean,ep_std,"
         "ea_mean,ea_std,sv_mean,sv_std,seed";
}

inline std::string metrics_csv_row(const MetricsRow& m) {
  using detail::fmt6;
  std::string s = m.policy + "," + m.scenario + "," + std::to_string(m.episodes);
  for (double v : {m.ar, m.cr, m.lr, m.sr, m.time_s.mean, m.time_s.std, m.dist_m.mean,
                   m.dist_m.std, m.err_pos.mean, m.err_pos.std, m.err_yaw.mean, m.err_yaw.std,
                   m.sigma_sum.mean, m.sigma_sum.std})
    s += "," + fmt6(v);
  s += "," + std::to_string(m.seed);
  return s;
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write metrics csv '" + path + "'");
  out << metrics_csv_header() << "\n";
  for (const MetricsRow& m : rows) out << metrics_csv_row(m) << "\n";
}

inline std::string episode_csv_header() {
  return "t,gt_x,gt_y,gt_yaw,est_x,est_y,est_yaw,var_x,var_y,var_yaw,action,"
         "r_app,r_pose,r_arr,r_col,r_lost,r_step,r_total,outcome";
}

inline void write_episode_csv(const std::string& path, const EpisodeRecord& rec) {
  using detail::fmt6;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write episode csv '" + path + "'");
  out << episode_csv_header() << "\n";
  for (const StepRow& r : rec.rows) {
    out << fmt6(r.t);
    for (double v : {r.gt.x, r.gt.y, r.gt.yaw, r.est.x, r.est.y, r.est.yaw, r.var_x, r.var_y,
                     r.var_yaw})
      out << "," << fmt6(v);
    out << "," << r.action;
    for (double v :
         {r.reward.app, r.reward.pose, r.reward.arr, r.reward.col, r.reward.lost, r.reward.step,
          r.reward.total})
      out << "," << fmt6(v);
    out << "," << outcome_name(r.reward.terminal) << "\n";
  }
}

}  // namespace locnav

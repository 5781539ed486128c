#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "locnav/checkpoint.hpp"
#include "locnav/env.hpp"
#include "locnav/network.hpp"
#include "locnav/parallel.hpp"

namespace locnav {

struct Transition {
  ObservationBundle observation;
  int action = 0;
  double log_prob = 0.0;  // log pi(a|o) at collection time
  double reward = 0.0;
  double value = 0.0;  // V(o) at collection time
  bool done = false;
  StepOutcome outcome = StepOutcome::kRunning;
};

struct PPOConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  int epochs = 4;
  int minibatch = 512;
  double learning_rate = 3e-4;
  bool lr_decay = true;  // linear decay toward zero over total_steps
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  int horizon = 256;
  int n_envs = 8;
  long total_steps = 200000;

  void validate() const {
    if (!(gamma > 0.0) || gamma > 1.0 || !(gae_lambda >= 0.0) || gae_lambda > 1.0)
      throw ValidationError("ppo: gamma and gae_lambda must lie in (0,1]");
    if (!(clip_epsilon > 0.0)) throw ValidationError("ppo: clip_epsilon must be > 0");
    if (epochs < 1 || minibatch < 1 || horizon < 1 || n_envs < 1)
      throw ValidationError("ppo: epochs, minibatch, horizon, n_envs must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("ppo: learning_rate must be > 0");
    if (entropy_coef < 0.0 || value_coef < 0.0)
      throw ValidationError("ppo: entropy_coef and value_coef must be >= 0");
    if (total_steps < 1) throw ValidationError("ppo: total_steps must be >= 1");
  }

  static PPOConfig from_config(const ConfigTable& t) {
    PPOConfig p;
    p.gamma = t.get_double("gamma", p.gamma);
    p.gae_lambda = t.get_double("gae_lambda", p.gae_lambda);
    p.clip_epsilon = t.get_double("clip_epsilon", p.clip_epsilon);
    p.epochs = static_cast<int>(t.get_int("epochs", p.epochs));
    p.minibatch = static_cast<int>(t.get_int("minibatch", p.minibatch));
    p.learning_rate = t.get_double("learning_rate", p.learning_rate);
    p.lr_decay = t.get_bool("lr_decay", p.lr_decay);
    p.entropy_coef = t.get_double("entropy_coef", p.entropy_coef);
    p.value_coef = t.get_double("value_coef", p.value_coef);
    p.horizon = static_cast<int>(t.get_int("horizon", p.horizon));
    p.n_envs = static_cast<int>(t.get_int("n_envs", p.n_envs));
    p.total_steps = t.get_int("total_steps", p.total_steps);
    p.validate();
    return p;
  }
};

// One iteration's worth of experience, env-major: transitions[e*horizon + t].
struct RolloutBatch {
  int n_envs = 0;
  int horizon = 0;
  std::vector<Transition> transitions;
  std::vector<double> bootstrap_values;  // V of the obs after each env's last step
  // Episodes completed inside this rollout window.
  std::vector<double> episode_rewards;
  std::vector<int> episode_lengths;
  std::vector<StepOutcome> episode_outcomes;
};

struct GaeResult {
  std::vector<double> advantages;  // normalized unless requested otherwise
  std::vector<double> returns;     // raw advantage + value
};

struct LossReport {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  int kl_flags = 0;  // minibatches whose KL estimate dipped below -1e-3
};

namespace detail {

// Categorical draw from a row of log-probabilities via inverse CDF.
inline int sample_from_logprobs(const Tensor& lp, int row, Rng& rng) {
  double u = rng.uniform();
  double cum = 0.0;
  int n = lp.dim(1);
  for (int j = 0; j < n; ++j) {
    cum += std::exp(static_cast<double>(lp.data[static_cast<size_t>(row) * n + j]));
    if (u < cum) return j;
  }
  return n - 1;
}

inline int argmax_row(const Tensor& lp, int row) {
  int n = lp.dim(1);
  int best = 0;
  for (int j = 1; j < n; ++j)
    if (lp.data[static_cast<size_t>(row) * n + j] > lp.data[static_cast<size_t>(row) * n + best])
      best = j;
  return best;
}

}  // namespace detail

// Runs every env `horizon` steps, sampling actions from the policy. Episode
// terminations auto-reset; values are filled in one chunked pass afterwards.
// Ground truth never reaches the policy: actions come from the observation
// bundle alone.
inline RolloutBatch collect_rollouts(std::vector<std::unique_ptr<Env>>& envs,
                                     PolicyValueNet& net, int horizon, Rng& action_rng,
                                     int workers = 1) {
  if (envs.empty()) throw ContractError("collect_rollouts: empty env pool");
  if (horizon < 1) throw ContractError("collect_rollouts: horizon must be >= 1");
  int n_envs = static_cast<int>(envs.size());
  Variant variant = envs[0]->params().variant;

  RolloutBatch batch;
  batch.n_envs = n_envs;
  batch.horizon = horizon;
  batch.transitions.resize(static_cast<size_t>(n_envs) * horizon);
  batch.bootstrap_values.resize(n_envs);

  std::vector<double> ep_reward(n_envs, 0.0);
  std::vector<int> ep_len(n_envs, 0);
  std::vector<int> actions(n_envs);

  for (int t = 0; t < horizon; ++t) {
    std::vector<const ObservationBundle*> obs(n_envs);
    for (int e = 0; e < n_envs; ++e) obs[e] = &envs[e]->observation();
    ObsBatch ob = batch_observations(variant, obs);
    Graph g;
    const Tensor& lp = g.value(net.policy_logprobs(g, ob));

    for (int e = 0; e < n_envs; ++e) {
      int a = detail::sample_from_logprobs(lp, e, action_rng);
      actions[e] = a;
      Transition& tr = batch.transitions[static_cast<size_t>(e) * horizon + t];
      tr.observation = envs[e]->observation();
      tr.action = a;
      tr.log_prob = static_cast<double>(lp.data[static_cast<size_t>(e) * kNumActions + a]);
    }

    parallel_for(n_envs, workers, [&](int e) {
      Transition& tr = batch.transitions[static_cast<size_t>(e) * horizon + t];
      StepResult r;
      try {
        r = envs[e]->step(actions[e]);
      } catch (const Error& err) {
        throw ContractError("rollout env " + std::to_string(e) + " step " + std::to_string(t) +
                            ": " + err.what());
      }
      tr.reward = r.reward.total;
      tr.done = r.done;
      tr.outcome = r.outcome;
    });

    for (int e = 0; e < n_envs; ++e) {
      const Transition& tr = batch.transitions[static_cast<size_t>(e) * horizon + t];
      ep_reward[e] += tr.reward;
      ep_len[e] += 1;
      if (tr.done) {
        batch.episode_rewards.push_back(ep_reward[e]);
        batch.episode_lengths.push_back(ep_len[e]);
        batch.episode_outcomes.push_back(tr.outcome);
        ep_reward[e] = 0.0;
        ep_len[e] = 0;
        envs[e]->reset();
      }
    }
  }

  // Value pass over every stored observation plus the bootstrap obs, chunked
  // so activations stay bounded.
  std::vector<const ObservationBundle*> all;
  all.reserve(batch.transitions.size() + n_envs);
  for (const Transition& tr : batch.transitions) all.push_back(&tr.observation);
  std::vector<ObservationBundle> tails(n_envs);
  for (int e = 0; e < n_envs; ++e) {
    tails[e] = envs[e]->observation();
    all.push_back(&tails[e]);
  }
  constexpr int kChunk = 512;
  std::vector<double> values(all.size());
  for (size_t lo = 0; lo < all.size(); lo += kChunk) {
    size_t hi = std::min(all.size(), lo + kChunk);
    std::vector<const ObservationBundle*> chunk(all.begin() + lo, all.begin() + hi);
    ObsBatch ob = batch_observations(variant, chunk);
    Graph g;
    const Tensor& v = g.value(net.value(g, ob));
    for (size_t i = lo; i < hi; ++i) values[i] = static_cast<double>(v.data[i - lo]);
  }
  for (size_t i = 0; i < batch.transitions.size(); ++i) batch.transitions[i].value = values[i];
  for (int e = 0; e < n_envs; ++e)
    batch.bootstrap_values[e] = values[batch.transitions.size() + e];
  return batch;
}

// delta_t = r_t + gamma*V_{t+1}*(1-done) - V_t
// A_t     = delta_t + gamma*lambda*(1-done)*A_{t+1}
// returns = raw A + V; advantages then normalized to mean 0, std 1.
inline GaeResult compute_gae(const RolloutBatch& batch, double gamma, double lambda,
                             bool normalize = true) {
  size_t n = batch.transitions.size();
  if (n == 0) throw ContractError("compute_gae: empty batch");
  GaeResult out;
  out.advantages.resize(n);
  out.returns.resize(n);
  for (int e = 0; e < batch.n_envs; ++e) {
    double next_adv = 0.0;
    double next_value = batch.bootstrap_values[e];
    for (int t = batch.horizon - 1; t >= 0; --t) {
      size_t i = static_cast<size_t>(e) * batch.horizon + t;
      const Transition& tr = batch.transitions[i];
      double mask = tr.done ? 0.0 : 1.0;
      double delta = tr.reward + gamma * next_value * mask - tr.value;
      double adv = delta + gamma * lambda * mask * next_adv;
      out.advantages[i] = adv;
      out.returns[i] = adv + tr.value;
      next_adv = adv;
      next_value = tr.value;
    }
  }
  if (normalize) {
    double mean = std::accumulate(out.advantages.begin(), out.advantages.end(), 0.0) /
                  static_cast<double>(n);
    double var = 0.0;
    for (double a : out.advantages) var += (a - mean) * (a - mean);
    double std_dev = std::sqrt(var / static_cast<double>(n));
    if (std_dev > 1e-12) {
      for (double& a : out.advantages) a = (a - mean) / std_dev;
    } else {
      for (double& a : out.advantages) a -= mean;
    }
  }
  return out;
}

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t t = 0;
};

inline void adam_step(ParamStore& store, AdamState& st, double lr) {
  st.t += 1;
  double bias1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  double bias2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (Param* p : store.all()) {
    if (p->adam_m.empty()) p->adam_m = Tensor(p->value.shape);
    if (p->adam_v.empty()) p->adam_v = Tensor(p->value.shape);
    for (size_t i = 0; i < p->value.numel(); ++i) {
      double g = static_cast<double>(p->grad.data[i]);
      double m = st.beta1 * p->adam_m.data[i] + (1.0 - st.beta1) * g;
      double v = st.beta2 * p->adam_v.data[i] + (1.0 - st.beta2) * g * g;
      p->adam_m.data[i] = static_cast<Real>(m);
      p->adam_v.data[i] = static_cast<Real>(v);
      p->value.data[i] -=
          static_cast<Real>(lr * (m / bias1) / (std::sqrt(v / bias2) + st.eps));
    }
  }
}

// One PPO update over the batch: `epochs` shuffled passes in minibatches,
// maximizing clip(ratio)-surrogate + entropy bonus - value error. Gradients
// are seeded analytically at the two network heads, one Adam step per
// minibatch. Throws NumericalFault with a diagnostic dump if anything goes
// non-finite.
inline LossReport ppo_update(PolicyValueNet& net, ParamStore& store, AdamState& adam,
                             const RolloutBatch& batch, const GaeResult& gae,
                             const PPOConfig& cfg, double lr, Rng& shuffle_rng) {
  size_t n = batch.transitions.size();
  if (n == 0) throw ContractError("ppo_update: empty batch");
  if (gae.advantages.size() != n || gae.returns.size() != n)
    throw ContractError("ppo_update: GAE result does not match the batch");
  Variant variant = batch.transitions[0].observation.variant;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  LossReport report;
  double weight_total = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (size_t lo = 0; lo < n; lo += static_cast<size_t>(cfg.minibatch)) {
      size_t hi = std::min(n, lo + static_cast<size_t>(cfg.minibatch));
      int m = static_cast<int>(hi - lo);

      std::vector<const ObservationBundle*> obs(m);
      for (int i = 0; i < m; ++i) obs[i] = &batch.transitions[order[lo + i]].observation;
      ObsBatch ob = batch_observations(variant, obs);

      Graph g;
      int lp_node = net.policy_logprobs(g, ob);
      int v_node = net.value(g, ob);
      const Tensor& lp = g.value(lp_node);
      const Tensor& vv = g.value(v_node);

      Tensor lp_grad(lp.shape);
      Tensor v_grad(vv.shape);
      double surr_sum = 0.0, vloss_sum = 0.0, ent_sum = 0.0, kl_sum = 0.0;
      int clipped = 0;
      for (int i = 0; i < m; ++i) {
        const Transition& tr = batch.transitions[order[lo + i]];
        double adv = gae.advantages[order[lo + i]];
        double ret = gae.returns[order[lo + i]];
        const Real* row = &lp.data[static_cast<size_t>(i) * kNumActions];
        double lp_new = static_cast<double>(row[tr.action]);
        double ratio = std::exp(lp_new - tr.log_prob);
        double unclipped = ratio * adv;
        double clip_ratio = std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
        double clipped_obj = clip_ratio * adv;
        surr_sum += std::min(unclipped, clipped_obj);
        if (std::abs(ratio - 1.0) > cfg.clip_epsilon) ++clipped;
        kl_sum += tr.log_prob - lp_new;

        // Surrogate gradient: flows only while the unclipped branch is the
        // active minimum; d ratio / d lp_new = ratio.
        if (unclipped <= clipped_obj)
          lp_grad.data[static_cast<size_t>(i) * kNumActions + tr.action] -=
              static_cast<Real>(ratio * adv / m);

        double ent = 0.0;
        for (int j = 0; j < kNumActions; ++j) {
          double lpj = static_cast<double>(row[j]);
          double pj = std::exp(lpj);
          ent -= pj * lpj;
          // d(-entropy_coef * H)/d lp_j = entropy_coef * p_j * (lp_j + 1)
          lp_grad.data[static_cast<size_t>(i) * kNumActions + j] +=
              static_cast<Real>(cfg.entropy_coef * pj * (lpj + 1.0) / m);
        }
        ent_sum += ent;

        double vdiff = static_cast<double>(vv.data[i]) - ret;
        vloss_sum += vdiff * vdiff;
        v_grad.data[i] = static_cast<Real>(2.0 * cfg.value_coef * vdiff / m);
      }

      double policy_loss = -surr_sum / m;
      double value_loss = vloss_sum / m;
      double entropy = ent_sum / m;
      double approx_kl = kl_sum / m;
      double total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy;
      if (!std::isfinite(total)) {
        std::ostringstream dump;
        dump << "ppo_update: non-finite loss (policy " << policy_loss << ", value " << value_loss
             << ", entropy " << entropy << ", lr " << lr << ", adam_t " << adam.t
             << ", minibatch " << lo / cfg.minibatch << " of epoch " << epoch << ")";
        log_error(dump.str());
        throw NumericalFault(dump.str());
      }
      if (approx_kl < -1e-3) {
        report.kl_flags += 1;
        log_warn("ppo_update: approx KL " + std::to_string(approx_kl) +
                 " below -1e-3; ratio drift exceeds the estimator noise bound");
      }

      store.zero_grads();
      g.seed(lp_node, lp_grad);
      g.seed(v_node, v_grad);
      g.run_backward();
      for (Param* p : store.all())
        for (Real gv : p->grad.data)
          if (!std::isfinite(static_cast<double>(gv)))
            throw NumericalFault("ppo_update: non-finite gradient in " + p->name);
      adam_step(store, adam, lr);

      report.policy_loss += policy_loss * m;
      report.value_loss += value_loss * m;
      report.entropy += entropy * m;
      report.clip_fraction += clipped;
      report.approx_kl += approx_kl * m;
      weight_total += m;
    }
  }
  report.policy_loss /= weight_total;
  report.value_loss /= weight_total;
  report.entropy /= weight_total;
  report.clip_fraction /= weight_total;
  report.approx_kl /= weight_total;
  return report;
}

struct CurveRow {
  long steps = 0;
  double mean_episode_reward = 0.0;
  double arrival_rate = 0.0;
  double collision_rate = 0.0;
  double lost_rate = 0.0;
  double stuck_rate = 0.0;
  int episodes = 0;  // completed episodes in the trailing window
  LossReport losses;
};

struct TrainOptions {
  ScenarioSpec scenario;
  EnvParams env;
  PPOConfig ppo;
  uint64_t seed = 0;
  std::string out_dir;       // empty: keep everything in memory
  std::string resume;        // checkpoint path to continue from
  int workers = 1;
  int checkpoint_every = 25;  // iterations
  int stats_window = 100;     // trailing episodes for the curve rates
  double early_stop_ar = -1.0;  // stop once the trailing arrival rate clears this
};

struct TrainResult {
  std::vector<CurveRow> curve;
  std::vector<double> episode_rewards;  // chronological, completed episodes
  std::vector<StepOutcome> episode_outcomes;
  std::string checkpoint_path;
  uint64_t iterations_run = 0;
};

namespace detail {

inline void write_curve_csv(const std::string& path, const std::vector<CurveRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training curve: " + path);
  out << "steps,mean_episode_reward,arrival_rate,collision_rate,lost_rate,stuck_rate,"
         "episodes,policy_loss,value_loss,entropy,clip_fraction,approx_kl\n";
  char buf[320];
  for (const CurveRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%ld,%.6f,%.4f,%.4f,%.4f,%.4f,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  r.steps, r.mean_episode_reward, r.arrival_rate, r.collision_rate, r.lost_rate,
                  r.stuck_rate, r.episodes, r.losses.policy_loss, r.losses.value_loss,
                  r.losses.entropy, r.losses.clip_fraction, r.losses.approx_kl);
    out << buf;
  }
}

}  // namespace detail

// Alternating collect/update loop. Every env is reseeded at each iteration
// boundary from (seed, iteration, env index), so the whole run is a pure
// function of (seed, config) and resuming from a checkpoint replays the
// remaining iterations bitwise.
inline TrainResult train(const TrainOptions& opt) {
  opt.ppo.validate();
  uint64_t master = opt.seed;

  ParamStore store;
  AdamState adam;
  uint64_t start_iter = 0;
  if (!opt.resume.empty()) {
    Checkpoint ck = load_checkpoint(opt.resume);
    if (ck.variant != variant_name(opt.env.variant))
      throw ValidationError("resume: checkpoint variant '" + ck.variant +
                            "' does not match configured variant '" +
                            variant_name(opt.env.variant) + "'");
    apply_checkpoint(ck, store);
    adam.t = ck.adam_t;
    start_iter = ck.iteration;
    master = ck.seed;
    log_info("resuming from " + opt.resume + " at iteration " + std::to_string(start_iter));
  }
  Rng init_rng(derive_seed(master, 0, 0, 0xC));
  PolicyValueNet net(opt.env.variant, store, init_rng);

  std::vector<std::unique_ptr<Env>> envs;
  envs.reserve(opt.ppo.n_envs);
  for (int e = 0; e < opt.ppo.n_envs; ++e)
    envs.push_back(std::make_unique<Env>(opt.scenario, opt.env, derive_seed(master, 0, e, 0xE)));

  long steps_per_iter = static_cast<long>(opt.ppo.horizon) * opt.ppo.n_envs;
  uint64_t iterations =
      static_cast<uint64_t>((opt.ppo.total_steps + steps_per_iter - 1) / steps_per_iter);

  std::deque<std::pair<double, StepOutcome>> window;
  TrainResult result;
  result.iterations_run = start_iter;

  if (!opt.out_dir.empty()) std::filesystem::create_directories(opt.out_dir);
  auto save = [&](uint64_t completed) {
    if (opt.out_dir.empty()) return std::string();
    Checkpoint ck = checkpoint_from_params(variant_name(opt.env.variant), master, completed,
                                           store, adam.t);
    std::string path = opt.out_dir + "/ckpt_" + std::to_string(completed) + ".bin";
    save_checkpoint(path, ck);
    return path;
  };

  for (uint64_t iter = start_iter; iter < iterations; ++iter) {
    for (int e = 0; e < opt.ppo.n_envs; ++e)
      envs[e]->reseed(derive_seed(master, iter + 1, e, 0xE));
    Rng action_rng(derive_seed(master, iter + 1, 0, 0xA));
    Rng shuffle_rng(derive_seed(master, iter + 1, 0, 0x5));

    RolloutBatch batch = collect_rollouts(envs, net, opt.ppo.horizon, action_rng, opt.workers);
    GaeResult gae = compute_gae(batch, opt.ppo.gamma, opt.ppo.gae_lambda);
    double lr = opt.ppo.learning_rate;
    if (opt.ppo.lr_decay)
      lr *= 1.0 - static_cast<double>(iter) / static_cast<double>(iterations);
    LossReport report = ppo_update(net, store, adam, batch, gae, opt.ppo, lr, shuffle_rng);

    for (size_t i = 0; i < batch.episode_rewards.size(); ++i) {
      window.emplace_back(batch.episode_rewards[i], batch.episode_outcomes[i]);
      while (static_cast<int>(window.size()) > opt.stats_window) window.pop_front();
      result.episode_rewards.push_back(batch.episode_rewards[i]);
      result.episode_outcomes.push_back(batch.episode_outcomes[i]);
    }

    CurveRow row;
    row.steps = static_cast<long>((iter + 1)) * steps_per_iter;
    row.episodes = static_cast<int>(window.size());
    if (!window.empty()) {
      int arr = 0, col = 0, lost = 0, stuck = 0;
      double sum = 0.0;
      for (const auto& [rew, outc] : window) {
        sum += rew;
        arr += outc == StepOutcome::kArrived;
        col += outc == StepOutcome::kCollided;
        lost += outc == StepOutcome::kLost;
        stuck += outc == StepOutcome::kTimeout;
      }
      row.mean_episode_reward = sum / static_cast<double>(window.size());
      row.arrival_rate = static_cast<double>(arr) / window.size();
      row.collision_rate = static_cast<double>(col) / window.size();
      row.lost_rate = static_cast<double>(lost) / window.size();
      row.stuck_rate = static_cast<double>(stuck) / window.size();
    }
    row.losses = report;
    result.curve.push_back(row);
    result.iterations_run = iter + 1;

    log_info("iter " + std::to_string(iter + 1) + "/" + std::to_string(iterations) + " steps " +
             std::to_string(row.steps) + " ep_reward " +
             std::to_string(row.mean_episode_reward) + " ar " +
             std::to_string(row.arrival_rate) + " kl " + std::to_string(report.approx_kl));

    if (opt.checkpoint_every > 0 && (iter + 1) % static_cast<uint64_t>(opt.checkpoint_every) == 0)
      result.checkpoint_path = save(iter + 1);

    if (opt.early_stop_ar > 0.0 && static_cast<int>(window.size()) >= opt.stats_window &&
        row.arrival_rate >= opt.early_stop_ar) {
      log_info("early stop: trailing arrival rate " + std::to_string(row.arrival_rate));
      break;
    }
  }

  std::string final_path = save(result.iterations_run);
  if (!final_path.empty()) result.checkpoint_path = final_path;
  if (!opt.out_dir.empty()) detail::write_curve_csv(opt.out_dir + "/curve.csv", result.curve);
  return result;
}

}  // namespace locnav

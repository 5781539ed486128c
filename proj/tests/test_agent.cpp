#include "catch_amalgamated.hpp"
#include "locnav/agent.hpp"

#include <filesystem>

using namespace locnav;
using Catch::Approx;

namespace {

constexpr const char* kRoomText = R"(
[world]
name = "room"
bounds = [0.0, 0.0, 8.0, 8.0]
segments = [
  [0.0, 0.0, 8.0, 0.0],
  [8.0, 0.0, 8.0, 8.0],
  [8.0, 8.0, 0.0, 8.0],
  [0.0, 8.0, 0.0, 0.0],
]

[robot]
start_region = [1.5, 3.5, 2.5, 4.5]
goal_region = [5.5, 3.5, 6.5, 4.5]
radius = 0.17
)";

ScenarioSpec room() { return parse_scenario(parse_config_text(kRoomText, "room")); }

// 720-beam env (the network input width) with a lightweight filter.
EnvParams net_params(Variant v = Variant::kDrlLaser) {
  EnvParams p;
  p.variant = v;
  p.amcl.min_particles = 100;
  p.amcl.max_particles = 200;
  p.amcl.stride = 24;
  return p;
}

std::vector<std::unique_ptr<Env>> make_pool(int n, uint64_t seed,
                                            Variant v = Variant::kDrlLaser) {
  std::vector<std::unique_ptr<Env>> envs;
  for (int e = 0; e < n; ++e)
    envs.push_back(std::make_unique<Env>(room(), net_params(v), derive_seed(seed, 0, e, 0xE)));
  return envs;
}

ObservationBundle fake_bundle(Variant v, Rng& rng) {
  ObservationBundle o;
  o.variant = v;
  o.goal.x = rng.uniform(-6, 6);
  o.goal.y = rng.uniform(-6, 6);
  o.goal.alpha = rng.uniform(-kPi, kPi);
  o.scans.resize(variant_scan_frames(v));
  for (ScanObservation& s : o.scans) {
    s.ranges.resize(720);
    for (double& r : s.ranges) r = rng.uniform(0.1, 12.0);
  }
  if (variant_has_ped_map(v)) o.ped_map.emplace();
  return o;
}

// Hand batch with given (reward, value, done) rows, one env.
RolloutBatch hand_batch(const std::vector<double>& rewards, const std::vector<double>& values,
                        const std::vector<bool>& dones, double bootstrap) {
  RolloutBatch b;
  b.n_envs = 1;
  b.horizon = static_cast<int>(rewards.size());
  b.transitions.resize(rewards.size());
  for (size_t i = 0; i < rewards.size(); ++i) {
    b.transitions[i].reward = rewards[i];
    b.transitions[i].value = values[i];
    b.transitions[i].done = dones[i];
  }
  b.bootstrap_values = {bootstrap};
  return b;
}

// Independent GAE oracle: the explicit discounted sum of TD residuals with
// the done-mask product written out, instead of the backward recursion.
std::vector<double> gae_oracle(const RolloutBatch& b, double gamma, double lambda) {
  std::vector<double> adv(b.transitions.size());
  for (int e = 0; e < b.n_envs; ++e) {
    for (int t = 0; t < b.horizon; ++t) {
      double sum = 0.0;
      double factor = 1.0;
      for (int l = t; l < b.horizon; ++l) {
        size_t i = static_cast<size_t>(e) * b.horizon + l;
        const Transition& tr = b.transitions[i];
        double next_v = (l + 1 < b.horizon) ? b.transitions[i + 1].value
                                            : b.bootstrap_values[e];
        double mask = tr.done ? 0.0 : 1.0;
        double delta = tr.reward + gamma * next_v * mask - tr.value;
        sum += factor * delta;
        if (tr.done) break;
        factor *= gamma * lambda;
      }
      adv[static_cast<size_t>(e) * b.horizon + t] = sum;
    }
  }
  return adv;
}

}  // namespace

TEST_CASE("ppo config validates and reads overrides") {
  PPOConfig c;
  c.validate();
  c.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);

  Config cfg = parse_config_text("[ppo]\ngamma = 0.9\nhorizon = 64\ntotal_steps = 5000\n", "t");
  PPOConfig p = PPOConfig::from_config(*cfg.find_section("ppo"));
  CHECK(p.gamma == 0.9);
  CHECK(p.horizon == 64);
  CHECK(p.total_steps == 5000);
  CHECK(p.clip_epsilon == 0.2);
}

TEST_CASE("rollouts fill every transition with consistent policy outputs") {
  auto envs = make_pool(2, 99);
  ParamStore store;
  Rng init(1);
  PolicyValueNet net(Variant::kDrlLaser, store, init);
  Rng actions(7);

  RolloutBatch batch = collect_rollouts(envs, net, 15, actions);
  REQUIRE(batch.transitions.size() == 30);  // 2 envs x 15 steps
  REQUIRE(batch.bootstrap_values.size() == 2);

  for (const Transition& tr : batch.transitions) {
    CHECK(tr.action >= 0);
    CHECK(tr.action < kNumActions);
    CHECK(tr.log_prob <= 0.0);
    CHECK((tr.done == (tr.outcome != StepOutcome::kRunning)));
    CHECK(tr.observation.scans.size() == 3);

    // Stored log-prob and value must equal a fresh forward pass.
    ObsBatch ob = batch_observations(Variant::kDrlLaser, {&tr.observation});
    Graph g;
    const Tensor& lp = g.value(net.policy_logprobs(g, ob));
    CHECK(tr.log_prob == Approx(static_cast<double>(lp.data[tr.action])).margin(1e-12));
    Graph g2;
    const Tensor& v = g2.value(net.value(g2, ob));
    CHECK(tr.value == Approx(static_cast<double>(v.data[0])).margin(1e-12));
  }
}

TEST_CASE("gae reduces to the td residual when lambda is zero") {
  RolloutBatch b = hand_batch({2.0, -1.0}, {0.5, 0.3}, {false, false}, 0.8);
  GaeResult g = compute_gae(b, 0.9, 0.0, false);
  CHECK(g.advantages[0] == Approx(2.0 + 0.9 * 0.3 - 0.5).margin(1e-12));
  CHECK(g.advantages[1] == Approx(-1.0 + 0.9 * 0.8 - 0.3).margin(1e-12));
  CHECK(g.returns[0] == Approx(g.advantages[0] + 0.5).margin(1e-12));
}

TEST_CASE("undiscounted gae with zero values sums future episode rewards") {
  RolloutBatch b = hand_batch({1.0, 2.0, 3.0, 10.0}, {0, 0, 0, 0},
                              {false, false, true, false}, 5.0);
  GaeResult g = compute_gae(b, 1.0, 1.0, false);
  CHECK(g.advantages[0] == Approx(6.0).margin(1e-12));  // 1+2+3, cut by done
  CHECK(g.advantages[1] == Approx(5.0).margin(1e-12));
  CHECK(g.advantages[2] == Approx(3.0).margin(1e-12));
  CHECK(g.advantages[3] == Approx(15.0).margin(1e-12));  // bootstraps past the window
}

TEST_CASE("gae recursion matches the explicit-sum oracle") {
  Rng rng(31);
  RolloutBatch b;
  b.n_envs = 3;
  b.horizon = 17;
  b.transitions.resize(51);
  for (Transition& tr : b.transitions) {
    tr.reward = rng.uniform(-5, 5);
    tr.value = rng.uniform(-2, 2);
    tr.done = rng.uniform() < 0.15;
  }
  b.bootstrap_values = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};

  GaeResult raw = compute_gae(b, 0.99, 0.95, false);
  std::vector<double> want = gae_oracle(b, 0.99, 0.95);
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(raw.advantages[i] == Approx(want[i]).margin(1e-12));

  GaeResult norm = compute_gae(b, 0.99, 0.95, true);
  double mean = 0.0;
  for (double a : norm.advantages) mean += a;
  mean /= static_cast<double>(norm.advantages.size());
  double var = 0.0;
  for (double a : norm.advantages) var += (a - mean) * (a - mean);
  double stddev = std::sqrt(var / static_cast<double>(norm.advantages.size()));
  CHECK(std::abs(mean) <= 1e-9);
  CHECK(stddev == Approx(1.0).margin(1e-6));
  // Returns stay raw so the value target is unaffected by normalization.
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(norm.returns[i] == Approx(want[i] + b.transitions[i].value).margin(1e-12));
}

TEST_CASE("adam takes the hand-computed first step") {
  ParamStore store;
  Param& p = store.create("p", {2});
  p.value.data = {1.0, -1.0};
  p.grad.data = {0.5, -2.0};
  AdamState st;
  adam_step(store, st, 0.1);
  // First step reduces to lr * g / (|g| + eps): a signed step of ~lr.
  CHECK(p.value.data[0] == Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).margin(1e-12));
  CHECK(p.value.data[1] == Approx(-1.0 + 0.1 * 2.0 / (2.0 + 1e-8)).margin(1e-12));
  CHECK(st.t == 1);
}

TEST_CASE("zero advantages with zero entropy leave the policy untouched") {
  Rng rng(5);
  ParamStore store;
  PolicyValueNet net(Variant::kDrlLaser, store, rng);

  RolloutBatch b;
  b.n_envs = 1;
  b.horizon = 4;
  b.transitions.resize(4);
  for (Transition& tr : b.transitions) {
    tr.observation = fake_bundle(Variant::kDrlLaser, rng);
    tr.action = static_cast<int>(rng.uniform_int(kNumActions));
    ObsBatch ob = batch_observations(Variant::kDrlLaser, {&tr.observation});
    Graph g;
    tr.log_prob =
        static_cast<double>(g.value(net.policy_logprobs(g, ob)).data[tr.action]);
    tr.value = 0.0;
  }
  GaeResult gae;
  gae.advantages = {0, 0, 0, 0};
  gae.returns = {1.0, -1.0, 0.5, 2.0};

  PPOConfig cfg;
  cfg.epochs = 1;
  cfg.minibatch = 4;
  cfg.entropy_coef = 0.0;

  Tensor policy_before = store.require("policy.head.w").value;
  Tensor value_before = store.require("value.head.w").value;
  AdamState adam;
  Rng shuffle(3);
  LossReport rep = ppo_update(net, store, adam, b, gae, cfg, 1e-3, shuffle);

  CHECK(store.require("policy.head.w").value.data == policy_before.data);
  CHECK(store.require("value.head.w").value.data != value_before.data);
  CHECK(rep.policy_loss == Approx(0.0).margin(1e-12));
  CHECK(rep.value_loss > 0.0);
  CHECK(rep.clip_fraction == 0.0);
  CHECK(rep.approx_kl == Approx(0.0).margin(1e-12));
}

TEST_CASE("a clipped ratio stops the policy gradient entirely") {
  Rng rng(6);
  ParamStore store;
  PolicyValueNet net(Variant::kDrlLaser, store, rng);

  RolloutBatch b;
  b.n_envs = 1;
  b.horizon = 1;
  b.transitions.resize(1);
  Transition& tr = b.transitions[0];
  tr.observation = fake_bundle(Variant::kDrlLaser, rng);
  tr.action = 3;
  ObsBatch ob = batch_observations(Variant::kDrlLaser, {&tr.observation});
  Graph g;
  double lp_now = static_cast<double>(g.value(net.policy_logprobs(g, ob)).data[3]);
  tr.log_prob = lp_now - std::log(1.5);  // ratio = 1.5, outside 1 +/- 0.2

  GaeResult gae;
  gae.advantages = {1.0};
  gae.returns = {0.0};
  PPOConfig cfg;
  cfg.epochs = 1;
  cfg.minibatch = 1;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;

  Tensor before = store.require("policy.head.w").value;
  AdamState adam;
  Rng shuffle(3);
  LossReport rep = ppo_update(net, store, adam, b, gae, cfg, 1e-3, shuffle);
  CHECK(store.require("policy.head.w").value.data == before.data);
  CHECK(rep.clip_fraction == 1.0);
}

TEST_CASE("single-sample policy gradient matches the symbolic form") {
  Rng rng(8);
  ParamStore store;
  PolicyValueNet net(Variant::kDrlLaser, store, rng);

  RolloutBatch b;
  b.n_envs = 1;
  b.horizon = 1;
  b.transitions.resize(1);
  Transition& tr = b.transitions[0];
  tr.observation = fake_bundle(Variant::kDrlLaser, rng);
  tr.action = 11;
  ObsBatch ob = batch_observations(Variant::kDrlLaser, {&tr.observation});
  Graph g;
  const Tensor& lp0 = g.value(net.policy_logprobs(g, ob));
  tr.log_prob = static_cast<double>(lp0.data[11]) - std::log(1.1);  // ratio 1.1, unclipped
  double advantage = 2.0;

  GaeResult gae;
  gae.advantages = {advantage};
  gae.returns = {0.0};
  PPOConfig cfg;
  cfg.epochs = 1;
  cfg.minibatch = 1;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;

  AdamState adam;
  Rng shuffle(3);
  ppo_update(net, store, adam, b, gae, cfg, 0.0, shuffle);  // lr 0: inspect grads only

  // loss = -ratio(theta)*A with ratio = exp(lp_new - lp_old). Differentiating
  // through log-softmax into the head bias gives
  //   d loss / d b_j = -ratio*A * (1[j=a] - p_j).
  double ratio = 1.1;
  const Tensor& grad = store.require("policy.head.b").grad;
  for (int j = 0; j < kNumActions; ++j) {
    double pj = std::exp(static_cast<double>(lp0.data[j]));
    double want = -ratio * advantage * ((j == 11 ? 1.0 : 0.0) - pj);
    CHECK(static_cast<double>(grad.data[j]) == Approx(want).margin(1e-6));
  }
}

TEST_CASE("non-finite inputs abort the update with diagnostics") {
  Rng rng(9);
  ParamStore store;
  PolicyValueNet net(Variant::kDrlLaser, store, rng);
  RolloutBatch b;
  b.n_envs = 1;
  b.horizon = 1;
  b.transitions.resize(1);
  b.transitions[0].observation = fake_bundle(Variant::kDrlLaser, rng);
  b.transitions[0].action = 0;
  b.transitions[0].log_prob = std::numeric_limits<double>::quiet_NaN();
  GaeResult gae;
  gae.advantages = {1.0};
  gae.returns = {0.0};
  PPOConfig cfg;
  cfg.epochs = 1;
  cfg.minibatch = 1;
  AdamState adam;
  Rng shuffle(3);
  CHECK_THROWS_AS(ppo_update(net, store, adam, b, gae, cfg, 1e-3, shuffle), NumericalFault);
}

TEST_CASE("training runs, checkpoints, and resumes bitwise") {
  std::string dir_a = (std::filesystem::temp_directory_path() / "locnav_train_a").string();
  std::string dir_b = (std::filesystem::temp_directory_path() / "locnav_train_b").string();
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);

  TrainOptions opt;
  opt.scenario = room();
  opt.env = net_params(Variant::kDrlLaser);
  opt.ppo.n_envs = 2;
  opt.ppo.horizon = 12;
  opt.ppo.minibatch = 24;
  opt.ppo.epochs = 2;
  opt.ppo.total_steps = 48;  // exactly 2 iterations
  opt.seed = 2024;
  opt.out_dir = dir_a;
  opt.checkpoint_every = 1;

  TrainResult full = train(opt);
  REQUIRE(full.iterations_run == 2);
  REQUIRE(full.curve.size() == 2);
  CHECK(full.curve[0].steps == 24);
  CHECK(full.curve[1].steps == 48);
  CHECK(std::filesystem::exists(dir_a + "/curve.csv"));
  REQUIRE(std::filesystem::exists(dir_a + "/ckpt_1.bin"));
  REQUIRE(std::filesystem::exists(dir_a + "/ckpt_2.bin"));

  // Stop after one iteration, then resume: the second checkpoint must match
  // the uninterrupted run exactly.
  TrainOptions half = opt;
  half.out_dir = dir_b;
  half.ppo.total_steps = 24;
  train(half);
  TrainOptions rest = opt;
  rest.out_dir = dir_b;
  rest.resume = dir_b + "/ckpt_1.bin";
  train(rest);

  Checkpoint a = load_checkpoint(dir_a + "/ckpt_2.bin");
  Checkpoint b = load_checkpoint(dir_b + "/ckpt_2.bin");
  REQUIRE(a.tensors.size() == b.tensors.size());
  for (size_t i = 0; i < a.tensors.size(); ++i) {
    CHECK(a.tensors[i].first == b.tensors[i].first);
    CHECK(a.tensors[i].second.data == b.tensors[i].second.data);  // bitwise
  }
  CHECK(a.adam_t == b.adam_t);

  // Same seed, fresh directory: identical curve.
  TrainOptions again = opt;
  again.out_dir = "";
  TrainResult rerun = train(again);
  REQUIRE(rerun.curve.size() == full.curve.size());
  for (size_t i = 0; i < rerun.curve.size(); ++i) {
    CHECK(rerun.curve[i].mean_episode_reward == full.curve[i].mean_episode_reward);
    CHECK(rerun.curve[i].losses.policy_loss == full.curve[i].losses.policy_loss);
  }

  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

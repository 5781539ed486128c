#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "catch_amalgamated.hpp"
#include "locnav/eval.hpp"

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

EnvParams quick_params(Variant v = Variant::kLndrl) {
  EnvParams p;
  p.variant = v;
  p.laser.beams = 180;
  p.beam.max_range = p.laser.max_range;
  p.amcl.min_particles = 200;
  p.amcl.max_particles = 400;
  p.amcl.stride = 6;
  return p;
}

int nearest_action(double v, double w) {
  int best = 0;
  double best_d = 1e9;
  for (int i = 0; i < kNumActions; ++i) {
    Action a = action_at(i);
    double d = std::abs(a.v - v) + std::abs(a.w - w);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// Bang-bang homing controller on the belief mean: rotate until roughly
// facing the goal, then drive at full speed with a proportional turn.
PolicyFn goto_policy() {
  return [](const Env& env) {
    Pose2D est = env.belief().mean;
    const Pose2D& goal = env.goal();
    double bearing = std::atan2(goal.y - est.y, goal.x - est.x);
    double err = wrap_angle(bearing - est.yaw);
    double w = std::clamp(err * 1.5, -0.9, 0.9);
    double v = std::abs(err) < 0.5 ? 0.6 : 0.0;
    return nearest_action(v, w);
  };
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("homing episode arrives and records one row per step") {
  EpisodeRecord rec = run_episode(room(), quick_params(), goto_policy(), 301);
  REQUIRE(!rec.rows.empty());
  CHECK(rec.outcome == StepOutcome::kArrived);
  CHECK(rec.arrived_true);
  CHECK(rec.duration_s == Approx(rec.rows.size() * 0.1));

  double path = 0.0;
  Pose2D prev = rec.start;
  for (size_t i = 0; i < rec.rows.size(); ++i) {
    const StepRow& row = rec.rows[i];
    CHECK(row.t == Approx((i + 1) * 0.1));
    path += (row.gt.position() - prev.position()).norm();
    prev = row.gt;
    if (i + 1 < rec.rows.size()) CHECK(row.reward.terminal == StepOutcome::kRunning);
  }
  CHECK(rec.path_length_m == Approx(path).margin(1e-12));
  CHECK(rec.rows.back().reward.terminal == StepOutcome::kArrived);
  CHECK((rec.rows.back().est.position() - rec.goal.position()).norm() <
        quick_params().reward.eps_a + 1e-9);
}

TEST_CASE("same seed reproduces an episode exactly") {
  EpisodeRecord a = run_episode(room(), quick_params(), goto_policy(), 17);
  EpisodeRecord b = run_episode(room(), quick_params(), goto_policy(), 17);
  REQUIRE(a.rows.size() == b.rows.size());
  CHECK(a.outcome == b.outcome);
  CHECK(a.path_length_m == b.path_length_m);
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].gt.x == b.rows[i].gt.x);
    CHECK(a.rows[i].est.yaw == b.rows[i].est.yaw);
    CHECK(a.rows[i].action == b.rows[i].action);
    CHECK(a.rows[i].reward.total == b.rows[i].reward.total);
  }
}

TEST_CASE("dwa policy adapter steers the environment to the goal") {
  DwaParams dp;
  PolicyFn policy = make_dwa_policy(dp);
  EpisodeRecord rec = run_episode(room(), quick_params(), policy, 5150);
  CHECK(!rec.rows.empty());
  CHECK(rec.outcome != StepOutcome::kRunning);
}

TEST_CASE("outcome rates partition to one and metrics track hand-built records") {
  std::vector<EpisodeRecord> recs(4);

  auto fill = [](EpisodeRecord& r, StepOutcome outcome, bool arrived_true, double dur,
                 double path, double ep, double ea, double vx, double vy, double vyaw,
                 int steps) {
    r.outcome = outcome;
    r.arrived_true = arrived_true;
    r.duration_s = dur;
    r.path_length_m = path;
    r.rows.resize(static_cast<size_t>(steps));
    for (StepRow& row : r.rows) {
      row.gt = {1.0, 1.0, 0.0};
      row.est = {1.0 + ep, 1.0, ea};
      row.var_x = vx;
      row.var_y = vy;
      row.var_yaw = vyaw;
      row.reward.terminal = StepOutcome::kRunning;
    }
    r.rows.back().reward.terminal = outcome;
  };

  fill(recs[0], StepOutcome::kArrived, true, 5.0, 4.0, 0.1, 0.02, 0.04, 0.09, 0.01, 2);
  fill(recs[1], StepOutcome::kCollided, false, 2.0, 1.0, 0.3, 0.06, 0.01, 0.01, 0.04, 1);
  fill(recs[2], StepOutcome::kLost, false, 3.0, 2.0, 2.0, 0.50, 0.16, 0.25, 0.09, 1);
  // Arrival declared only in belief: the truth was outside the goal radius.
  fill(recs[3], StepOutcome::kArrived, false, 9.0, 8.0, 0.7, 0.10, 0.04, 0.04, 0.16, 2);

  MetricsRow m = compute_metrics("test", "room", recs, 99);
  CHECK(m.ar + m.cr + m.lr + m.sr == Approx(1.0).margin(1e-9));
  CHECK(m.ar == Approx(0.25));
  CHECK(m.cr == Approx(0.25));
  CHECK(m.lr == Approx(0.25));
  CHECK(m.sr == Approx(0.25));

  // Time and distance cover true arrivals only.
  CHECK(m.time_s.mean == Approx(5.0));
  CHECK(m.time_s.std == Approx(0.0).margin(1e-12));
  CHECK(m.dist_m.mean == Approx(4.0));
  CHECK(m.time_s.n == 1);

  // Step-level errors pool every row of every episode.
  CHECK(m.err_pos.n == 6);
  double ep_mean = (0.1 * 2 + 0.3 + 2.0 + 0.7 * 2) / 6.0;
  CHECK(m.err_pos.mean == Approx(ep_mean).margin(1e-12));
  double ea_mean = (0.02 * 2 + 0.06 + 0.5 + 0.1 * 2) / 6.0;
  CHECK(m.err_yaw.mean == Approx(ea_mean).margin(1e-12));
  double sv0 = 0.2 + 0.3 + 0.1, sv1 = 0.1 + 0.1 + 0.2, sv2 = 0.4 + 0.5 + 0.3,
         sv3 = 0.2 + 0.2 + 0.4;
  double sv_mean = (sv0 * 2 + sv1 + sv2 + sv3 * 2) / 6.0;
  CHECK(m.sigma_sum.mean == Approx(sv_mean).margin(1e-12));
}

TEST_CASE("benchmark rates from live episodes partition to one") {
  std::vector<EpisodeRecord> recs = run_benchmark(room(), quick_params(), goto_policy(), 6, 42);
  MetricsRow m = compute_metrics("goto", "room", recs, 42);
  CHECK(m.episodes == 6);
  CHECK(m.ar + m.cr + m.lr + m.sr == Approx(1.0).margin(1e-9));
  CHECK(m.ar > 0.5);
}

TEST_CASE("worker count does not change benchmark results") {
  std::vector<EpisodeRecord> one = run_benchmark(room(), quick_params(), goto_policy(), 5, 7, 1);
  std::vector<EpisodeRecord> three = run_benchmark(room(), quick_params(), goto_policy(), 5, 7, 3);
  REQUIRE(one.size() == three.size());
  for (size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].outcome == three[i].outcome);
    CHECK(one[i].path_length_m == three[i].path_length_m);
    CHECK(one[i].rows.size() == three[i].rows.size());
  }
}

TEST_CASE("metrics and episode csv files are byte identical across runs") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "locnav_eval_csv";
  fs::create_directories(dir);

  auto render_once = [&](const fs::path& mpath, const fs::path& epath) {
    std::vector<EpisodeRecord> recs = run_benchmark(room(), quick_params(), goto_policy(), 4, 9);
    MetricsRow m = compute_metrics("goto", "room", recs, 9);
    write_metrics_csv(mpath.string(), {m});
    write_episode_csv(epath.string(), recs[0]);
  };

  render_once(dir / "m1.csv", dir / "e1.csv");
  render_once(dir / "m2.csv", dir / "e2.csv");

  std::string m1 = slurp(dir / "m1.csv"), m2 = slurp(dir / "m2.csv");
  std::string e1 = slurp(dir / "e1.csv"), e2 = slurp(dir / "e2.csv");
  REQUIRE(!m1.empty());
  CHECK(m1 == m2);
  CHECK(e1 == e2);

  CHECK(m1.rfind(metrics_csv_header(), 0) == 0);
  CHECK(e1.rfind(episode_csv_header(), 0) == 0);
  size_t lines = static_cast<size_t>(std::count(e1.begin(), e1.end(), '\n'));
  std::vector<EpisodeRecord> recs = run_benchmark(room(), quick_params(), goto_policy(), 4, 9);
  CHECK(lines == recs[0].rows.size() + 1);

  fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip restores the greedy policy") {
  namespace fs = std::filesystem;
  EnvParams p;
  p.variant = Variant::kDrlLaser;
  p.amcl.min_particles = 100;
  p.amcl.max_particles = 200;
  p.amcl.stride = 24;

  ParamStore store;
  Rng rng(808);
  PolicyValueNet net(Variant::kDrlLaser, store, rng);
  fs::path path = fs::temp_directory_path() / "locnav_eval_policy.bin";
  save_checkpoint(path.string(),
                  checkpoint_from_params("drl_laser", 808, 3, store));

  LoadedPolicy lp = load_policy(path.string());
  CHECK(lp.variant == Variant::kDrlLaser);
  CHECK(lp.iteration == 3);
  PolicyFn policy = make_net_policy(lp);

  Env env(room(), p, 606);
  int got = policy(env);

  ObsBatch b = batch_observations(Variant::kDrlLaser,
                                  std::vector<ObservationBundle>{env.observation()});
  Graph g;
  const Tensor& logp = g.value(net.policy_logprobs(g, b));
  int want = 0;
  for (int j = 1; j < kNumActions; ++j)
    if (logp.data[static_cast<size_t>(j)] > logp.data[static_cast<size_t>(want)]) want = j;
  CHECK(got == want);
  fs::remove(path);
}

TEST_CASE("policy variant mismatch is rejected at call time") {
  ParamStore store;
  Rng rng(11);
  LoadedPolicy lp;
  lp.store = std::make_shared<ParamStore>();
  lp.net = std::make_shared<PolicyValueNet>(Variant::kLndrl, *lp.store, rng);
  lp.variant = Variant::kLndrl;
  PolicyFn policy = make_net_policy(lp);

  Env env(room(), quick_params(Variant::kDrlLaser), 2);
  CHECK_THROWS_AS(policy(env), ContractError);
}

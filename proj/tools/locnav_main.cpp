#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "locnav/locnav.hpp"

namespace fs = std::filesystem;
using namespace locnav;

namespace {

constexpr const char* kUsage = R"(usage: locnav <command> [options]

commands:
  train                train a policy with PPO
  eval                 benchmark a policy over seeded episodes
  viz trajectory       render one episode as an svg top view
  viz activations      render first-layer scan activations as a ppm grid
  scenario validate    parse and check a scenario file

common options:
  --seed N             rng seed, required by every command
  --config PATH        toml settings file; flags override it
  --workers N          parallel environments (default: hardware threads)

train:  --scenario PATH --out DIR [--variant NAME] [--steps N] [--resume CKPT]
        [--early-stop-ar X] [--checkpoint-every N]
eval:   --policy dwa|CKPT --scenario PATH [--scenario PATH ...] --out DIR
        [--episodes N] [--per-episode-logs]
viz trajectory:  --policy dwa|CKPT --scenario PATH --out FILE.svg
viz activations: --checkpoint CKPT --scenario PATH --out FILE.ppm
scenario validate: --scenario PATH

environment: LOCNAV_LOG=debug|info|warn|error|off
)";

struct Args {
  std::map<std::string, std::vector<std::string>> options;
  std::vector<std::string> flags;

  bool has(const std::string& k) const {
    return options.count(k) > 0 ||
           std::find(flags.begin(), flags.end(), k) != flags.end();
  }
  std::optional<std::string> get(const std::string& k) const {
    auto it = options.find(k);
    if (it == options.end()) return std::nullopt;
    return it->second.back();
  }
  std::vector<std::string> get_all(const std::string& k) const {
    auto it = options.find(k);
    return it == options.end() ? std::vector<std::string>{} : it->second;
  }
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Options take one value; bare switches are listed in `switches`.
Args parse_args(int argc, char** argv, int first,
                const std::vector<std::string>& switches) {
  Args a;
  for (int i = first; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + arg + "'");
    std::string key = arg.substr(2);
    if (std::find(switches.begin(), switches.end(), key) != switches.end()) {
      a.flags.push_back(key);
      continue;
    }
    if (i + 1 >= argc) throw UsageError("option --" + key + " needs a value");
    a.options[key].push_back(argv[++i]);
  }
  return a;
}

uint64_t require_seed(const Args& a) {
  auto s = a.get("seed");
  if (!s) throw UsageError("--seed is required");
  try {
    return std::stoull(*s);
  } catch (const std::exception&) {
    throw UsageError("--seed wants a non-negative integer, got '" + *s + "'");
  }
}

int parse_int_option(const Args& a, const std::string& key, int def) {
  auto s = a.get(key);
  if (!s) return def;
  try {
    return std::stoi(*s);
  } catch (const std::exception&) {
    throw UsageError("--" + key + " wants an integer, got '" + *s + "'");
  }
}

double parse_double_option(const Args& a, const std::string& key, double def) {
  auto s = a.get(key);
  if (!s) return def;
  try {
    return std::stod(*s);
  } catch (const std::exception&) {
    throw UsageError("--" + key + " wants a number, got '" + *s + "'");
  }
}

int default_workers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

Config load_config_or_empty(const Args& a) {
  auto path = a.get("config");
  if (!path) {
    Config c;
    c.source = "<defaults>";
    return c;
  }
  if (!fs::exists(*path)) throw UsageError("config file '" + *path + "' does not exist");
  return load_config_file(*path);
}

ScenarioSpec load_scenario_checked(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("scenario file '" + path + "' does not exist");
  return load_scenario(path);
}

std::string fmt_toml(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  std::string s = ss.str();
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

// Everything a rerun needs: feeding this file back through --config with the
// same seed and scenario reproduces the run bit for bit.
void write_resolved_config(const std::string& path, const std::string& scenario_path,
                           const EnvParams& env, const PPOConfig& ppo, uint64_t seed,
                           const std::string& out_dir) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config snapshot '" + path + "'");
  out << "# resolved settings snapshot\n";
  out << "# scenario = " << scenario_path << ", seed = " << seed << ", out = " << out_dir
      << "\n\n";
  out << "[run]\n";
  out << "variant = \"" << variant_name(env.variant) << "\"\n";
  out << "dt = " << fmt_toml(env.dt) << "\n";
  out << "grid_resolution = " << fmt_toml(env.grid_resolution) << "\n\n";
  out << "[sensors]\n";
  out << "beams = " << env.laser.beams << "\n";
  out << "fov = " << fmt_toml(env.laser.fov) << "\n";
  out << "max_range = " << fmt_toml(env.laser.max_range) << "\n";
  out << "z_hit = " << fmt_toml(env.beam.z_hit) << "\n";
  out << "z_max = " << fmt_toml(env.beam.z_max) << "\n";
  out << "z_rand = " << fmt_toml(env.beam.z_rand) << "\n";
  out << "sigma_hit = " << fmt_toml(env.beam.sigma_hit) << "\n";
  out << "odom_gain_std = " << fmt_toml(env.odom.gain_std) << "\n\n";
  out << "[amcl]\n";
  out << "min_particles = " << env.amcl.min_particles << "\n";
  out << "max_particles = " << env.amcl.max_particles << "\n";
  out << "kld_epsilon = " << fmt_toml(env.amcl.kld_epsilon) << "\n";
  out << "kld_delta = " << fmt_toml(env.amcl.kld_delta) << "\n";
  out << "kld_bin_xy = " << fmt_toml(env.amcl.kld_bin_xy) << "\n";
  out << "kld_bin_yaw = " << fmt_toml(env.amcl.kld_bin_yaw) << "\n";
  out << "jitter_x = " << fmt_toml(env.amcl.jitter_x) << "\n";
  out << "jitter_y = " << fmt_toml(env.amcl.jitter_y) << "\n";
  out << "jitter_yaw = " << fmt_toml(env.amcl.jitter_yaw) << "\n";
  out << "motion_gain_std = " << fmt_toml(env.amcl.motion.gain_std) << "\n";
  out << "stride = " << env.amcl.stride << "\n";
  out << "use_range_cache = " << (env.amcl.use_range_cache ? "true" : "false") << "\n";
  out << "cache_cell = " << fmt_toml(env.amcl.cache_cell) << "\n";
  out << "cache_angle_bins = " << env.amcl.cache_angle_bins << "\n";
  out << "init_spread_x = " << fmt_toml(env.amcl.init_spread_x) << "\n";
  out << "init_spread_y = " << fmt_toml(env.amcl.init_spread_y) << "\n";
  out << "init_spread_yaw = " << fmt_toml(env.amcl.init_spread_yaw) << "\n\n";
  out << "[reward]\n";
  out << "k_a = " << fmt_toml(env.reward.k_a) << "\n";
  out << "k_p = " << fmt_toml(env.reward.k_p) << "\n";
  out << "r_arr = " << fmt_toml(env.reward.r_arr) << "\n";
  out << "r_col = " << fmt_toml(env.reward.r_col) << "\n";
  out << "r_lost = " << fmt_toml(env.reward.r_lost) << "\n";
  out << "r_step = " << fmt_toml(env.reward.r_step) << "\n";
  out << "eps_a = " << fmt_toml(env.reward.eps_a) << "\n";
  out << "eps_l = " << fmt_toml(env.reward.eps_l) << "\n";
  out << "eps_yaw = " << fmt_toml(env.reward.eps_yaw) << "\n";
  out << "pose_yaw_weight = " << fmt_toml(env.reward.pose_yaw_weight) << "\n";
  out << "max_episode_len = " << env.reward.max_episode_len << "\n\n";
  out << "[ppo]\n";
  out << "gamma = " << fmt_toml(ppo.gamma) << "\n";
  out << "gae_lambda = " << fmt_toml(ppo.gae_lambda) << "\n";
  out << "clip_epsilon = " << fmt_toml(ppo.clip_epsilon) << "\n";
  out << "epochs = " << ppo.epochs << "\n";
  out << "minibatch = " << ppo.minibatch << "\n";
  out << "learning_rate = " << fmt_toml(ppo.learning_rate) << "\n";
  out << "lr_decay = " << (ppo.lr_decay ? "true" : "false") << "\n";
  out << "entropy_coef = " << fmt_toml(ppo.entropy_coef) << "\n";
  out << "value_coef = " << fmt_toml(ppo.value_coef) << "\n";
  out << "horizon = " << ppo.horizon << "\n";
  out << "n_envs = " << ppo.n_envs << "\n";
  out << "total_steps = " << ppo.total_steps << "\n";
}

int cmd_train(int argc, char** argv) {
  Args args = parse_args(argc, argv, 2, {});
  uint64_t seed = require_seed(args);
  auto scenario_path = args.get("scenario");
  if (!scenario_path) throw UsageError("train: --scenario is required");
  auto out_dir = args.get("out");
  if (!out_dir) throw UsageError("train: --out is required");

  Config cfg = load_config_or_empty(args);
  TrainOptions opt;
  opt.scenario = load_scenario_checked(*scenario_path);
  opt.env = EnvParams::from_config(cfg);
  opt.ppo = PPOConfig::from_config(cfg.section_or_empty("ppo"));
  if (auto v = args.get("variant")) opt.env.variant = parse_variant(*v);
  if (args.has("steps")) {
    opt.ppo.total_steps = parse_int_option(args, "steps", 0);
    opt.ppo.validate();
  }
  opt.seed = seed;
  opt.out_dir = *out_dir;
  if (auto r = args.get("resume")) {
    if (!fs::exists(*r)) throw UsageError("checkpoint '" + *r + "' does not exist");
    opt.resume = *r;
  }
  opt.workers = parse_int_option(args, "workers", default_workers());
  opt.checkpoint_every = parse_int_option(args, "checkpoint-every", opt.checkpoint_every);
  opt.early_stop_ar = parse_double_option(args, "early-stop-ar", opt.early_stop_ar);
  opt.env.validate();

  fs::create_directories(opt.out_dir);
  write_resolved_config((fs::path(opt.out_dir) / "resolved_config.toml").string(),
                        *scenario_path, opt.env, opt.ppo, seed, opt.out_dir);

  TrainResult res = train(opt);
  std::cout << "trained " << res.iterations_run << " iterations, "
            << res.episode_rewards.size() << " episodes, checkpoint " << res.checkpoint_path
            << "\n";
  if (!res.curve.empty()) {
    const CurveRow& last = res.curve.back();
    std::cout << "final arrival rate " << last.arrival_rate << ", mean episode reward "
              << last.mean_episode_reward << "\n";
  }
  return 0;
}

PolicyFn resolve_policy(const std::string& spec, const Config& cfg, std::string& name,
                        std::optional<Variant>& forced_variant) {
  if (spec == "dwa") {
    name = "dwa";
    return make_dwa_policy(DwaParams::from_config(cfg.section_or_empty("dwa")));
  }
  if (!fs::exists(spec)) throw UsageError("policy '" + spec + "' is neither 'dwa' nor a checkpoint file");
  LoadedPolicy lp = load_policy(spec);
  name = variant_name(lp.variant);
  forced_variant = lp.variant;
  return make_net_policy(lp);
}

int cmd_eval(int argc, char** argv) {
  Args args = parse_args(argc, argv, 2, {"per-episode-logs"});
  uint64_t seed = require_seed(args);
  auto policy_spec = args.get("policy");
  if (!policy_spec) throw UsageError("eval: --policy is required (dwa or a checkpoint path)");
  std::vector<std::string> scenario_paths = args.get_all("scenario");
  if (scenario_paths.empty()) throw UsageError("eval: --scenario is required");
  auto out_dir = args.get("out");
  if (!out_dir) throw UsageError("eval: --out is required");
  int episodes = parse_int_option(args, "episodes", 100);
  if (episodes < 1) throw UsageError("eval: --episodes must be >= 1");
  int workers = parse_int_option(args, "workers", default_workers());

  Config cfg = load_config_or_empty(args);
  std::string policy_name;
  std::optional<Variant> forced_variant;
  PolicyFn policy = resolve_policy(*policy_spec, cfg, policy_name, forced_variant);

  EnvParams env = EnvParams::from_config(cfg);
  if (forced_variant) env.variant = *forced_variant;
  env.validate();

  fs::create_directories(*out_dir);
  std::vector<MetricsRow> rows;
  std::vector<EpisodeRecord> pooled;
  for (const std::string& path : scenario_paths) {
    ScenarioSpec scenario = load_scenario_checked(path);
    std::vector<EpisodeRecord> recs = run_benchmark(scenario, env, policy, episodes, seed, workers);
    rows.push_back(compute_metrics(policy_name, scenario.world.name, recs, seed));
    if (args.has("per-episode-logs")) {
      for (size_t i = 0; i < recs.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "ep_%03zu.csv", i);
        write_episode_csv((fs::path(*out_dir) / (scenario.world.name + "_" + buf)).string(),
                          recs[i]);
      }
    }
    pooled.insert(pooled.end(), recs.begin(), recs.end());
  }
  if (scenario_paths.size() > 1)
    rows.push_back(compute_metrics(policy_name, "pooled", pooled, seed));

  std::string csv_path = (fs::path(*out_dir) / "metrics.csv").string();
  write_metrics_csv(csv_path, rows);

  std::cout << metrics_csv_header() << "\n";
  for (const MetricsRow& r : rows) std::cout << metrics_csv_row(r) << "\n";
  std::cout << "wrote " << csv_path << "\n";
  return 0;
}

int cmd_viz(int argc, char** argv) {
  if (argc < 3) throw UsageError("viz: expected 'trajectory' or 'activations'");
  std::string what = argv[2];
  Args args = parse_args(argc, argv, 3, {});
  uint64_t seed = require_seed(args);
  auto scenario_path = args.get("scenario");
  if (!scenario_path) throw UsageError("viz: --scenario is required");
  auto out = args.get("out");
  if (!out) throw UsageError("viz: --out is required");
  Config cfg = load_config_or_empty(args);
  ScenarioSpec scenario = load_scenario_checked(*scenario_path);

  if (what == "trajectory") {
    auto policy_spec = args.get("policy");
    if (!policy_spec) throw UsageError("viz trajectory: --policy is required");
    std::string policy_name;
    std::optional<Variant> forced_variant;
    PolicyFn policy = resolve_policy(*policy_spec, cfg, policy_name, forced_variant);
    EnvParams env = EnvParams::from_config(cfg);
    if (forced_variant) env.variant = *forced_variant;
    env.validate();
    EpisodeRecord rec = run_episode(scenario, env, policy, seed);
    render_trajectory(rec, scenario, *out);
    std::cout << "episode outcome " << outcome_name(rec.outcome) << ", " << rec.rows.size()
              << " steps, wrote " << *out << "\n";
    return 0;
  }
  if (what == "activations") {
    auto ckpt = args.get("checkpoint");
    if (!ckpt) throw UsageError("viz activations: --checkpoint is required");
    if (!fs::exists(*ckpt)) throw UsageError("checkpoint '" + *ckpt + "' does not exist");
    LoadedPolicy lp = load_policy(*ckpt);
    EnvParams env = EnvParams::from_config(cfg);
    env.variant = lp.variant;
    env.validate();
    Env probe(scenario, env, seed);
    ActivationGrid grid = render_activations(*lp.net, probe.observation(), *out);
    std::cout << grid.channels << " panels (" << grid.width() << "x" << grid.height()
              << " px), wrote " << *out << "\n";
    return 0;
  }
  throw UsageError("viz: unknown subcommand '" + what + "'");
}

int cmd_scenario(int argc, char** argv) {
  if (argc < 3 || std::string(argv[2]) != "validate")
    throw UsageError("scenario: expected 'validate'");
  Args args = parse_args(argc, argv, 3, {});
  require_seed(args);
  auto path = args.get("scenario");
  if (!path) throw UsageError("scenario validate: --scenario is required");
  ScenarioSpec spec = load_scenario_checked(*path);
  std::cout << "scenario '" << spec.world.name << "': bounds [" << spec.world.bounds.xmin
            << ", " << spec.world.bounds.ymin << ", " << spec.world.bounds.xmax << ", "
            << spec.world.bounds.ymax << "], " << spec.world.segments.size() << " wall segments, "
            << spec.pedestrian_specs.size() << " pedestrians\n";
  std::cout << "ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << kUsage;
    return 2;
  }
  std::string cmd = argv[1];
  try {
    if (cmd == "train") return cmd_train(argc, argv);
    if (cmd == "eval") return cmd_eval(argc, argv);
    if (cmd == "viz") return cmd_viz(argc, argv);
    if (cmd == "scenario") return cmd_scenario(argc, argv);
    if (cmd == "--help" || cmd == "-h" || cmd == "help") {
      std::cout << kUsage;
      return 0;
    }
    std::cerr << "locnav: unknown command '" << cmd << "'\n" << kUsage;
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "locnav " << cmd << ": " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "locnav " << cmd << ": " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "locnav " << cmd << ": " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "locnav " << cmd << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "locnav " << cmd << ": " << e.what() << "\n";
    return 1;
  }
}

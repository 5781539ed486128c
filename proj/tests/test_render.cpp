#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "catch_amalgamated.hpp"
#include "locnav/render.hpp"

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

PolicyFn goto_policy() {
  return [](const Env& env) {
    Pose2D est = env.belief().mean;
    const Pose2D& goal = env.goal();
    double err = wrap_angle(std::atan2(goal.y - est.y, goal.x - est.x) - est.yaw);
    return nearest_action(std::abs(err) < 0.5 ? 0.6 : 0.0, std::clamp(err * 1.5, -0.9, 0.9));
  };
}

size_t count_substr(const std::string& hay, const std::string& needle) {
  size_t n = 0;
  for (size_t at = hay.find(needle); at != std::string::npos; at = hay.find(needle, at + 1)) ++n;
  return n;
}

// Minimal XML shape checker: every element closes, attribute quotes pair up.
bool well_formed_markup(const std::string& s) {
  std::vector<std::string> stack;
  size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '<') {
      ++i;
      continue;
    }
    size_t end = s.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = s.substr(i + 1, end - i - 1);
    if (std::count(tag.begin(), tag.end(), '\'') % 2 != 0) return false;
    if (!tag.empty() && tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
    } else if (!tag.empty() && tag.back() != '/') {
      stack.push_back(tag.substr(0, tag.find_first_of(" \t\n")));
    }
    i = end + 1;
  }
  return stack.empty();
}

// Vertex count of the first polyline with the given class attribute.
size_t polyline_vertices(const std::string& svg, const std::string& cls) {
  size_t at = svg.find("class='" + cls + "'");
  REQUIRE(at != std::string::npos);
  size_t p0 = svg.find("points='", at);
  REQUIRE(p0 != std::string::npos);
  p0 += 8;
  size_t p1 = svg.find('\'', p0);
  std::string pts = svg.substr(p0, p1 - p0);
  return count_substr(pts, ",");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("trajectory view draws the map, one robot track, and the error chart") {
  EpisodeRecord rec = run_episode(room(), quick_params(), goto_policy(), 301);
  std::string svg = trajectory_svg(rec, room());

  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(count_substr(svg, "<polyline") == 1);
  CHECK(polyline_vertices(svg, "robot") == rec.rows.size());
  CHECK(count_substr(svg, "<line") == room().world.segments.size());
  CHECK(count_substr(svg, "class='goal'") == 1);
  CHECK(count_substr(svg, "class='start'") == 1);
  CHECK(count_substr(svg, "class='err-pos'") == 1);
  CHECK(count_substr(svg, "class='err-yaw'") == 1);
  CHECK(well_formed_markup(svg));
}

TEST_CASE("each pedestrian adds one track polyline") {
  EpisodeRecord rec;
  rec.start = {1.0, 1.0, 0.0};
  rec.goal = {6.0, 6.0, 0.0};
  rec.rows.resize(3);
  for (size_t i = 0; i < rec.rows.size(); ++i) {
    StepRow& r = rec.rows[i];
    double d = 0.2 * static_cast<double>(i);
    r.gt = {1.0 + d, 1.0, 0.0};
    r.est = r.gt;
    r.ped_positions = {{3.0, 3.0 + d}, {5.0 - d, 2.0}};
  }
  std::string svg = trajectory_svg(rec, room());
  CHECK(count_substr(svg, "<polyline") == 3);
  CHECK(count_substr(svg, "class='ped'") == 2);
  CHECK(polyline_vertices(svg, "ped") == 3);
  CHECK(well_formed_markup(svg));
}

TEST_CASE("identical episodes render byte-identical files") {
  namespace fs = std::filesystem;
  EpisodeRecord rec = run_episode(room(), quick_params(), goto_policy(), 17);
  std::string a = trajectory_svg(rec, room());
  std::string b = trajectory_svg(rec, room());
  CHECK(a == b);

  fs::path path = fs::temp_directory_path() / "locnav_render_traj.svg";
  render_trajectory(rec, room(), path.string());
  CHECK(slurp(path) == a);
  fs::remove(path);
}

TEST_CASE("empty episode is rejected by the renderer") {
  EpisodeRecord rec;
  CHECK_THROWS_AS(trajectory_svg(rec, room()), ContractError);
}

TEST_CASE("activation panels mirror an independent first-layer forward pass") {
  EnvParams p;
  p.variant = Variant::kDrlLaser;
  p.amcl.min_particles = 100;
  p.amcl.max_particles = 200;
  p.amcl.stride = 24;
  Env env(room(), p, 99);

  ParamStore store;
  Rng rng(515);
  PolicyValueNet net(Variant::kDrlLaser, store, rng);
  ActivationGrid grid = activation_grid(net, env.observation());

  CHECK(grid.channels == 32);
  CHECK(grid.length == 239);
  CHECK(grid.cols * grid.rows == 32);
  CHECK(grid.rgb.size() == static_cast<size_t>(3) * grid.width() * grid.height());

  const Tensor& k = store.require("policy.scan.conv1.k").value;
  const Tensor& b = store.require("policy.scan.conv1.b").value;
  REQUIRE(k.shape == std::vector<int>{32, 3, 5});
  const ObservationBundle& obs = env.observation();
  for (int c : {0, 7, 31}) {
    for (int x : {0, 100, 238}) {
      double acc = static_cast<double>(b.data[static_cast<size_t>(c)]);
      for (int f = 0; f < 3; ++f)
        for (int t = 0; t < 5; ++t)
          acc += static_cast<double>(k.data[(static_cast<size_t>(c) * 3 + f) * 5 + t]) *
                 obs.scans[static_cast<size_t>(f)].ranges[static_cast<size_t>(x * 3 + t)] / 12.0;
      INFO("channel " << c << " position " << x);
      CHECK(grid.value(c, x) == Approx(acc).margin(1e-9));
    }
  }
}

TEST_CASE("panel pixels follow the color ramp of normalized activations") {
  EnvParams p;
  p.variant = Variant::kDrlLaser;
  p.amcl.min_particles = 100;
  p.amcl.max_particles = 200;
  p.amcl.stride = 24;
  Env env(room(), p, 42);

  ParamStore store;
  Rng rng(81);
  PolicyValueNet net(Variant::kDrlLaser, store, rng);
  ActivationGrid grid = activation_grid(net, env.observation());

  for (int c : {2, 13, 30}) {
    double lo = grid.value(c, 0), hi = lo;
    for (int x = 1; x < grid.length; ++x) {
      lo = std::min(lo, grid.value(c, x));
      hi = std::max(hi, grid.value(c, x));
    }
    for (int x : {5, 77, 200}) {
      double t = hi > lo ? (grid.value(c, x) - lo) / (hi - lo) : 0.5;
      std::array<uint8_t, 3> want = activation_color(t);
      int px = 1 + (c % grid.cols) * (grid.length + 1) + x;
      int py = 1 + (c / grid.cols) * (grid.panel_h + 1) + grid.panel_h / 2;
      size_t at = 3 * (static_cast<size_t>(py) * grid.width() + px);
      CHECK(grid.rgb[at] == want[0]);
      CHECK(grid.rgb[at + 1] == want[1]);
      CHECK(grid.rgb[at + 2] == want[2]);
    }
  }
}

TEST_CASE("zeroed first-layer weights yield uniform midpoint panels") {
  EnvParams p;
  p.variant = Variant::kDrlLaser;
  p.amcl.min_particles = 100;
  p.amcl.max_particles = 200;
  p.amcl.stride = 24;
  Env env(room(), p, 7);

  ParamStore store;
  Rng rng(4);
  PolicyValueNet net(Variant::kDrlLaser, store, rng);
  for (const char* name : {"policy.scan.conv1.k", "policy.scan.conv1.b"}) {
    Tensor& t = store.require(name).value;
    std::fill(t.data.begin(), t.data.end(), Real(0));
  }
  ActivationGrid grid = activation_grid(net, env.observation());
  std::array<uint8_t, 3> mid = activation_color(0.5);
  for (int c : {0, 15, 31}) {
    CHECK(grid.value(c, 50) == 0.0);
    int px = 1 + (c % grid.cols) * (grid.length + 1) + 50;
    int py = 1 + (c / grid.cols) * (grid.panel_h + 1);
    size_t at = 3 * (static_cast<size_t>(py) * grid.width() + px);
    CHECK(grid.rgb[at] == mid[0]);
    CHECK(grid.rgb[at + 1] == mid[1]);
    CHECK(grid.rgb[at + 2] == mid[2]);
  }
}

TEST_CASE("ppm output carries the right header and byte count") {
  namespace fs = std::filesystem;
  EnvParams p;
  p.variant = Variant::kDrlLaser;
  p.amcl.min_particles = 100;
  p.amcl.max_particles = 200;
  p.amcl.stride = 24;
  Env env(room(), p, 3);

  ParamStore store;
  Rng rng(2);
  PolicyValueNet net(Variant::kDrlLaser, store, rng);
  fs::path path = fs::temp_directory_path() / "locnav_render_act.ppm";
  ActivationGrid grid = render_activations(net, env.observation(), path.string());

  std::string bytes = slurp(path);
  std::string header =
      "P6\n" + std::to_string(grid.width()) + " " + std::to_string(grid.height()) + "\n255\n";
  REQUIRE(bytes.size() > header.size());
  CHECK(bytes.rfind(header, 0) == 0);
  CHECK(bytes.size() == header.size() + grid.rgb.size());

  fs::path again = fs::temp_directory_path() / "locnav_render_act2.ppm";
  render_activations(net, env.observation(), again.string());
  CHECK(slurp(again) == bytes);
  fs::remove(path);
  fs::remove(again);
}

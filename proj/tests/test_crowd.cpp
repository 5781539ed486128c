#include "catch_amalgamated.hpp"
#include "locnav/crowd.hpp"

using namespace locnav;
using Catch::Approx;

namespace {

WorldModel open_world() { return {"open", {-50, -50, 50, 50}, {}}; }

PedestrianState make_agent(Vec2 pos, Vec2 goal, Vec2 vel = {0, 0}) {
  PedestrianState a;
  a.position = pos;
  a.velocity = vel;
  a.goal = goal;
  return a;
}

}  // namespace

TEST_CASE("preferred velocity points at the goal and slows on approach") {
  Vec2 far = preferred_velocity({0, 0}, {10, 0}, 1.0);
  CHECK(far.x == Approx(1.0));
  CHECK(far.y == Approx(0.0).margin(1e-15));

  Vec2 near = preferred_velocity({0, 0}, {0.4, 0}, 1.0);
  CHECK(near.norm() == Approx(0.4));

  Vec2 at = preferred_velocity({2, 3}, {2, 3}, 1.0);
  CHECK(at.norm() == 0.0);
}

TEST_CASE("param resolution layers overrides onto defaults") {
  ConfigTable defaults("cfg.toml", "orca");
  defaults.set("time_horizon", ConfigValue::number(4.0));
  ConfigTable overrides("cfg.toml", "pedestrian");
  overrides.set("max_speed", ConfigValue::number(0.8));

  OrcaParams p = OrcaParams::resolve(defaults, overrides);
  CHECK(p.time_horizon == Approx(4.0));
  CHECK(p.max_speed == Approx(0.8));
  CHECK(p.neighbor_dist == Approx(10.0));  // untouched default

  overrides.set("max_speed", ConfigValue::number(-1.0));
  CHECK_THROWS_AS(OrcaParams::resolve(defaults, overrides), ValidationError);

  ConfigTable empty("cfg.toml", "x");
  SfmParams s = SfmParams::resolve(empty, empty);
  CHECK(s.relaxation_time == Approx(0.5));
}

TEST_CASE("unconstrained agent adopts its preferred velocity") {
  PedestrianState a = make_agent({0, 0}, {5, 0});
  OrcaParams params;
  OrcaResult res = orca_agent_velocity(a, {a}, 0, std::nullopt, open_world(), params);
  CHECK(res.lines.empty());
  CHECK(res.lp_feasible);
  CHECK(res.velocity.x == Approx(1.0));
  CHECK(res.velocity.y == Approx(0.0).margin(1e-12));
}

TEST_CASE("solution satisfies every half-plane when feasible and obeys the speed cap") {
  OrcaParams params;
  Rng rng(41);
  WorldModel world{"box", {-10, -10, 10, 10},
                   {Segment{{-10, -10}, {10, -10}}, Segment{{-10, 10}, {10, 10}}}};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PedestrianState> agents;
    for (int i = 0; i < 4; ++i) {
      PedestrianState a = make_agent({rng.uniform(-5, 5), rng.uniform(-5, 5)},
                                     {rng.uniform(-5, 5), rng.uniform(-5, 5)},
                                     {rng.uniform(-1, 1), rng.uniform(-1, 1)});
      agents.push_back(a);
    }
    RobotDisc robot{{rng.uniform(-5, 5), rng.uniform(-5, 5)}, {0.3, 0.0}, 0.17};
    for (size_t i = 0; i < agents.size(); ++i) {
      OrcaResult res = orca_agent_velocity(agents[i], agents, i, robot, world, params);
      double cap = std::min(params.max_speed, 1.5 * agents[i].preferred_speed);
      CHECK(res.velocity.norm() <= cap + 1e-9);
      if (res.lp_feasible) {
        for (const OrcaLine& ln : res.lines) CHECK(ln.satisfied_by(res.velocity, 1e-6));
      } else {
        // Wall constraints stay hard even in the fallback.
        for (size_t k = 0; k < res.num_obst_lines; ++k)
          CHECK(res.lines[k].satisfied_by(res.velocity, 1e-6));
      }
    }
  }
}

TEST_CASE("walls cap the approach speed") {
  WorldModel world{"wall", {-10, -10, 10, 10}, {Segment{{2, -5}, {2, 5}}}};
  PedestrianState a = make_agent({1, 0}, {8, 0}, {1.0, 0.0});
  OrcaParams params;
  OrcaResult res = orca_agent_velocity(a, {a}, 0, std::nullopt, world, params);
  REQUIRE(res.num_obst_lines == 1);
  // Gap is 1.0 - 0.3 = 0.7 m; over time_horizon_obst = 2 s the approach
  // component toward the wall may not exceed 0.35 m/s.
  CHECK(res.velocity.x <= 0.35 + 1e-9);
  CHECK(res.lines[0].satisfied_by(res.velocity, 1e-9));
}

TEST_CASE("head-on agents pass without overlapping") {
  OrcaParams params;
  WorldModel world = open_world();
  std::vector<PedestrianState> agents{make_agent({-4, 0.01}, {4, 0.01}),
                                      make_agent({4, -0.01}, {-4, -0.01})};
  double min_gap = 1e9;
  for (int step = 0; step < 300; ++step) {
    std::vector<Vec2> vel = orca_step(agents, std::nullopt, world, params, params.time_step);
    for (size_t i = 0; i < agents.size(); ++i) {
      agents[i].velocity = vel[i];
      agents[i].position += vel[i] * params.time_step;
    }
    min_gap = std::min(min_gap, (agents[0].position - agents[1].position).norm());
  }
  CHECK(min_gap >= agents[0].radius + agents[1].radius - 1e-6);
  // Both made it across.
  CHECK((agents[0].position - Vec2{4, 0.01}).norm() < 0.3);
  CHECK((agents[1].position - Vec2{-4, -0.01}).norm() < 0.3);
}

TEST_CASE("agents flow around a stationary robot") {
  OrcaParams params;
  WorldModel world = open_world();
  RobotDisc robot{{0, 0}, {0, 0}, 0.17};
  std::vector<PedestrianState> agents{make_agent({-4, 0.05}, {4, 0.05})};
  double min_gap = 1e9;
  for (int step = 0; step < 200; ++step) {
    std::vector<Vec2> vel = orca_step(agents, robot, world, params, params.time_step);
    agents[0].velocity = vel[0];
    agents[0].position += vel[0] * params.time_step;
    min_gap = std::min(min_gap, (agents[0].position - robot.position).norm());
  }
  CHECK(min_gap >= agents[0].radius + robot.radius - 1e-6);
  CHECK((agents[0].position - Vec2{4, 0.05}).norm() < 0.3);
}

TEST_CASE("sfm repulsion is the exact negative gradient of the potential") {
  SfmParams params;
  double radius_sum = 0.6;
  for (double d : {0.5, 0.7, 1.0, 1.8}) {
    double h = 1e-6;
    double dU = (sfm_repulsion_potential(d + h, radius_sum, params.repulsion_strength,
                                         params.repulsion_range) -
                 sfm_repulsion_potential(d - h, radius_sum, params.repulsion_strength,
                                         params.repulsion_range)) /
                (2 * h);
    double force_mag =
        params.repulsion_strength * std::exp((radius_sum - d) / params.repulsion_range);
    CHECK(-dU == Approx(force_mag).epsilon(1e-4));
  }
}

TEST_CASE("sfm pair forces are equal and opposite") {
  SfmParams params;
  WorldModel world = open_world();
  std::vector<PedestrianState> agents{make_agent({0, 0}, {0, 0}), make_agent({0.5, 0.2}, {0.5, 0.2})};
  Vec2 f0 = sfm_force(agents[0], agents, 0, std::nullopt, world, params);
  Vec2 f1 = sfm_force(agents[1], agents, 1, std::nullopt, world, params);
  CHECK(f0.x == Approx(-f1.x));
  CHECK(f0.y == Approx(-f1.y));
  CHECK(f0.norm() > 0.1);  // close enough to actually push
}

TEST_CASE("sfm driving force relaxes toward the preferred velocity") {
  SfmParams params;
  WorldModel world = open_world();
  std::vector<PedestrianState> agents{make_agent({0, 0}, {20, 0})};
  for (int step = 0; step < 100; ++step) {
    std::vector<Vec2> vel = sfm_step(agents, std::nullopt, world, params, 0.1);
    agents[0].velocity = vel[0];
    agents[0].position += vel[0] * 0.1;
    CHECK(vel[0].norm() <= 1.5 * agents[0].preferred_speed + 1e-9);
  }
  CHECK(agents[0].velocity.x == Approx(1.0).margin(0.01));
  CHECK(agents[0].velocity.y == Approx(0.0).margin(1e-9));
}

static const char* kCorridorText = R"(
[world]
name = "strip"
bounds = [0, 0, 20, 6]
segments = [
  [0, 0, 20, 0],
  [0, 6, 20, 6],
]

[robot]
start_region = [1, 2, 2, 4]
goal_region = [18, 2, 19, 4]

[[pedestrian]]
start_region = [2, 1, 5, 5]
goal_region = [15, 1, 18, 5]
driver = "orca"
count = 5

[[pedestrian]]
start_region = [15, 1, 18, 5]
goal_region = [2, 1, 5, 5]
driver = "sfm"
count = 5
)";

TEST_CASE("mixed crowd stays inside the world across a long rollout") {
  ScenarioSpec scenario = parse_scenario(parse_config_text(kCorridorText, "strip.toml"));
  Rng rng(505);
  std::vector<PedestrianState> agents = spawn_pedestrians(scenario, rng);
  REQUIRE(agents.size() == 10);
  for (const PedestrianState& a : agents) {
    CHECK(min_segment_distance(scenario.world, a.position) >= a.radius);
    CHECK(a.driver == (&a - agents.data() < 5 ? CrowdDriver::kOrca : CrowdDriver::kSfm));
  }

  for (int step = 0; step < 600; ++step) {
    update_pedestrians(agents, scenario, std::nullopt, 0.1, rng);
    for (const PedestrianState& a : agents) {
      REQUIRE(std::isfinite(a.position.x));
      REQUIRE(std::isfinite(a.position.y));
      CHECK(scenario.world.bounds.contains(a.position));
      CHECK(min_segment_distance(scenario.world, a.position) >= a.radius - 1e-9);
    }
  }

  // Goal recycling kept everyone moving: total displacement over the rollout
  // would be tiny if agents froze after the first crossing.
  double speed_sum = 0.0;
  for (const PedestrianState& a : agents) speed_sum += a.velocity.norm();
  CHECK(speed_sum > 0.0);
}

TEST_CASE("goal recycling flips the destination region") {
  std::string text(kCorridorText);
  ScenarioSpec scenario = parse_scenario(parse_config_text(text, "strip.toml"));
  Rng rng(7);
  std::vector<PedestrianState> agents = spawn_pedestrians(scenario, rng);
  // Teleport the first agent onto its goal so the next update recycles it.
  agents[0].position = agents[0].goal;
  CHECK(agents[0].heading_to_goal);
  update_pedestrians(agents, scenario, std::nullopt, 0.1, rng);
  CHECK_FALSE(agents[0].heading_to_goal);
  // New goal was drawn from the start region.
  CHECK(scenario.pedestrian_specs[0].start_region.contains(agents[0].goal));
}

TEST_CASE("update rejects mismatched agent lists") {
  ScenarioSpec scenario = parse_scenario(parse_config_text(kCorridorText, "strip.toml"));
  Rng rng(1);
  std::vector<PedestrianState> agents = spawn_pedestrians(scenario, rng);
  agents.pop_back();
  CHECK_THROWS_AS(update_pedestrians(agents, scenario, std::nullopt, 0.1, rng), ContractError);
}

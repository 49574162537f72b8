#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <deque>
#include <map>
#include <memory>
#include <vector>

#include "railab/distance.hpp"
#include "railab/env_core.hpp"
#include "railab/grid_builder.hpp"
#include "railab/rail_grid.hpp"

using namespace railab;

namespace {

// Independent oracle for shortest paths: plain forward BFS over directed
// (cell, heading) states, one query at a time. DistanceField must agree
// with this on every reachable state.
int oracle_distance(const RailGrid& g, CellPos start, Heading h0, CellPos target) {
  auto key = [&](CellPos c, Heading h) {
    return (static_cast<long>(c.row) * g.width() + c.col) * 4 + static_cast<int>(h);
  };
  std::map<long, int> dist;
  std::deque<std::pair<CellPos, Heading>> queue;
  dist[key(start, h0)] = 0;
  queue.push_back({start, h0});
  while (!queue.empty()) {
    auto [c, h] = queue.front();
    queue.pop_front();
    const int d = dist[key(c, h)];
    if (c == target) return d;
    for (Heading e : allowed_moves(g, c, h)) {
      const CellPos n = c.neighbor(e);
      if (dist.count(key(n, e))) continue;
      dist[key(n, e)] = d + 1;
      queue.push_back({n, e});
    }
  }
  return kUnreachable;
}

// 7x1 east-west corridor with dead ends at both tips.
std::shared_ptr<RailGrid> corridor7() {
  GridBuilder b(7, 1);
  b.lay_path({{0, 0}, {0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}, {0, 6}});
  return std::make_shared<RailGrid>(b.build());
}

// 5x4 T junction: east-west corridor on row 1, branch dropping south from
// (1,2) to a dead end at (3,2). Eastbound traffic can turn onto the branch;
// westbound and northbound traffic cannot.
std::shared_ptr<RailGrid> wye() {
  GridBuilder b(5, 4);
  b.lay_path({{1, 0}, {1, 1}, {1, 2}, {1, 3}, {1, 4}});
  b.lay_path({{1, 2}, {2, 2}, {3, 2}}, /*cap_ends=*/false);
  b.add_pair({1, 2}, Heading::West, Heading::South);
  b.add_pair({3, 2}, Heading::North, Heading::North);
  return std::make_shared<RailGrid>(b.build());
}

std::vector<ActionKind> acts(std::initializer_list<ActionKind> list) { return list; }

}  // namespace

TEST_CASE("transition map flags and move counts") {
  TransitionMap tm;
  CHECK_FALSE(tm.is_rail());
  tm.set(Heading::East, Heading::East);
  tm.set(Heading::East, Heading::South);
  CHECK(tm.is_rail());
  CHECK(tm.get(Heading::East, Heading::East));
  CHECK(tm.get(Heading::East, Heading::South));
  CHECK_FALSE(tm.get(Heading::West, Heading::West));
  CHECK(tm.move_count(Heading::East) == 2);
  CHECK(tm.move_count(Heading::West) == 0);
  Heading outs[kHeadingCount];
  CHECK(tm.moves(Heading::East, outs) == 2);
  CHECK(outs[0] == Heading::East);   // enum order: E before S
  CHECK(outs[1] == Heading::South);
  tm.set(Heading::East, Heading::South, false);
  CHECK(tm.move_count(Heading::East) == 1);
}

TEST_CASE("corridor builder produces a valid grid with expected transitions") {
  auto g = corridor7();
  CHECK(g->validate().empty());
  // Interior: straight through both ways.
  CHECK(g->at({0, 3}).get(Heading::East, Heading::East));
  CHECK(g->at({0, 3}).get(Heading::West, Heading::West));
  CHECK(g->at({0, 3}).move_count(Heading::East) == 1);
  // Tips: reversal is the only option.
  CHECK(g->at({0, 0}).get(Heading::West, Heading::East));
  CHECK(g->at({0, 0}).move_count(Heading::West) == 1);
  CHECK(g->at({0, 6}).get(Heading::East, Heading::West));
  CHECK_FALSE(is_switch_for(*g, {0, 3}, Heading::East));
}

TEST_CASE("validator rejects inconsistent grids") {
  // Transition pointing off-grid.
  RailGrid g1(3, 1);
  g1.at({0, 0}).set(Heading::West, Heading::West);
  CHECK(g1.validate().find("leaves the grid") != std::string::npos);

  // Transition into a non-rail cell.
  RailGrid g2(3, 1);
  g2.at({0, 0}).set(Heading::West, Heading::East);
  CHECK(g2.validate().find("non-rail") != std::string::npos);

  // Neighbor present but cannot be continued from.
  RailGrid g3(3, 1);
  g3.at({0, 0}).set(Heading::West, Heading::East);
  g3.at({0, 1}).set(Heading::West, Heading::West);  // only westbound through
  CHECK(g3.validate().find("no continuation") != std::string::npos);

  // Reverse move that is not the sole option.
  RailGrid g4(3, 1);
  g4.at({0, 0}).set(Heading::West, Heading::East);
  g4.at({0, 1}).set(Heading::East, Heading::East);
  g4.at({0, 1}).set(Heading::East, Heading::West);
  g4.at({0, 1}).set(Heading::West, Heading::West);
  g4.at({0, 2}).set(Heading::East, Heading::West);
  CHECK(g4.validate().find("reverse") != std::string::npos);

  CHECK(corridor7()->validate().empty());
  CHECK(wye()->validate().empty());
}

TEST_CASE("allowed_moves and switch queries throw off the rails") {
  auto g = corridor7();
  CHECK_THROWS_AS(allowed_moves(*g, {0, 7}, Heading::East), std::invalid_argument);
  CHECK_THROWS_AS(allowed_moves(*g, {-1, 0}, Heading::East), std::invalid_argument);
  CHECK_THROWS_AS(is_switch_for(*g, {0, 7}, Heading::East), std::invalid_argument);
  auto w = wye();
  CHECK_THROWS_AS(allowed_moves(*w, {0, 0}, Heading::East), std::invalid_argument);  // in bounds, no rail
}

TEST_CASE("switch usability is direction-relative") {
  auto g = wye();
  CHECK(is_switch_for(*g, {1, 2}, Heading::East));        // east->E or S
  CHECK_FALSE(is_switch_for(*g, {1, 2}, Heading::West));  // west-> only W
  CHECK_FALSE(is_switch_for(*g, {1, 2}, Heading::North)); // from branch -> only W
  auto m = allowed_moves(*g, {1, 2}, Heading::East);
  REQUIRE(m.size() == 2);
  CHECK(m[0] == Heading::East);
  CHECK(m[1] == Heading::South);
}

TEST_CASE("distance field matches the forward BFS oracle everywhere") {
  for (auto g : {corridor7(), wye()}) {
    for (int tr = 0; tr < g->height(); ++tr)
      for (int tc = 0; tc < g->width(); ++tc) {
        const CellPos target{tr, tc};
        if (!g->at(target).is_rail()) continue;
        DistanceField field(*g, target);
        for (int r = 0; r < g->height(); ++r)
          for (int c = 0; c < g->width(); ++c) {
            const CellPos cell{r, c};
            if (!g->at(cell).is_rail()) continue;
            for (Heading h : all_headings())
              CHECK(field.distance(cell, h) == oracle_distance(*g, cell, h, target));
          }
      }
  }
}

TEST_CASE("distance field pins the wye asymmetry") {
  auto g = wye();
  DistanceField field(*g, {3, 2});
  CHECK(field.distance({1, 1}, Heading::East) == 3);  // (1,2) (2,2) (3,2)
  CHECK(field.distance({1, 3}, Heading::West) == 7);  // all the way around the west tip
  CHECK(field.distance({1, 3}, Heading::East) == 9);  // bounce off the east tip first
  CHECK(field.distance({3, 2}, Heading::South) == 0);
  CHECK_THROWS_AS(DistanceField(*g, {0, 0}), std::invalid_argument);

  // Disconnected component: a second corridor never reaches the first.
  GridBuilder b(7, 3);
  b.lay_path({{0, 0}, {0, 1}, {0, 2}});
  b.lay_path({{2, 0}, {2, 1}, {2, 2}});
  RailGrid two = b.build();
  REQUIRE(two.validate().empty());
  DistanceField f2(two, {0, 2});
  CHECK(f2.distance({2, 0}, Heading::East) == kUnreachable);
  CHECK(f2.distance({2, 0}, Heading::East) == oracle_distance(two, {2, 0}, Heading::East, {0, 2}));
  // Entering a west dead end travelling east is an impossible state.
  CHECK(f2.distance({0, 0}, Heading::East) == kUnreachable);
  CHECK(f2.distance({0, 0}, Heading::West) == 2);  // bounce: exit east, two hops
}

TEST_CASE("reset validates the roster") {
  auto g = corridor7();
  std::vector<AgentSpec> roster{{{0, 0}, Heading::East, {0, 6}, 12}};
  CHECK_NOTHROW(reset(g, roster, 40, 1));

  auto bad = roster;
  bad[0].start = {0, 7};  // not rail (out of bounds handled as not rail? -> at() would index OOB)
  bad[0].start = {0, 6};
  bad[0].heading = Heading::North;  // corridor cell cannot be left northward
  CHECK_THROWS_AS(reset(g, bad, 40, 1), std::invalid_argument);

  bad = roster;
  bad[0].speed_twelfths = 5;
  CHECK_THROWS_AS(reset(g, bad, 40, 1), std::invalid_argument);

  bad = roster;
  bad.push_back(roster[0]);  // duplicate start
  CHECK_THROWS_AS(reset(g, bad, 40, 1), std::invalid_argument);

  CHECK_THROWS_AS(reset(g, roster, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(reset(g, {}, 40, 1), std::invalid_argument);

  MalfunctionParams mf{0.5, 0, 0};
  CHECK_THROWS_AS(reset(g, roster, 40, 1, mf), std::invalid_argument);
  mf = {1.5, 1, 2};
  CHECK_THROWS_AS(reset(g, roster, 40, 1, mf), std::invalid_argument);
}

TEST_CASE("hand-simulated corridor run: timing, rewards, completion") {
  auto g = corridor7();
  EnvState env = reset(g, {{{0, 0}, Heading::East, {0, 4}, 12}}, 20, 7);
  CHECK(env.agent(0).status == AgentStatus::Ready);
  CHECK(env.occupant({0, 0}) == -1);  // Ready agents are off the map

  double total = 0.0;
  // Wait one step off-map, then run straight to the target.
  auto r = env.step(acts({ActionKind::Stop}));
  total += r.rewards[0];
  CHECK(env.agent(0).status == AgentStatus::Ready);

  r = env.step(acts({ActionKind::Forward}));
  total += r.rewards[0];
  CHECK(r.info[0].entered);
  CHECK(env.agent(0).status == AgentStatus::Active);
  CHECK(env.agent(0).position == CellPos{0, 0});
  CHECK(env.occupant({0, 0}) == 0);

  for (int i = 0; i < 3; ++i) {
    r = env.step(acts({ActionKind::Forward}));
    total += r.rewards[0];
    CHECK(r.info[0].moved);
    CHECK(env.agent(0).position == CellPos{0, i + 1});
    CHECK_FALSE(r.episode_over);
  }
  r = env.step(acts({ActionKind::Forward}));
  total += r.rewards[0];
  CHECK(r.info[0].arrived);
  CHECK(r.done[0] == 1);
  CHECK(r.episode_over);
  CHECK(env.agent(0).status == AgentStatus::Done);
  CHECK(env.agent(0).position == CellPos{0, 4});
  CHECK(env.occupant({0, 4}) == -1);  // done agents leave the map
  CHECK(env.arrived_count() == 1);
  // 6 steps not yet Done at -1/20 each, +1 on arrival.
  CHECK(total == doctest::Approx(1.0 - 6.0 / 20.0).epsilon(1e-12));
  CHECK(env.agent(0).cumulative_reward == doctest::Approx(total).epsilon(1e-12));
  CHECK_THROWS_AS(env.step(acts({ActionKind::Forward})), std::invalid_argument);
}

TEST_CASE("fractional speeds cross cells on the exact step") {
  auto g = corridor7();
  for (auto [speed, period] : std::vector<std::pair<int, int>>{{12, 1}, {6, 2}, {4, 3}, {3, 4}}) {
    EnvState env = reset(g, {{{0, 0}, Heading::East, {0, 6}, speed}}, 200, 3);
    env.step(acts({ActionKind::Forward}));  // enter
    int steps = 0;
    while (env.agent(0).position == CellPos{0, 0}) {
      env.step(acts({ActionKind::Forward}));
      ++steps;
    }
    CHECK(steps == period);
    // Second cell crossing takes the same number of steps.
    steps = 0;
    while (env.agent(0).position == CellPos{0, 1}) {
      env.step(acts({ActionKind::Forward}));
      ++steps;
    }
    CHECK(steps == period);
  }
}

TEST_CASE("stop halts progress mid-cell and nothing keeps rolling") {
  auto g = corridor7();
  EnvState env = reset(g, {{{0, 0}, Heading::East, {0, 6}, 6}}, 200, 3);
  env.step(acts({ActionKind::Forward}));
  env.step(acts({ActionKind::Forward}));
  CHECK(env.agent(0).progress_twelfths == 6);
  env.step(acts({ActionKind::Stop}));
  CHECK(env.agent(0).progress_twelfths == 6);
  env.step(acts({ActionKind::Nothing}));  // Nothing keeps the train moving
  CHECK(env.agent(0).position == CellPos{0, 1});
  CHECK(env.agent(0).progress_twelfths == 0);
}

TEST_CASE("switch entry commits the exit; bad choices degrade to stop") {
  auto g = wye();
  // Eastbound through the junction, turning right onto the branch.
  EnvState env = reset(g, {{{1, 0}, Heading::East, {3, 2}, 12}}, 60, 5);
  env.step(acts({ActionKind::Forward}));  // enter (1,0)
  env.step(acts({ActionKind::Forward}));  // -> (1,1)
  // Next crossing enters the switch cell (1,2): the action now picks the exit.
  auto r = env.step(acts({ActionKind::Right}));
  CHECK(r.info[0].moved);
  CHECK(env.agent(0).position == CellPos{1, 2});
  CHECK(env.agent(0).exit_heading == Heading::South);
  env.step(acts({ActionKind::Forward}));  // -> (2,2)
  r = env.step(acts({ActionKind::Forward}));
  CHECK(r.info[0].arrived);

  // Same approach, but refusing to choose: Nothing and Left both degrade.
  EnvState env2 = reset(g, {{{1, 0}, Heading::East, {3, 2}, 12}}, 60, 5);
  env2.step(acts({ActionKind::Forward}));
  env2.step(acts({ActionKind::Forward}));
  r = env2.step(acts({ActionKind::Nothing}));
  CHECK(r.info[0].invalid_action);
  CHECK(env2.agent(0).position == CellPos{1, 1});
  r = env2.step(acts({ActionKind::Left}));  // North is not on offer
  CHECK(r.info[0].invalid_action);
  CHECK(env2.agent(0).position == CellPos{1, 1});
  r = env2.step(acts({ActionKind::Forward}));  // staying on the main line works
  CHECK(r.info[0].moved);
  CHECK(env2.agent(0).exit_heading == Heading::East);

  // Off the branch there is no choice: Forward auto-follows the curve.
  EnvState env3 = reset(g, {{{1, 4}, Heading::West, {1, 0}, 12}}, 60, 5);
  env3.step(acts({ActionKind::Forward}));
  env3.step(acts({ActionKind::Forward}));  // -> (1,3)
  r = env3.step(acts({ActionKind::Forward}));  // -> (1,2), single option W, no flag
  CHECK(r.info[0].moved);
  CHECK_FALSE(r.info[0].invalid_action);
  CHECK(env3.agent(0).exit_heading == Heading::West);
}

TEST_CASE("occupancy blocks followers and head-on meetings deadlock") {
  auto g = corridor7();
  std::vector<AgentSpec> roster{{{0, 3}, Heading::East, {0, 6}, 12},
                                {{0, 1}, Heading::East, {0, 6}, 12}};
  EnvState env = reset(g, roster, 60, 11);
  env.step(acts({ActionKind::Forward, ActionKind::Forward}));  // both enter
  env.step(acts({ActionKind::Forward, ActionKind::Forward}));
  CHECK(env.agent(0).position == CellPos{0, 4});
  CHECK(env.agent(1).position == CellPos{0, 2});
  env.step(acts({ActionKind::Stop, ActionKind::Forward}));
  CHECK(env.agent(1).position == CellPos{0, 3});
  auto r = env.step(acts({ActionKind::Stop, ActionKind::Forward}));
  CHECK(r.info[1].blocked);
  CHECK(env.agent(1).position == CellPos{0, 3});
  // Leader moves off; lower id resolves first, so the follower slots in
  // behind it within the same step.
  r = env.step(acts({ActionKind::Forward, ActionKind::Forward}));
  CHECK(env.agent(0).position == CellPos{0, 5});
  CHECK(env.agent(1).position == CellPos{0, 4});
  CHECK_FALSE(r.info[1].blocked);

  // Head-on: neither can pass, both report blocked, nobody overlaps.
  std::vector<AgentSpec> duel{{{0, 1}, Heading::East, {0, 6}, 12},
                              {{0, 5}, Heading::West, {0, 0}, 12}};
  EnvState env2 = reset(g, duel, 10, 11);
  env2.step(acts({ActionKind::Forward, ActionKind::Forward}));
  env2.step(acts({ActionKind::Forward, ActionKind::Forward}));
  r = env2.step(acts({ActionKind::Forward, ActionKind::Forward}));
  CHECK(env2.agent(0).position == CellPos{0, 3});
  CHECK(r.info[1].blocked);
  for (int i = 0; i < 3; ++i) {
    r = env2.step(acts({ActionKind::Forward, ActionKind::Forward}));
    CHECK(r.info[0].blocked);
    CHECK(r.info[1].blocked);
    CHECK(env2.agent(0).position == CellPos{0, 3});
    CHECK(env2.agent(1).position == CellPos{0, 4});
  }
  // Entry onto an occupied start cell is also blocked.
  std::vector<AgentSpec> nest{{{0, 2}, Heading::East, {0, 6}, 12},
                              {{0, 2}, Heading::East, {0, 5}, 12}};
  CHECK_THROWS_AS(reset(g, nest, 10, 1), std::invalid_argument);  // duplicate start
}

TEST_CASE("ready agent is blocked from entering an occupied start cell") {
  auto g = corridor7();
  std::vector<AgentSpec> roster{{{0, 1}, Heading::East, {0, 6}, 12},
                                {{0, 0}, Heading::East, {0, 6}, 12}};
  EnvState env = reset(g, roster, 60, 2);
  // Agent 0 enters and advances onto (0,2); agent 1 waits.
  env.step(acts({ActionKind::Forward, ActionKind::Stop}));
  env.step(acts({ActionKind::Stop, ActionKind::Forward}));  // 1 enters (0,0)
  auto r = env.step(acts({ActionKind::Stop, ActionKind::Forward}));
  CHECK(r.info[1].blocked);  // (0,1) still occupied by agent 0
  CHECK(env.agent(1).position == CellPos{0, 0});
}

TEST_CASE("injected malfunction freezes the agent for its exact duration") {
  auto g = corridor7();
  EnvState env = reset(g, {{{0, 0}, Heading::East, {0, 6}, 12}}, 60, 2);
  env.step(acts({ActionKind::Forward}));  // enter
  env.step(acts({ActionKind::Forward}));  // -> (0,1)
  env.inject_malfunction(0, 3);
  for (int i = 0; i < 3; ++i) {
    auto r = env.step(acts({ActionKind::Forward}));
    CHECK(r.info[0].malfunctioning);
    CHECK(env.agent(0).position == CellPos{0, 1});
    CHECK(r.rewards[0] == doctest::Approx(-1.0 / 60.0));
  }
  auto r = env.step(acts({ActionKind::Forward}));
  CHECK_FALSE(r.info[0].malfunctioning);
  CHECK(env.agent(0).position == CellPos{0, 2});
  CHECK_THROWS_AS(env.inject_malfunction(5, 3), std::invalid_argument);
}

TEST_CASE("malfunction lottery is seed-deterministic and actually fires") {
  auto g = corridor7();
  std::vector<AgentSpec> roster{{{0, 0}, Heading::East, {0, 6}, 12},
                                {{0, 3}, Heading::East, {0, 6}, 12}};
  MalfunctionParams mf{0.3, 2, 5};
  EnvState a = reset(g, roster, 500, 99, mf);
  EnvState b = reset(g, roster, 500, 99, mf);
  EnvState c = reset(g, roster, 500, 100, mf);
  bool saw_malfunction = false;
  bool diverged = false;
  for (int t = 0; t < 120 && !a.episode_over(); ++t) {
    auto actions = acts({ActionKind::Stop, ActionKind::Stop});
    auto ra = a.step(actions);
    b.step(actions);
    if (!c.episode_over()) c.step(actions);
    for (const auto& info : ra.info) saw_malfunction |= info.malfunctioning;
    CHECK(a.state_hash() == b.state_hash());
    diverged |= a.state_hash() != c.state_hash();
  }
  CHECK(saw_malfunction);
  CHECK(diverged);
}

TEST_CASE("map-based step enforces the id contract") {
  auto g = corridor7();
  std::vector<AgentSpec> roster{{{0, 0}, Heading::East, {0, 4}, 12},
                                {{0, 6}, Heading::West, {0, 5}, 12}};
  EnvState env = reset(g, roster, 40, 4);
  CHECK_THROWS_AS(env.step(std::map<int, ActionKind>{{0, ActionKind::Stop}}),
                  std::invalid_argument);  // missing agent 1
  CHECK_THROWS_AS(env.step(std::map<int, ActionKind>{
                      {0, ActionKind::Stop}, {1, ActionKind::Stop}, {7, ActionKind::Stop}}),
                  std::invalid_argument);  // unknown id
  // Agent 1 arrives immediately next door; afterwards its entry is optional.
  env.step(std::map<int, ActionKind>{{0, ActionKind::Stop}, {1, ActionKind::Forward}});
  auto r = env.step(std::map<int, ActionKind>{{0, ActionKind::Stop}, {1, ActionKind::Forward}});
  CHECK(r.done[1] == 1);
  CHECK_NOTHROW(env.step(std::map<int, ActionKind>{{0, ActionKind::Forward}}));
  // Wrong vector size on the flat interface.
  std::vector<ActionKind> too_few{ActionKind::Stop};
  CHECK_THROWS_AS(env.step(std::span<const ActionKind>(too_few)), std::invalid_argument);
}

TEST_CASE("state hash tracks every mutation and replays bit-identically") {
  auto g = wye();
  std::vector<AgentSpec> roster{{{1, 0}, Heading::East, {3, 2}, 6},
                                {{1, 4}, Heading::West, {1, 0}, 12}};
  MalfunctionParams mf{0.1, 1, 3};
  EnvState a = reset(g, roster, 80, 1234, mf);
  EnvState b = reset(g, roster, 80, 1234, mf);
  CHECK(a.state_hash() == b.state_hash());
  Rng actions_rng(555);
  std::vector<std::uint64_t> hashes_a, hashes_b;
  std::vector<std::vector<ActionKind>> script;
  while (!a.episode_over()) {
    std::vector<ActionKind> step_acts;
    for (int i = 0; i < 2; ++i)
      step_acts.push_back(static_cast<ActionKind>(actions_rng.next_below(kMoveActionCount)));
    script.push_back(step_acts);
    a.step(step_acts);
    hashes_a.push_back(a.state_hash());
  }
  for (const auto& step_acts : script) {
    b.step(step_acts);
    hashes_b.push_back(b.state_hash());
  }
  CHECK(hashes_a == hashes_b);
  // Progress alone must change the hash.
  EnvState c = reset(corridor7(), {{{0, 0}, Heading::East, {0, 6}, 6}}, 40, 5);
  c.step(acts({ActionKind::Forward}));
  const auto h1 = c.state_hash();
  c.step(acts({ActionKind::Forward}));  // progress 0 -> 6, same cell
  CHECK(c.state_hash() != h1);
}

TEST_CASE("episode times out at max_steps with done flags still false") {
  auto g = corridor7();
  EnvState env = reset(g, {{{0, 0}, Heading::East, {0, 6}, 12}}, 3, 8);
  for (int i = 0; i < 3; ++i) {
    CHECK_FALSE(env.episode_over());
    env.step(acts({ActionKind::Stop}));
  }
  CHECK(env.episode_over());
  CHECK(env.agent(0).status == AgentStatus::Ready);
  CHECK(env.arrived_count() == 0);
  CHECK_THROWS_AS(env.step(acts({ActionKind::Stop})), std::invalid_argument);
}

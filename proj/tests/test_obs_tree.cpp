#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>

#include "railab/env_gen.hpp"
#include "railab/grid_builder.hpp"
#include "railab/obs_tree.hpp"

using namespace railab;

namespace {

// 9x5 playground with a nested choice structure:
//
//   row 1:  (1,0) ---- (1,2)W ---- (1,6)Y ---- (1,8)     W: E or S, Y: E or N
//   col 2:            (1,2)-(2,2)-(3,2)                  north spur at (0,6)
//   row 3:  (3,0) ---- (3,2)V ---- (3,8)                 V (from north): E or W
//
std::shared_ptr<RailGrid> depth_grid() {
  GridBuilder b(9, 5);
  b.lay_path({{1, 0}, {1, 1}, {1, 2}, {1, 3}, {1, 4}, {1, 5}, {1, 6}, {1, 7}, {1, 8}});
  b.lay_path({{3, 0}, {3, 1}, {3, 2}, {3, 3}, {3, 4}, {3, 5}, {3, 6}, {3, 7}, {3, 8}});
  b.lay_path({{1, 2}, {2, 2}, {3, 2}}, /*cap_ends=*/false);
  b.add_pair({1, 2}, Heading::West, Heading::South);
  b.add_pair({3, 2}, Heading::North, Heading::West);
  b.add_pair({3, 2}, Heading::North, Heading::East);
  b.lay_path({{1, 6}, {0, 6}}, /*cap_ends=*/false);
  b.add_pair({1, 6}, Heading::West, Heading::North);
  b.add_pair({0, 6}, Heading::South, Heading::South);
  auto g = std::make_shared<RailGrid>(b.build());
  REQUIRE(g->validate().empty());
  return g;
}

std::vector<ActionKind> acts(std::initializer_list<ActionKind> list) { return list; }

}  // namespace

TEST_CASE("trace_section terminal kinds") {
  GridBuilder b(7, 1);
  b.lay_path({{0, 0}, {0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}, {0, 6}});
  RailGrid g = b.build();

  // Committed exit carries through the start cell; run ends at the far tip.
  Section s = trace_section(g, {0, 0}, Heading::West, Heading::East, {6, 6}, 50);
  CHECK(s.kind == TerminalKind::DeadEnd);
  CHECK(s.end() == CellPos{0, 6});
  CHECK(s.length() == 7);
  CHECK(s.entries.front() == Heading::West);
  CHECK(s.end_entry() == Heading::East);

  // Own target cuts the section short.
  s = trace_section(g, {0, 0}, Heading::West, Heading::East, {0, 4}, 50);
  CHECK(s.kind == TerminalKind::Target);
  CHECK(s.end() == CellPos{0, 4});
  CHECK(s.length() == 5);

  // Length bound.
  s = trace_section(g, {0, 0}, Heading::West, Heading::East, {6, 6}, 3);
  CHECK(s.kind == TerminalKind::Bound);
  CHECK(s.length() == 3);

  // A switch terminates a section that has no commitment there.
  auto dg = depth_grid();
  s = trace_section(*dg, {1, 0}, Heading::West, Heading::East, {3, 8}, 50);
  CHECK(s.kind == TerminalKind::Switch);
  CHECK(s.end() == CellPos{1, 2});
  CHECK(s.length() == 3);
  REQUIRE(s.branch_exits.size() == 2);

  // Starting on a switch without commitment ends immediately.
  s = trace_section(*dg, {1, 2}, Heading::East, std::nullopt, {3, 8}, 50);
  CHECK(s.kind == TerminalKind::Switch);
  CHECK(s.length() == 1);

  CHECK_THROWS_AS(trace_section(*dg, {0, 0}, Heading::East, std::nullopt, {3, 8}, 50),
                  std::invalid_argument);
}

TEST_CASE("tree layout on the depth grid is exactly as drawn") {
  auto g = depth_grid();
  EnvState env = reset(g, {{{1, 0}, Heading::East, {3, 8}, 12}}, 100, 1);
  ObservationBuilder builder;
  const SectionTree tree = builder.build_tree(env, 0);

  // Root: (1,0)..(1,2), ends on the W junction.
  CHECK(tree.nodes[0].present);
  CHECK(tree.nodes[0].kind == TerminalKind::Switch);
  CHECK(tree.nodes[0].end == CellPos{1, 2});
  CHECK(tree.nodes[0].length == 3);
  // Distance from the junction to (3,8): down the spur and east, 8 hops.
  CHECK(tree.nodes[0].attrs[0] == doctest::Approx(8.0 / 14.0));
  CHECK(tree.nodes[0].attrs[1] == doctest::Approx(3.0 / 14.0));
  CHECK(tree.nodes[0].attrs[6] == 0.0);

  // Left-first ordering at W (arrival E, exits E=forward, S=right):
  // child 1 = forward run to the Y junction, child 2 = spur to V.
  CHECK(tree.nodes[1].kind == TerminalKind::Switch);
  CHECK(tree.nodes[1].end == CellPos{1, 6});
  CHECK(tree.nodes[1].length == 4);
  CHECK(tree.nodes[2].kind == TerminalKind::Switch);
  CHECK(tree.nodes[2].end == CellPos{3, 2});
  CHECK(tree.nodes[2].length == 2);

  // Children of the Y junction (arrival E, exits N=left, E=forward):
  // left-first puts the north spur before the straight run.
  CHECK(tree.nodes[3].kind == TerminalKind::DeadEnd);
  CHECK(tree.nodes[3].end == CellPos{0, 6});
  CHECK(tree.nodes[3].length == 1);
  CHECK(tree.nodes[4].kind == TerminalKind::DeadEnd);
  CHECK(tree.nodes[4].end == CellPos{1, 8});
  CHECK(tree.nodes[4].length == 2);

  // Children of V (arrival S, exits E=left, W=right): the target run first.
  CHECK(tree.nodes[5].kind == TerminalKind::Target);
  CHECK(tree.nodes[5].end == CellPos{3, 8});
  CHECK(tree.nodes[5].length == 6);
  CHECK(tree.nodes[5].attrs[0] == 0.0);
  CHECK(tree.nodes[5].attrs[6] == 1.0);
  CHECK(tree.nodes[6].kind == TerminalKind::DeadEnd);
  CHECK(tree.nodes[6].end == CellPos{3, 0});
  CHECK(tree.nodes[6].length == 2);

  // Dead ends and targets have no children; depth stops at level 3.
  for (int i : {7, 8, 9, 10, 11, 12, 13, 14}) CHECK_FALSE(tree.nodes[i].present);
}

TEST_CASE("forward-first ordering swaps forward/left children") {
  auto g = depth_grid();
  // Observer starts just before the Y junction so its root ends there.
  EnvState env = reset(g, {{{1, 3}, Heading::East, {3, 8}, 12}}, 100, 1);
  ObservationBuilder left(ObservationBuilder::ChildOrder::LeftFirst);
  ObservationBuilder fwd(ObservationBuilder::ChildOrder::ForwardFirst);
  const SectionTree tl = left.build_tree(env, 0);
  const SectionTree tf = fwd.build_tree(env, 0);
  REQUIRE(tl.nodes[0].end == CellPos{1, 6});
  // Left-first: north spur first; forward-first: straight run first.
  CHECK(tl.nodes[1].end == CellPos{0, 6});
  CHECK(tl.nodes[2].end == CellPos{1, 8});
  CHECK(tf.nodes[1].end == CellPos{1, 8});
  CHECK(tf.nodes[2].end == CellPos{0, 6});
}

TEST_CASE("section agent statistics count the right trains") {
  auto g = depth_grid();
  std::vector<AgentSpec> roster{{{1, 0}, Heading::East, {3, 8}, 12},
                                {{1, 1}, Heading::West, {3, 0}, 6},
                                {{3, 5}, Heading::East, {3, 8}, 12}};
  MalfunctionParams mf{0.0, 1, 4};
  EnvState env = reset(g, roster, 100, 1, mf);
  // Activate agent 1 only; it sits at (1,1) facing west, inside agent 0's
  // root section and against its travel direction.
  env.step(acts({ActionKind::Stop, ActionKind::Forward, ActionKind::Stop}));
  env.inject_malfunction(1, 2);

  ObservationBuilder builder;
  const SectionTree tree = builder.build_tree(env, 0);
  REQUIRE(tree.nodes[0].end == CellPos{1, 2});
  CHECK(tree.nodes[0].attrs[2] == doctest::Approx(1.0 / 3.0));  // one other agent
  CHECK(tree.nodes[0].attrs[3] == doctest::Approx(1.0 / 3.0));  // opposing
  CHECK(tree.nodes[0].attrs[4] == doctest::Approx(2.0 / 4.0));  // malfunction 2 of max 4
  CHECK(tree.nodes[0].attrs[5] == doctest::Approx(0.5));        // its speed
  // Ready and off-section agents are invisible to the counts.
  CHECK(tree.nodes[1].attrs[2] == 0.0);
  CHECK(tree.nodes[1].attrs[5] == 1.0);

  // Same-direction traffic is counted but not opposing.
  std::vector<AgentSpec> roster2{{{1, 0}, Heading::East, {3, 8}, 12},
                                 {{1, 1}, Heading::East, {3, 0}, 12}};
  EnvState env3 = reset(g, roster2, 100, 1, mf);
  env3.step(acts({ActionKind::Stop, ActionKind::Forward}));
  ObservationBuilder b3;
  const SectionTree t3 = b3.build_tree(env3, 0);
  CHECK(t3.nodes[0].attrs[2] == doctest::Approx(0.5));
  CHECK(t3.nodes[0].attrs[3] == 0.0);
}

TEST_CASE("decision points fire only before a usable branch") {
  auto g = depth_grid();
  EnvState env = reset(g, {{{1, 0}, Heading::East, {3, 8}, 12}}, 100, 1);
  CHECK_FALSE(is_decision_point(env, 0));  // Ready
  env.step(acts({ActionKind::Forward}));   // enter (1,0)
  // Next crossing goes to (1,1): plain track.
  CHECK_FALSE(is_decision_point(env, 0));
  env.step(acts({ActionKind::Forward}));  // -> (1,1)
  // Now the next crossing enters the W junction: decision time.
  CHECK(is_decision_point(env, 0));
  env.inject_malfunction(0, 1);
  CHECK_FALSE(is_decision_point(env, 0));  // frozen agents have no say
  env.step(acts({ActionKind::Forward}));   // malfunction burns off
  CHECK(is_decision_point(env, 0));
  env.step(acts({ActionKind::Right}));  // commit S into (1,2)
  CHECK(env.agent(0).position == CellPos{1, 2});
  CHECK_FALSE(is_decision_point(env, 0));  // spur has no choices

  // Approaching one's own target through a junction is not a decision.
  EnvState env2 = reset(g, {{{1, 1}, Heading::East, {1, 2}, 12}}, 100, 1);
  env2.step(acts({ActionKind::Forward}));
  CHECK_FALSE(is_decision_point(env2, 0));

  // A half-speed agent mid-cell is not at a decision point.
  EnvState env3 = reset(g, {{{1, 1}, Heading::East, {3, 8}, 6}}, 100, 1);
  env3.step(acts({ActionKind::Forward}));
  CHECK_FALSE(is_decision_point(env3, 0));  // progress 0, needs 6 more
  env3.step(acts({ActionKind::Forward}));
  CHECK(is_decision_point(env3, 0));  // progress 6: next step crosses
}

TEST_CASE("flattened observation has the documented layout and bounds") {
  auto g = depth_grid();
  MalfunctionParams mf{0.0, 1, 4};
  EnvState env = reset(g, {{{1, 0}, Heading::East, {3, 8}, 6}}, 100, 1, mf);
  ObservationBuilder builder;

  auto obs = builder.build(env, 0);
  REQUIRE(obs.size() == ObservationBuilder::kObsDim);
  REQUIRE(ObservationBuilder::kObsDim == 112);
  const int base = SectionTree::kNodeCount * ObservationBuilder::kAttrCount;
  CHECK(obs[base + 0] == doctest::Approx(0.5));  // speed 1/2
  CHECK(obs[base + 1] == 0.0);                   // progress
  CHECK(obs[base + 3] == 1.0);                   // Ready
  CHECK(obs[base + 4] == 0.0);
  CHECK(obs[base + 5] == 0.0);
  CHECK(obs[base + 6] == 0.0);

  env.step(acts({ActionKind::Forward}));  // enter
  env.step(acts({ActionKind::Forward}));  // progress 6/12
  obs = builder.build(env, 0);
  CHECK(obs[base + 1] == doctest::Approx(0.5));
  CHECK(obs[base + 3] == 0.0);
  CHECK(obs[base + 4] == 1.0);
  env.inject_malfunction(0, 3);
  obs = builder.build(env, 0);
  CHECK(obs[base + 2] == doctest::Approx(3.0 / 4.0));

  // Absent nodes read as distance 1, everything else 0.
  const SectionTree tree = builder.build_tree(env, 0);
  for (int i = 0; i < SectionTree::kNodeCount; ++i) {
    if (tree.nodes[i].present) continue;
    for (int k = 0; k < ObservationBuilder::kAttrCount; ++k)
      CHECK(obs[i * 7 + k] == (k == 0 ? 1.0 : 0.0));
  }
}

TEST_CASE("done agents observe all zeros") {
  GridBuilder b(4, 1);
  b.lay_path({{0, 0}, {0, 1}, {0, 2}, {0, 3}});
  auto g = std::make_shared<RailGrid>(b.build());
  EnvState env = reset(g, {{{0, 0}, Heading::East, {0, 1}, 12}}, 20, 1);
  env.step(acts({ActionKind::Forward}));
  env.step(acts({ActionKind::Forward}));
  REQUIRE(env.agent(0).status == AgentStatus::Done);
  ObservationBuilder builder;
  const auto obs = builder.build(env, 0);
  for (double v : obs) CHECK(v == 0.0);
}

TEST_CASE("observations stay in bounds on generated environments") {
  GeneratorParams p;
  p.width = 15;
  p.height = 15;
  p.n_agents = 3;
  p.mixed_speeds = true;
  p.malfunction = {0.05, 1, 5};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const EnvSpec spec = generate_env(p, seed);
    EnvState env = make_env(spec, seed);
    ObservationBuilder builder;
    Rng rng(seed + 77);
    for (int t = 0; t < 30 && !env.episode_over(); ++t) {
      for (int id = 0; id < env.agent_count(); ++id) {
        const auto obs = builder.build(env, id);
        REQUIRE(obs.size() == ObservationBuilder::kObsDim);
        for (double v : obs) {
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
        }
      }
      std::vector<ActionKind> step_acts;
      for (int id = 0; id < env.agent_count(); ++id)
        step_acts.push_back(static_cast<ActionKind>(rng.next_below(kMoveActionCount)));
      env.step(step_acts);
    }
  }
}

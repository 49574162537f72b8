#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "railab/a3c_trainer.hpp"
#include "railab/grid_builder.hpp"

using namespace railab;

namespace {

EnvSpec corridor_spec(int length) {
  GridBuilder gb(length, 1);
  std::vector<CellPos> cells;
  for (int c = 0; c < length; ++c) cells.push_back({0, c});
  gb.lay_path(cells, true);
  EnvSpec spec;
  spec.grid = gb.build();
  spec.roster = {{{0, 0}, Heading::East, {0, length - 1}, kProgressDenom}};
  spec.max_steps = default_max_steps(spec.grid);
  return spec;
}

TrainerConfig small_config() {
  TrainerConfig cfg;
  cfg.gen.width = 8;
  cfg.gen.height = 8;
  cfg.gen.n_agents = 2;
  // Unmasked so every step queries the policy: 300 budget units guarantee
  // actual gradient updates in this tiny run.
  cfg.masking_enabled = false;
  cfg.total_decision_steps = 300;
  cfg.t_max = 10;
  cfg.eval_episodes = 4;
  cfg.seed = 5;
  cfg.eval_seed = 77;
  return cfg;
}

}  // namespace

TEST_CASE("chain reaction probability matches the closed form and the reported figure") {
  // Flagship value: ten agents, each holding its best action with 0.9.
  CHECK(std::abs(chain_reaction_probability(0.9, 10) - 0.6513215599) < 1e-9);
  // Commonly quoted rounded to one decimal: 65.1%.
  CHECK(std::round(chain_reaction_probability(0.9, 10) * 1000.0) / 10.0 == 65.1);

  CHECK(chain_reaction_probability(1.0, 50) == 0.0);
  CHECK(chain_reaction_probability(0.5, 1) == 0.5);
  CHECK(chain_reaction_probability(0.0, 3) == 1.0);

  // Independent oracle: complement of the product of per-agent "stays best"
  // probabilities, multiplied out one agent at a time.
  for (double p : {0.0, 0.25, 0.5, 0.9, 0.99, 1.0}) {
    for (int n : {1, 2, 7, 14}) {
      double stay = 1.0;
      for (int i = 0; i < n; ++i) stay *= p;
      CHECK(chain_reaction_probability(p, n) == doctest::Approx(1.0 - stay).epsilon(1e-12));
    }
  }

  CHECK_THROWS_AS(chain_reaction_probability(-0.1, 5), std::invalid_argument);
  CHECK_THROWS_AS(chain_reaction_probability(1.1, 5), std::invalid_argument);
  CHECK_THROWS_AS(chain_reaction_probability(0.5, 0), std::invalid_argument);
}

TEST_CASE("evaluation sets are deterministic and fingerprinted") {
  GeneratorParams gen;
  gen.width = 10;
  gen.height = 10;
  gen.n_agents = 2;
  const auto a = make_eval_set(gen, 5, 42);
  const auto b = make_eval_set(gen, 5, 42);
  REQUIRE(a.size() == 5);
  CHECK(eval_set_hash(a) == eval_set_hash(b));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(env_fingerprint(a[i].spec) == env_fingerprint(b[i].spec));
    CHECK(a[i].run_seed == b[i].run_seed);
  }
  const auto c = make_eval_set(gen, 5, 43);
  CHECK(eval_set_hash(a) != eval_set_hash(c));
  CHECK_THROWS_AS(make_eval_set(gen, 0, 1), std::invalid_argument);
}

TEST_CASE("argmax evaluation is a pure function of params and seeds") {
  GeneratorParams gen;
  gen.width = 10;
  gen.height = 10;
  gen.n_agents = 2;
  gen.malfunction = {0.02, 2, 4};
  const auto cases = make_eval_set(gen, 6, 9);
  NetworkConfig ncfg;
  const Params params = Params::init(ncfg, 3);

  const EvalResult r1 = evaluate(params, cases, true, EvalMode::Argmax);
  const EvalResult r2 = evaluate(params, cases, true, EvalMode::Argmax);
  CHECK(r1.arrival_rate == r2.arrival_rate);
  CHECK(r1.mean_return == r2.mean_return);
  CHECK(r1.per_episode_arrival == r2.per_episode_arrival);
  CHECK(r1.agents_total == 12);

  const EvalResult s1 = evaluate(params, cases, true, EvalMode::Sample, 1234);
  const EvalResult s2 = evaluate(params, cases, true, EvalMode::Sample, 1234);
  CHECK(s1.arrival_rate == s2.arrival_rate);
  CHECK(s1.mean_return == s2.mean_return);

  CHECK_THROWS_AS(evaluate(params, {}, true, EvalMode::Argmax), std::invalid_argument);
}

TEST_CASE("budget zero returns the baseline evaluation only") {
  TrainerConfig cfg = small_config();
  cfg.total_decision_steps = 0;
  const TrainResult res = train(cfg);
  CHECK(res.decisions == 0);
  CHECK(res.episodes == 0);
  REQUIRE(res.curve.size() == 1);
  CHECK(res.curve[0].decisions == 0);
  CHECK(res.curve[0].arrival_rate >= 0.0);
  CHECK(res.curve[0].arrival_rate <= 1.0);
  CHECK(res.params.fingerprint() == Params::init(cfg.net, cfg.seed).fingerprint());
}

TEST_CASE("trainer config validation") {
  TrainerConfig cfg = small_config();
  cfg.n_workers = 0;
  CHECK_THROWS_AS(train(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.t_max = 0;
  CHECK_THROWS_AS(train(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.net.n_actions = 7;
  CHECK_THROWS_AS(train(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.fixed_envs = {corridor_spec(6)};
  cfg.curriculum = {{8, 8, 1}};
  CHECK_THROWS_AS(train(cfg), std::invalid_argument);
}

TEST_CASE("single-worker training is bit-deterministic") {
  const TrainerConfig cfg = small_config();
  const TrainResult a = train(cfg);
  const TrainResult b = train(cfg);
  CHECK(a.params.fingerprint() == b.params.fingerprint());
  CHECK(a.episodes == b.episodes);
  CHECK(a.decisions == b.decisions);
  CHECK(a.env_steps == b.env_steps);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].decisions == b.curve[i].decisions);
    CHECK(a.curve[i].arrival_rate == b.curve[i].arrival_rate);
    CHECK(a.curve[i].mean_return == b.curve[i].mean_return);
  }
  CHECK(a.decisions >= cfg.total_decision_steps);
  CHECK(trainer_config_hash(cfg) == trainer_config_hash(small_config()));
  TrainerConfig other = small_config();
  other.masking_enabled = true;
  CHECK(trainer_config_hash(cfg) != trainer_config_hash(other));
}

TEST_CASE("masked corridor needs no training at all") {
  TrainerConfig cfg;
  cfg.fixed_envs = {corridor_spec(8)};
  cfg.total_decision_steps = 0;
  cfg.seed = 11;
  const TrainResult res = train(cfg);
  // Auto-Forward carries the agent home without a single decision.
  CHECK(res.curve[0].arrival_rate == 1.0);
}

TEST_CASE("unmasked training solves the straight-line task") {
  TrainerConfig cfg;
  cfg.fixed_envs = {corridor_spec(8)};
  cfg.masking_enabled = false;
  cfg.total_decision_steps = 5000;
  cfg.t_max = 20;
  cfg.lr = 1e-3;
  cfg.seed = 11;
  cfg.eval_seed = 3;
  const TrainResult res = train(cfg);
  REQUIRE(res.curve.size() == 2);
  CHECK(res.curve.back().arrival_rate == 1.0);
  CHECK(res.curve.back().mean_return > 0.0);
  CHECK(res.decisions >= 5000);
}

TEST_CASE("eval cadence emits rows at the decision schedule") {
  TrainerConfig cfg;
  cfg.fixed_envs = {corridor_spec(6)};
  cfg.masking_enabled = true;  // every episode charges exactly one unit
  cfg.total_decision_steps = 10;
  cfg.eval_every = 4;
  cfg.seed = 2;
  const TrainResult res = train(cfg);
  CHECK(res.episodes == 10);
  // Baseline, decisions 4 and 8, then the final row.
  REQUIRE(res.curve.size() == 4);
  CHECK(res.curve[0].decisions == 0);
  CHECK(res.curve[1].decisions == 4);
  CHECK(res.curve[2].decisions == 8);
  CHECK(res.curve[3].decisions == 10);
  for (const EvalPoint& p : res.curve) {
    CHECK(p.arrival_rate == 1.0);  // corridor task is trivially solved masked
    CHECK(p.stage == -1);
  }
}

TEST_CASE("non-finite losses abort the run with a diagnostic") {
  TrainerConfig cfg;
  cfg.fixed_envs = {corridor_spec(6)};
  cfg.masking_enabled = false;  // queries (and thus gradients) every step
  cfg.net.value_coef = std::numeric_limits<double>::quiet_NaN();
  cfg.total_decision_steps = 50;
  CHECK_THROWS_WITH_AS(train(cfg), doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("metrics csv has a fixed byte layout without timing columns") {
  const std::vector<EvalPoint> curve = {{0, 0, -1, 0.5, -0.25}, {100, 3, 2, 1.0, 0.875}};
  const auto path = std::filesystem::temp_directory_path() / "railab_metrics_test.csv";
  write_metrics_csv(curve, path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::filesystem::remove(path);
  CHECK(ss.str() ==
        "decisions,episodes,stage,arrival_rate,mean_return\n"
        "0,0,-1,0.5,-0.25\n"
        "100,3,2,1,0.875\n");
}

TEST_CASE("curriculum moves the trainer through stages on easy tasks") {
  TrainerConfig cfg;
  cfg.gen.width = 12;
  cfg.gen.height = 12;
  cfg.gen.n_agents = 1;
  cfg.curriculum = {{6, 6, 1}, {8, 8, 1}};
  cfg.curriculum_window = 3;
  cfg.curriculum_threshold = 0.5;
  cfg.total_decision_steps = 120;
  cfg.eval_episodes = 2;
  cfg.seed = 21;
  const TrainResult res = train(cfg);
  // Single-agent masked episodes succeed often enough to clear a 0.5
  // threshold over a window of 3; the run must reach the final stage.
  CHECK(res.final_stage == 1);
  CHECK(res.curve.back().stage == 1);
}

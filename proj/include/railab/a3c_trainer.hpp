#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "railab/env_gen.hpp"
#include "railab/rollout.hpp"

namespace railab {

// Probability that at least one of n agents deviates from its best action
// when each independently sticks to it with probability p_best.
double chain_reaction_probability(double p_best, int n_agents);

struct TrainerConfig {
  NetworkConfig net;    // gamma, value_coef, entropy_coef live here
  GeneratorParams gen;  // the target task; also the training task when no curriculum/fixed envs

  // When nonempty: workers cycle through these layouts instead of drawing
  // from the generator (fresh run seeds each episode), and evaluation uses
  // them too. Useful for hand-built scenes and deterministic tests.
  std::vector<EnvSpec> fixed_envs;

  // When nonempty: training environments follow the stage ladder, promoting
  // on the trailing-window arrival threshold. Evaluation stays on the
  // target task `gen` throughout so curves are comparable.
  std::vector<CurriculumStage> curriculum;
  int curriculum_window = 200;
  double curriculum_threshold = 0.8;

  int n_workers = 1;
  // Budget in policy queries, summed over workers. An episode that needed no
  // queries at all (masked, decision-free route) still charges one unit so
  // the loop terminates.
  long long total_decision_steps = 100000;
  int t_max = 20;  // decisions per trajectory segment
  double lr = 1e-3;
  double clip_norm = 40.0;
  double rms_decay = 0.99;
  double rms_eps = 1e-5;
  bool masking_enabled = true;
  long long eval_every = 0;  // decision cadence for evaluation rows; 0: baseline + final only
  int eval_episodes = 40;
  std::uint64_t seed = 1;
  std::uint64_t eval_seed = 9000;
};

std::uint64_t trainer_config_hash(const TrainerConfig& cfg);

// A held-out evaluation episode: a layout plus the reset seed driving its
// malfunction lottery.
struct EvalCase {
  EnvSpec spec;
  std::uint64_t run_seed = 0;
};

enum class EvalMode { Sample, Argmax };

std::vector<EvalCase> make_eval_set(const GeneratorParams& gen, int episodes, std::uint64_t seed);

// Fingerprint of the held-out set (layouts + run seeds); ablation pairs must
// agree on it.
std::uint64_t eval_set_hash(const std::vector<EvalCase>& cases);

struct EvalResult {
  int episodes = 0;
  int agents_total = 0;
  int agents_arrived = 0;
  double arrival_rate = 0.0;  // arrived / total agents
  double mean_return = 0.0;   // mean over episodes of per-episode mean return
  std::vector<double> per_episode_arrival;
};

EvalResult evaluate(const Params& params, const std::vector<EvalCase>& cases, bool masked,
                    EvalMode mode, std::uint64_t sample_seed = 0);

struct EvalPoint {
  long long decisions = 0;
  long long episodes = 0;
  int stage = -1;  // curriculum stage when evaluated; -1 without curriculum
  double arrival_rate = 0.0;
  double mean_return = 0.0;
};

struct TrainResult {
  Params params;
  std::vector<EvalPoint> curve;  // baseline row, cadence rows, final row
  long long episodes = 0;
  long long decisions = 0;
  long long env_steps = 0;
  int final_stage = -1;
};

// Runs the asynchronous training loop. Workers share the parameter store
// and RMSProp accumulators under a mutex; everything else is worker-local.
// A non-finite loss or gradient aborts the whole run with a diagnostic.
// n_workers = 1 is bit-deterministic for fixed config.
TrainResult train(const TrainerConfig& cfg);

// One evaluation per row. No wall-clock columns: identical runs must write
// identical bytes.
void write_metrics_csv(const std::vector<EvalPoint>& curve, const std::filesystem::path& path);

}  // namespace railab

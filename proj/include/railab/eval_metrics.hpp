#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "railab/a3c_trainer.hpp"

namespace railab {

// Fraction of agents that arrived, pooled over all episodes.
double arrival_rate(const std::vector<EpisodeStats>& episodes);

enum class AblationAxis { Masking, Lstm };

struct AblationReport {
  std::string label;
  double arrival_rate = 0.0;
  double mean_return = 0.0;
  long long episodes = 0;   // training episodes consumed
  long long decisions = 0;  // training decision steps consumed
  std::uint64_t config_hash = 0;  // full variant config
  std::uint64_t eval_hash = 0;    // held-out set; must equal the partner's
};

struct AblationPair {
  AblationReport on;  // masking on / LSTM on
  AblationReport off;
  double delta_abs = 0.0;  // on minus off, in arrival-rate points
  double delta_rel = 0.0;  // (on - off) / off; NaN when off is zero
};

// Trains both variants of `axis` from the same base config (identical seeds
// and budgets), evaluates each on the same held-out environments, and
// reports both sides plus the deltas. The masking axis evaluates each
// variant in its own regime (a masked policy is deployed masked); the LSTM
// axis keeps the base regime for both.
AblationPair run_ablation(const TrainerConfig& base, AblationAxis axis);

void write_ablation_csv(const AblationPair& pair, const std::filesystem::path& path);

// ---- Replay ----

// Everything needed to reproduce an episode bit-exactly: the layout, the
// reset seed, the per-step action matrix actually applied (policy choices
// plus automatic fills), and per-step state hashes for verification.
struct Replay {
  EnvSpec spec;
  std::uint64_t run_seed = 0;
  bool masked = true;
  std::vector<std::vector<ActionKind>> steps;  // one row per env step
  std::vector<std::uint64_t> hashes;           // state hash after each step
};

// Runs one recorded episode under the given policy.
Replay record_replay(const EnvSpec& spec, std::uint64_t run_seed, bool masked,
                     RolloutPolicy& policy);

nlohmann::json replay_to_json(const Replay& r);
Replay replay_from_json(const nlohmann::json& j);
void save_replay(const Replay& r, const std::filesystem::path& path);
Replay load_replay(const std::filesystem::path& path);

struct ReplayCheck {
  bool ok = false;
  int first_mismatch = -1;  // env step index of the first divergence
  int steps = 0;
  int arrived = 0;
};

// Re-applies the recorded actions on a fresh environment and compares every
// state hash.
ReplayCheck verify_replay(const Replay& r);

}  // namespace railab

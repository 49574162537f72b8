#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "railab/rollout.hpp"

namespace railab {

// Action space of the negotiation lab: the five movement actions from
// env_core, then the five content-free symbols C1..C5, then EOT ("end of
// transmission"). Playing any symbol at a movement decision opens a
// communication loop; during the loop only symbols are legal.
constexpr int kCommActionCount = 11;
constexpr int kCommSymbolCount = 6;  // C1..C5 + EOT
constexpr int kEotSymbol = 5;

inline bool is_comm_action(int action) {
  return action >= kMoveActionCount && action < kCommActionCount;
}
inline int comm_symbol_of(int action) { return action - kMoveActionCount; }
inline int comm_action_of(int symbol) { return kMoveActionCount + symbol; }
const char* comm_symbol_name(int symbol);  // "C1".."C5", "EOT"

// The comm observation extends the standard tree observation with the
// flattened buffer: one (symbol one-hot + written-by-me bit) block per
// buffer slot. The buffer block is always present — all zero before anyone
// has spoken — so a route decision taken after a negotiation can read the
// final buffer directly instead of having to remember it.
constexpr int kBufferEntryDims = kCommSymbolCount + 1;

struct BufferEntry {
  int symbol = 0;       // 0..4 = C1..C5, 5 = EOT
  int writer_slot = 0;  // learner slot, not physical agent
  bool operator==(const BufferEntry&) const = default;
};

enum class CommPhase { Movement, Loop };

// The fixed passing-loop layout: a 2x7 grid with the main track along row 0
// (dead ends at the corners) and a siding along row 1, joined by switches at
// columns 1 and 5. Columns 2..4 of both rows are single track, so opposing
// traffic must split between the rows. One agent starts at each end; each
// one's target is the other's start.
EnvSpec comm_layout();

// Two agents negotiating precedence. The environment is seen through
// learner slots whose mapping onto the physical agents is randomized by the
// seed, and everything a slot observes is identity-symmetric:
//  - observations use forward-first section trees (the layout is mirror
//    symmetric, so the two slots see identical vectors in mirrored states);
//  - at a branching decision the siding is always presented as the Right
//    action and translated to the physical turn internally (the raw turn
//    direction would betray which end an agent started from);
//  - the comm buffer is encoded relative to the reader (written-by-me bit).
//
// Episode rewards are terminal only: -1 each when the agents meet head-on
// on a single-track stretch, +1 each when both arrive, 0 on timeout.
class CommEnv : public RolloutEnv {
 public:
  static constexpr int kBufferSlots = 8;
  static constexpr int kObsDim =
      ObservationBuilder::kObsDim + kBufferSlots * kBufferEntryDims;
  static constexpr int kMaxRounds = 8;  // per loop; hitting the cap forces EOT
  // One negotiation per episode. A second budget keeps worst-case episodes
  // short enough that the discounted terminal reward still reaches every
  // decision; with a large budget, endless re-initiated chatter buries the
  // reward signal and training stalls at the no-communication ceiling.
  static constexpr int kMaxLoops = 1;
  static constexpr int kMaxSteps = 9;   // entry step + 8 movement steps

  CommEnv(std::uint64_t seed, bool comm_enabled);

  int agent_count() const override { return 2; }
  int action_count() const override { return kCommActionCount; }
  int obs_dim() const override { return kObsDim; }
  bool done() const override { return done_; }
  std::vector<int> pending() override;
  Eigen::VectorXd observe(int slot) override;
  ActionMask mask(int slot) override;
  std::vector<double> step_once(const std::map<int, int>& decisions) override;
  bool arrived(int slot) const override;

  const EnvState& env() const { return env_; }
  CommPhase phase() const { return phase_; }
  int physical_agent(int slot) const;
  int current_writer() const { return writer_; }  // -1 outside a loop
  // Sliding window of the last kBufferSlots symbols, oldest first.
  const std::vector<BufferEntry>& buffer() const { return buffer_; }
  // Every symbol written this episode, across all loops.
  const std::vector<BufferEntry>& transcript() const { return transcript_; }
  bool eot_flag(int slot) const;
  int rounds_total() const { return rounds_total_; }
  int loops_started() const { return loops_started_; }
  bool forced_end() const { return forced_end_; }
  bool collided() const { return collided_; }
  bool success() const { return done_ && env_.arrived_count() == 2; }
  std::array<double, 2> final_rewards() const { return final_rewards_; }

 private:
  struct DecisionView {
    bool left = false;
    bool forward = false;
    bool right = false;
    bool swap_lateral = false;  // physical branch is a left turn
  };
  DecisionView decision_view(int phys) const;
  ActionKind to_physical(int phys, int action) const;
  void write_symbol(int slot, int symbol);
  void advance_turn(int last_writer);
  void close_loop(bool forced);
  std::vector<double> finish(double reward_each);
  std::vector<double> terminal_scan();

  EnvState env_;
  ObservationBuilder builder_{ObservationBuilder::ChildOrder::ForwardFirst};
  Rng coin_;
  std::array<int, 2> slot_to_phys_{};
  bool comm_enabled_;
  CommPhase phase_ = CommPhase::Movement;
  std::vector<BufferEntry> buffer_;
  std::vector<BufferEntry> transcript_;
  std::array<bool, 2> eot_{};
  int writer_ = -1;
  int initiator_ = -1;
  int round_in_loop_ = 0;
  int rounds_total_ = 0;
  int loops_started_ = 0;
  bool forced_end_ = false;
  bool collided_ = false;
  bool done_ = false;
  std::array<double, 2> final_rewards_{};
};

// Fresh episode: layout instantiated, slot mapping drawn from the seed,
// both agents already on the grid (one forced entry step), empty buffer.
CommEnv comm_reset(std::uint64_t seed, bool comm_enabled = true);

// ---- Training ----

struct CommTrainConfig {
  // input_dim must stay CommEnv::kObsDim and n_actions kCommActionCount;
  // gamma and the loss coefficients ride along in here as usual.
  NetworkConfig net{.input_dim = CommEnv::kObsDim, .n_actions = kCommActionCount};
  long long episodes = 100000;
  double lr = 1e-3;
  double clip_norm = 40.0;
  double rms_decay = 0.99;
  double rms_eps = 1e-5;
  int t_max = 50;
  bool comm_enabled = true;
  std::uint64_t seed = 1;
  int log_every = 100;  // success-curve period
};

// One line of the transcript log.
struct CommTranscript {
  std::uint64_t seed = 0;  // episode seed
  bool success = false;
  int rounds = 0;  // total communication rounds across the episode's loops
  bool forced = false;  // some loop hit the round cap
  std::vector<BufferEntry> symbols;
};

struct CommCurvePoint {
  long long episode = 0;  // episodes completed at this row
  double success_rate = 0.0;  // over the last log_every episodes
};

struct CommTrainResult {
  Params params;
  std::vector<std::uint8_t> success;  // per episode
  std::vector<CommCurvePoint> curve;
  std::vector<CommTranscript> transcripts;  // per episode
};

CommTrainResult train_comm(const CommTrainConfig& cfg);

// Mean success over the last `window` episodes (all of them when fewer).
double trailing_success(const std::vector<std::uint8_t>& success, int window);

// rounds -> episode count over the last `window` log entries (everything
// when window <= 0), optionally restricted to successful episodes.
std::map<int, long long> round_histogram(const std::vector<CommTranscript>& log, int window,
                                         bool successful_only);

// "C2,C4,EOT,EOT"; "-" for an episode without communication.
std::string transcript_symbols(const CommTranscript& t);

// "<seed> <success> <rounds> <forced> <symbols>" -- one episode per line.
std::string transcript_line(const CommTranscript& t);
void write_transcript_log(const std::vector<CommTranscript>& log,
                          const std::filesystem::path& path);

// Distinct symbol sequences / successful episodes over the last `window`
// log entries; 0 when the window holds no successes.
double transcript_variability(const std::vector<CommTranscript>& log, int window);

}  // namespace railab

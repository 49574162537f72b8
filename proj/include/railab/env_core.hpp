#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "railab/rail_grid.hpp"
#include "railab/rng.hpp"

namespace railab {

// Cell progress is tracked in exact twelfths so every supported speed
// (1, 1/2, 1/3, 1/4) completes a cell without floating drift.
constexpr int kProgressDenom = 12;

enum class ActionKind : std::uint8_t { Nothing = 0, Left = 1, Forward = 2, Right = 3, Stop = 4 };
constexpr int kMoveActionCount = 5;

const char* action_name(ActionKind a);

enum class AgentStatus : std::uint8_t { Ready = 0, Active = 1, Done = 2 };

// Roster entry used at reset. `heading` is the departure direction: the way
// the agent travels when it leaves its start cell.
struct AgentSpec {
  CellPos start;
  Heading heading = Heading::East;
  CellPos target;
  int speed_twelfths = kProgressDenom;  // 12, 6, 4 or 3
};

struct MalfunctionParams {
  double rate = 0.0;  // per agent-step trip probability
  int min_duration = 0;
  int max_duration = 0;
};

struct AgentState {
  int id = 0;
  CellPos position;       // start cell while Ready, target once Done
  Heading heading = Heading::East;       // travel direction on entering the current cell
  Heading exit_heading = Heading::East;  // committed direction for leaving it
  CellPos start;
  Heading depart_heading = Heading::East;
  CellPos target;
  int speed_twelfths = kProgressDenom;
  int progress_twelfths = 0;  // always < kProgressDenom
  int malfunction_remaining = 0;
  AgentStatus status = AgentStatus::Ready;
  double cumulative_reward = 0.0;

  double speed() const { return static_cast<double>(speed_twelfths) / kProgressDenom; }
  double progress() const { return static_cast<double>(progress_twelfths) / kProgressDenom; }
  bool would_cross() const { return progress_twelfths + speed_twelfths >= kProgressDenom; }
};

struct AgentStepInfo {
  bool moved = false;
  bool entered = false;
  bool arrived = false;
  bool blocked = false;          // destination occupied
  bool invalid_action = false;   // action degraded to Stop
  bool malfunctioning = false;
};

struct StepResult {
  std::vector<double> rewards;
  std::vector<std::uint8_t> done;
  std::vector<AgentStepInfo> info;
  bool episode_over = false;
};

// One running episode. Owns every bit of mutable state including the RNG;
// identical seeds and action sequences reproduce bit-identical trajectories.
class EnvState {
 public:
  EnvState(std::shared_ptr<const RailGrid> grid, std::vector<AgentSpec> roster, int max_steps,
           MalfunctionParams malfunction, std::uint64_t seed);

  const RailGrid& grid() const { return *grid_; }
  std::shared_ptr<const RailGrid> grid_ptr() const { return grid_; }
  const std::vector<AgentState>& agents() const { return agents_; }
  const AgentState& agent(int id) const { return agents_.at(id); }
  int agent_count() const { return static_cast<int>(agents_.size()); }
  int step_count() const { return step_count_; }
  int max_steps() const { return max_steps_; }
  const MalfunctionParams& malfunction_params() const { return malfunction_; }
  std::uint64_t seed() const { return seed_; }

  bool episode_over() const;
  int arrived_count() const;

  // Agent occupying the cell, or -1. Only Active agents occupy cells.
  int occupant(CellPos p) const;

  // Advances one step. `actions` must cover every agent (Done entries are
  // ignored). Throws std::invalid_argument on a finished episode.
  StepResult step(std::span<const ActionKind> actions);

  // Map-based variant enforcing the id checks: unknown ids and missing
  // Ready/Active agents are domain errors.
  StepResult step(const std::map<int, ActionKind>& actions);

  // Deterministically trips a malfunction, bypassing the lottery. The agent
  // stands still for exactly `duration` subsequent steps.
  void inject_malfunction(int id, int duration);

  std::uint64_t state_hash() const;

 private:
  void resolve_agent(int id, ActionKind act, StepResult& result);
  bool try_cross(AgentState& a, ActionKind act, AgentStepInfo& info);

  std::shared_ptr<const RailGrid> grid_;
  std::vector<AgentState> agents_;
  int step_count_ = 0;
  int max_steps_ = 0;
  MalfunctionParams malfunction_;
  std::uint64_t seed_ = 0;
  Rng rng_;
  std::vector<std::int32_t> occupancy_;  // cell -> agent id or -1
};

// Validates placement and produces the initial state: all agents Ready,
// step_count 0, RNG derived from the seed.
EnvState reset(std::shared_ptr<const RailGrid> grid, std::vector<AgentSpec> roster, int max_steps,
               std::uint64_t seed, MalfunctionParams malfunction = {});

inline int default_max_steps(const RailGrid& grid) { return 4 * (grid.width() + grid.height()); }

// Heading delta helpers for interpreting directional actions.
inline Heading apply_turn(Heading h, ActionKind a) {
  switch (a) {
    case ActionKind::Left: return turn_left(h);
    case ActionKind::Right: return turn_right(h);
    default: return h;
  }
}

}  // namespace railab

#pragma once

#include <functional>
#include <map>
#include <memory>

#include "railab/env_io.hpp"
#include "railab/obs_tree.hpp"
#include "railab/policy_net.hpp"

namespace railab {

// Decision-level view of an environment. `pending()` lists the agents whose
// next action must come from a policy right now; everything else is handled
// by the adapter's automatic rules when the step is advanced.
class RolloutEnv {
 public:
  virtual ~RolloutEnv() = default;
  virtual int agent_count() const = 0;
  virtual int action_count() const = 0;
  virtual int obs_dim() const = 0;
  virtual bool done() const = 0;
  virtual std::vector<int> pending() = 0;
  virtual Eigen::VectorXd observe(int agent) = 0;
  virtual ActionMask mask(int agent) = 0;
  // Advances exactly one underlying step, applying the given decisions and
  // automatic actions for everyone else. Returns this step's per-agent
  // rewards.
  virtual std::vector<double> step_once(const std::map<int, int>& decisions) = 0;
  virtual bool arrived(int agent) const = 0;
};

// Rail adapter. Masked mode queries the policy only at decision points
// (usable switch ahead) over the legal {directions, Stop} set and
// auto-Forwards everyone else; unmasked mode queries every live agent every
// step with the full unrestricted action set.
class RailRolloutEnv : public RolloutEnv {
 public:
  RailRolloutEnv(const EnvSpec& spec, std::uint64_t seed, bool masked,
                 ObservationBuilder::ChildOrder order = ObservationBuilder::ChildOrder::LeftFirst);

  int agent_count() const override { return env_.agent_count(); }
  int action_count() const override { return kMoveActionCount; }
  int obs_dim() const override { return ObservationBuilder::kObsDim; }
  bool done() const override { return env_.episode_over(); }
  std::vector<int> pending() override;
  Eigen::VectorXd observe(int agent) override;
  ActionMask mask(int agent) override;
  std::vector<double> step_once(const std::map<int, int>& decisions) override;
  bool arrived(int agent) const override {
    return env_.agent(agent).status == AgentStatus::Done;
  }

  const EnvState& env() const { return env_; }
  EnvState& env() { return env_; }

  // Called after every step with the full action vector actually applied
  // (policy picks plus automatic fills) and the post-step state. Replay
  // recording hangs off this.
  using StepRecorder = std::function<void(const std::vector<ActionKind>&, const EnvState&)>;
  void set_recorder(StepRecorder r) { recorder_ = std::move(r); }

 private:
  EnvState env_;
  ObservationBuilder builder_;
  bool masked_;
  StepRecorder recorder_;
};

// Chooses an action for one decision. Implementations own any recurrent
// state; begin_episode resets it.
class RolloutPolicy {
 public:
  virtual ~RolloutPolicy() = default;
  virtual void begin_episode(int n_agents) = 0;
  virtual int decide(int agent, const Eigen::VectorXd& obs, const ActionMask& mask) = 0;
  // Recurrent state template for trajectory bookkeeping; stateless policies
  // return empty vectors.
  virtual LstmState zero_state() const { return LstmState{{}, {}}; }
  // Recurrent state of `agent` before its next decision (used as a segment
  // start), and the value estimate produced by the latest decide() call
  // (used as a segment bootstrap).
  virtual LstmState state(int agent) const { (void)agent; return zero_state(); }
  virtual double last_value() const { return 0.0; }
};

// Runs the network per agent with its own LSTM thread. Sampling uses the
// provided RNG; greedy mode takes the argmax instead.
class NetPolicy : public RolloutPolicy {
 public:
  NetPolicy(const Params& params, Rng rng, bool greedy = false)
      : params_(&params), rng_(rng), greedy_(greedy) {}

  void begin_episode(int n_agents) override;
  int decide(int agent, const Eigen::VectorXd& obs, const ActionMask& mask) override;
  LstmState zero_state() const override { return LstmState::zero(params_->cfg.lstm); }
  LstmState state(int agent) const override { return states_.at(static_cast<std::size_t>(agent)); }
  double last_value() const override { return last_value_; }

  Rng& rng() { return rng_; }

 private:
  const Params* params_;
  Rng rng_;
  bool greedy_;
  double last_value_ = 0.0;
  std::vector<LstmState> states_;
};

struct EpisodeStats {
  int n_agents = 0;
  int arrived = 0;
  int env_steps = 0;
  int decisions = 0;
  double mean_return = 0.0;  // mean over agents of summed per-step rewards

  double arrival_fraction() const {
    return n_agents > 0 ? static_cast<double>(arrived) / n_agents : 0.0;
  }
};

struct EpisodeResult {
  EpisodeStats stats;
  // One trajectory per agent (empty for agents that never decided). Rewards
  // between an agent's consecutive decisions are credited to the earlier
  // record; trailing rewards go to its last record.
  std::vector<Trajectory> trajectories;
};

struct RolloutOptions {
  bool record = false;
  // When > 0, trajectories are cut into segments of at most this many
  // decisions and handed to on_segment as they close (including the final
  // partial segments at episode end); EpisodeResult.trajectories stays
  // empty. A segment cut mid-episode carries the policy's value estimate at
  // the next decision as its bootstrap; end-of-episode segments bootstrap
  // with 0.
  int segment_len = 0;
  std::function<void(int agent, Trajectory&&)> on_segment;
};

// Plays one episode to completion.
EpisodeResult run_episode(RolloutEnv& env, RolloutPolicy& policy, const RolloutOptions& opts);

inline EpisodeResult run_episode(RolloutEnv& env, RolloutPolicy& policy, bool record) {
  RolloutOptions opts;
  opts.record = record;
  return run_episode(env, policy, opts);
}

}  // namespace railab

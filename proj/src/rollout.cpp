#include "railab/rollout.hpp"

#include <stdexcept>

namespace railab {

RailRolloutEnv::RailRolloutEnv(const EnvSpec& spec, std::uint64_t seed, bool masked,
                               ObservationBuilder::ChildOrder order)
    : env_(make_env(spec, seed)), builder_(order), masked_(masked) {}

std::vector<int> RailRolloutEnv::pending() {
  std::vector<int> out;
  for (const AgentState& a : env_.agents()) {
    if (masked_) {
      if (is_decision_point(env_, a.id)) out.push_back(a.id);
    } else {
      if (a.status != AgentStatus::Done) out.push_back(a.id);
    }
  }
  return out;
}

Eigen::VectorXd RailRolloutEnv::observe(int agent) {
  const std::vector<double> v = builder_.build(env_, agent);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ActionMask RailRolloutEnv::mask(int agent) {
  if (!masked_) return {};  // full action set: the unrestricted baseline
  const AgentState& a = env_.agent(agent);
  if (!is_decision_point(env_, agent))
    throw std::logic_error("RailRolloutEnv::mask: agent is not at a decision point");
  ActionMask m(kMoveActionCount, 0);
  m[static_cast<std::size_t>(ActionKind::Stop)] = 1;
  const CellPos next = a.position.neighbor(a.exit_heading);
  const Heading entry = a.exit_heading;
  const std::vector<Heading> moves = allowed_moves(env_.grid(), next, entry);
  for (ActionKind act : {ActionKind::Left, ActionKind::Forward, ActionKind::Right}) {
    const Heading want = apply_turn(entry, act);
    for (Heading mv : moves)
      if (mv == want) m[static_cast<std::size_t>(act)] = 1;
  }
  return m;
}

std::vector<double> RailRolloutEnv::step_once(const std::map<int, int>& decisions) {
  std::vector<ActionKind> acts(static_cast<std::size_t>(env_.agent_count()), ActionKind::Forward);
  for (const AgentState& a : env_.agents())
    if (a.status == AgentStatus::Done) acts[static_cast<std::size_t>(a.id)] = ActionKind::Nothing;
  for (const auto& [id, act] : decisions) {
    if (id < 0 || id >= env_.agent_count())
      throw std::invalid_argument("step_once: unknown agent id");
    if (act < 0 || act >= kMoveActionCount)
      throw std::invalid_argument("step_once: action out of range");
    acts[static_cast<std::size_t>(id)] = static_cast<ActionKind>(act);
  }
  const StepResult res = env_.step(acts);
  if (recorder_) recorder_(acts, env_);
  return res.rewards;
}

void NetPolicy::begin_episode(int n_agents) {
  states_.assign(static_cast<std::size_t>(n_agents), LstmState::zero(params_->cfg.lstm));
  last_value_ = 0.0;
}

int NetPolicy::decide(int agent, const Eigen::VectorXd& obs, const ActionMask& mask) {
  LstmState& st = states_.at(static_cast<std::size_t>(agent));
  const ForwardResult fr = forward(*params_, obs, st, mask.empty() ? nullptr : &mask);
  st = fr.state;
  last_value_ = fr.value;
  return greedy_ ? argmax_action(fr.policy) : sample_action(fr.policy, rng_);
}

EpisodeResult run_episode(RolloutEnv& env, RolloutPolicy& policy, const RolloutOptions& opts) {
  if (opts.segment_len > 0 && !opts.on_segment)
    throw std::invalid_argument("run_episode: segment_len without on_segment");
  if (opts.on_segment && opts.segment_len <= 0)
    throw std::invalid_argument("run_episode: on_segment without segment_len");

  const int n = env.agent_count();
  policy.begin_episode(n);
  const bool record = opts.record || static_cast<bool>(opts.on_segment);

  EpisodeResult out;
  out.stats.n_agents = n;
  std::vector<Trajectory> trajs(static_cast<std::size_t>(n));
  if (record)
    for (Trajectory& t : trajs) t.start_state = policy.zero_state();
  std::vector<double> pending_reward(static_cast<std::size_t>(n), 0.0);
  std::vector<int> open(static_cast<std::size_t>(n), -1);
  std::vector<double> returns(static_cast<std::size_t>(n), 0.0);

  while (!env.done()) {
    const std::vector<int> ids = env.pending();
    std::map<int, int> decisions;
    for (int a : ids) {
      const std::size_t ai = static_cast<std::size_t>(a);
      const Eigen::VectorXd obs = env.observe(a);
      const ActionMask m = env.mask(a);
      // A new decision closes the previous record: everything accrued since
      // then was caused by that record's action.
      if (record && open[ai] >= 0) {
        trajs[ai].steps[static_cast<std::size_t>(open[ai])].reward = pending_reward[ai];
        pending_reward[ai] = 0.0;
      }
      LstmState pre_state;
      if (opts.segment_len > 0) pre_state = policy.state(a);
      const int act = policy.decide(a, obs, m);
      ++out.stats.decisions;
      if (record) {
        if (opts.segment_len > 0 &&
            static_cast<int>(trajs[ai].steps.size()) >= opts.segment_len) {
          // Cut: this decision's value estimate bootstraps the old segment;
          // the new one resumes from the recurrent state the estimate saw.
          Trajectory seg = std::move(trajs[ai]);
          seg.bootstrap_value = policy.last_value();
          opts.on_segment(a, std::move(seg));
          trajs[ai] = Trajectory{};
          trajs[ai].start_state = pre_state;
        }
        TrajStep step;
        step.x = obs;
        step.mask = m;
        step.action = act;
        trajs[ai].steps.push_back(std::move(step));
        open[ai] = static_cast<int>(trajs[ai].steps.size()) - 1;
      }
      decisions.emplace(a, act);
    }
    const std::vector<double> rewards = env.step_once(decisions);
    ++out.stats.env_steps;
    for (int a = 0; a < n; ++a) {
      pending_reward[static_cast<std::size_t>(a)] += rewards[static_cast<std::size_t>(a)];
      returns[static_cast<std::size_t>(a)] += rewards[static_cast<std::size_t>(a)];
    }
    if (out.stats.env_steps > 10'000'000)
      throw std::runtime_error("run_episode: environment never finished");
  }

  if (record) {
    for (int a = 0; a < n; ++a) {
      const std::size_t ai = static_cast<std::size_t>(a);
      if (open[ai] >= 0)
        trajs[ai].steps[static_cast<std::size_t>(open[ai])].reward = pending_reward[ai];
      if (opts.on_segment && !trajs[ai].steps.empty()) {
        trajs[ai].bootstrap_value = 0.0;  // episode is over: terminal
        opts.on_segment(a, std::move(trajs[ai]));
        trajs[ai] = Trajectory{};
      }
    }
  }

  for (int a = 0; a < n; ++a)
    if (env.arrived(a)) ++out.stats.arrived;
  double total = 0.0;
  for (double r : returns) total += r;
  out.stats.mean_return = n > 0 ? total / n : 0.0;
  if (opts.record && !opts.on_segment) out.trajectories = std::move(trajs);
  return out;
}

}  // namespace railab

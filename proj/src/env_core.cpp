#include "railab/env_core.hpp"

#include <stdexcept>
#include <string>

#include "railab/hash.hpp"

namespace railab {

const char* action_name(ActionKind a) {
  switch (a) {
    case ActionKind::Nothing: return "nothing";
    case ActionKind::Left: return "left";
    case ActionKind::Forward: return "forward";
    case ActionKind::Right: return "right";
    case ActionKind::Stop: return "stop";
  }
  return "?";
}

EnvState::EnvState(std::shared_ptr<const RailGrid> grid, std::vector<AgentSpec> roster,
                   int max_steps, MalfunctionParams malfunction, std::uint64_t seed)
    : grid_(std::move(grid)),
      max_steps_(max_steps),
      malfunction_(malfunction),
      seed_(seed),
      rng_(Rng::derive(seed, 0)),
      occupancy_(static_cast<std::size_t>(grid_->width()) * grid_->height(), -1) {
  if (!grid_) throw std::invalid_argument("reset: null grid");
  if (roster.empty()) throw std::invalid_argument("reset: empty roster");
  if (max_steps_ < 1) throw std::invalid_argument("reset: max_steps must be >= 1");
  if (malfunction_.rate < 0.0 || malfunction_.rate > 1.0)
    throw std::invalid_argument("reset: malfunction rate outside [0, 1]");
  if (malfunction_.rate > 0.0 &&
      (malfunction_.min_duration < 1 || malfunction_.max_duration < malfunction_.min_duration))
    throw std::invalid_argument("reset: malfunction durations require 1 <= min <= max");

  agents_.reserve(roster.size());
  for (std::size_t i = 0; i < roster.size(); ++i) {
    const AgentSpec& spec = roster[i];
    const std::string tag = "agent " + std::to_string(i);
    if (!grid_->at(spec.start).is_rail())
      throw std::invalid_argument("reset: " + tag + " start is not on rail");
    if (!grid_->at(spec.target).is_rail())
      throw std::invalid_argument("reset: " + tag + " target is not on rail");
    if (spec.speed_twelfths != 12 && spec.speed_twelfths != 6 && spec.speed_twelfths != 4 &&
        spec.speed_twelfths != 3)
      throw std::invalid_argument("reset: " + tag + " speed must be 1, 1/2, 1/3 or 1/4");
    // Departure direction must be reachable through some transition of the
    // start cell, otherwise the agent could never leave it legally.
    const TransitionMap& tm = grid_->at(spec.start);
    bool departable = false;
    for (int in = 0; in < 4 && !departable; ++in)
      departable = tm.get(static_cast<Heading>(in), spec.heading);
    if (!departable)
      throw std::invalid_argument("reset: " + tag + " cannot depart heading " +
                                  heading_name(spec.heading));
    for (std::size_t j = 0; j < i; ++j)
      if (roster[j].start == spec.start)
        throw std::invalid_argument("reset: duplicate start cell between agents " +
                                    std::to_string(j) + " and " + std::to_string(i));
    AgentState a;
    a.id = static_cast<int>(i);
    a.position = spec.start;
    a.heading = spec.heading;
    a.exit_heading = spec.heading;
    a.start = spec.start;
    a.depart_heading = spec.heading;
    a.target = spec.target;
    a.speed_twelfths = spec.speed_twelfths;
    agents_.push_back(a);
  }
}

bool EnvState::episode_over() const {
  if (step_count_ >= max_steps_) return true;
  return arrived_count() == agent_count();
}

int EnvState::arrived_count() const {
  int n = 0;
  for (const AgentState& a : agents_)
    if (a.status == AgentStatus::Done) ++n;
  return n;
}

int EnvState::occupant(CellPos p) const {
  return occupancy_[static_cast<std::size_t>(p.row) * grid_->width() + p.col];
}

StepResult EnvState::step(std::span<const ActionKind> actions) {
  if (episode_over()) throw std::invalid_argument("step: episode already over");
  if (actions.size() != agents_.size())
    throw std::invalid_argument("step: expected one action per agent");

  StepResult result;
  result.rewards.assign(agents_.size(), 0.0);
  result.done.assign(agents_.size(), 0);
  result.info.assign(agents_.size(), AgentStepInfo{});

  // Malfunction lottery first, in id order, so RNG consumption does not
  // depend on the chosen actions.
  if (malfunction_.rate > 0.0) {
    for (AgentState& a : agents_) {
      if (a.status == AgentStatus::Done || a.malfunction_remaining > 0) continue;
      if (rng_.next_unit() < malfunction_.rate) {
        const int span = malfunction_.max_duration - malfunction_.min_duration + 1;
        a.malfunction_remaining =
            malfunction_.min_duration + static_cast<int>(rng_.next_below(span));
      }
    }
  }

  for (std::size_t id = 0; id < agents_.size(); ++id) {
    const bool was_not_done = agents_[id].status != AgentStatus::Done;
    resolve_agent(static_cast<int>(id), actions[id], result);
    AgentState& a = agents_[id];
    double r = 0.0;
    if (was_not_done) r -= 1.0 / max_steps_;
    if (result.info[id].arrived) r += 1.0;
    result.rewards[id] = r;
    a.cumulative_reward += r;
    if (a.malfunction_remaining > 0) --a.malfunction_remaining;
    result.done[id] = a.status == AgentStatus::Done ? 1 : 0;
  }

  ++step_count_;
  result.episode_over = episode_over();
  return result;
}

StepResult EnvState::step(const std::map<int, ActionKind>& actions) {
  for (const auto& [id, act] : actions) {
    (void)act;
    if (id < 0 || id >= agent_count())
      throw std::invalid_argument("step: action for unknown agent id " + std::to_string(id));
  }
  std::vector<ActionKind> flat(agents_.size(), ActionKind::Nothing);
  for (std::size_t id = 0; id < agents_.size(); ++id) {
    auto it = actions.find(static_cast<int>(id));
    if (it == actions.end()) {
      if (agents_[id].status != AgentStatus::Done)
        throw std::invalid_argument("step: missing action for agent " + std::to_string(id));
      continue;
    }
    flat[id] = it->second;
  }
  return step(std::span<const ActionKind>(flat));
}

void EnvState::resolve_agent(int id, ActionKind act, StepResult& result) {
  AgentState& a = agents_[static_cast<std::size_t>(id)];
  AgentStepInfo& info = result.info[static_cast<std::size_t>(id)];
  if (a.status == AgentStatus::Done) return;

  if (a.malfunction_remaining > 0) {
    info.malfunctioning = true;
    return;
  }

  if (a.status == AgentStatus::Ready) {
    if (act != ActionKind::Forward) return;  // waiting off-map is always legal
    if (occupant(a.start) >= 0) {
      info.blocked = true;
      return;
    }
    a.status = AgentStatus::Active;
    a.position = a.start;
    a.heading = a.depart_heading;
    a.exit_heading = a.depart_heading;
    a.progress_twelfths = 0;
    occupancy_[static_cast<std::size_t>(a.position.row) * grid_->width() + a.position.col] = id;
    info.entered = true;
    return;
  }

  // Active. Stop halts in place; every other action keeps the agent rolling.
  if (act == ActionKind::Stop) return;
  if (a.would_cross()) {
    if (try_cross(a, act, info)) info.moved = true;
    return;
  }
  a.progress_twelfths += a.speed_twelfths;
}

bool EnvState::try_cross(AgentState& a, ActionKind act, AgentStepInfo& info) {
  const CellPos dest = a.position.neighbor(a.exit_heading);
  if (occupant(dest) >= 0) {
    info.blocked = true;
    return false;
  }
  const Heading entry = a.exit_heading;
  Heading next_exit = entry;
  if (dest == a.target) {
    occupancy_[static_cast<std::size_t>(a.position.row) * grid_->width() + a.position.col] = -1;
    a.position = dest;
    a.heading = entry;
    a.exit_heading = entry;
    a.progress_twelfths = 0;
    a.status = AgentStatus::Done;
    info.arrived = true;
    return true;
  }
  const auto moves = allowed_moves(*grid_, dest, entry);
  if (moves.size() == 1) {
    next_exit = moves[0];
  } else {
    // Entering a switch: the action taken now commits the exit. A
    // non-directional or impossible choice degrades to Stop at the boundary.
    bool chosen = false;
    if (act == ActionKind::Left || act == ActionKind::Forward || act == ActionKind::Right) {
      const Heading want = apply_turn(entry, act);
      for (Heading m : moves)
        if (m == want) {
          next_exit = want;
          chosen = true;
          break;
        }
    }
    if (!chosen) {
      info.invalid_action = true;
      return false;
    }
  }
  occupancy_[static_cast<std::size_t>(a.position.row) * grid_->width() + a.position.col] = -1;
  occupancy_[static_cast<std::size_t>(dest.row) * grid_->width() + dest.col] = a.id;
  a.position = dest;
  a.heading = entry;
  a.exit_heading = next_exit;
  a.progress_twelfths = 0;
  return true;
}

void EnvState::inject_malfunction(int id, int duration) {
  if (id < 0 || id >= agent_count())
    throw std::invalid_argument("inject_malfunction: unknown agent id");
  if (duration < 0) throw std::invalid_argument("inject_malfunction: negative duration");
  agents_[static_cast<std::size_t>(id)].malfunction_remaining = duration;
}

std::uint64_t EnvState::state_hash() const {
  Fnv1a h;
  h.u64(grid_->content_hash());
  h.i32(step_count_).i32(max_steps_);
  h.f64(malfunction_.rate).i32(malfunction_.min_duration).i32(malfunction_.max_duration);
  for (int i = 0; i < 4; ++i) h.u64(rng_.words()[i]);
  for (const AgentState& a : agents_) {
    h.i32(a.id);
    h.i32(a.position.row).i32(a.position.col);
    h.u8(static_cast<std::uint8_t>(a.heading)).u8(static_cast<std::uint8_t>(a.exit_heading));
    h.i32(a.target.row).i32(a.target.col);
    h.i32(a.speed_twelfths).i32(a.progress_twelfths).i32(a.malfunction_remaining);
    h.u8(static_cast<std::uint8_t>(a.status));
    h.f64(a.cumulative_reward);
  }
  return h.value();
}

EnvState reset(std::shared_ptr<const RailGrid> grid, std::vector<AgentSpec> roster, int max_steps,
               std::uint64_t seed, MalfunctionParams malfunction) {
  return EnvState(std::move(grid), std::move(roster), max_steps, malfunction, seed);
}

}  // namespace railab

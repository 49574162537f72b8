#include "railab/comm_lab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "railab/grid_builder.hpp"

namespace railab {

const char* comm_symbol_name(int symbol) {
  static const char* const names[kCommSymbolCount] = {"C1", "C2", "C3", "C4", "C5", "EOT"};
  if (symbol < 0 || symbol >= kCommSymbolCount)
    throw std::invalid_argument("comm_symbol_name: bad symbol");
  return names[symbol];
}

EnvSpec comm_layout() {
  using enum Heading;
  GridBuilder gb(7, 2);
  // Main line with dead ends at the corners and switches flanking the
  // single-track middle.
  gb.add_pair({0, 0}, East, East);
  gb.add_pair({0, 1}, West, East);
  gb.add_pair({0, 1}, West, South);
  for (int c = 2; c <= 4; ++c) gb.add_pair({0, c}, West, East);
  gb.add_pair({0, 5}, West, East);
  gb.add_pair({0, 5}, East, South);
  gb.add_pair({0, 6}, West, West);
  // Siding.
  gb.add_pair({1, 1}, North, East);
  for (int c = 2; c <= 4; ++c) gb.add_pair({1, c}, West, East);
  gb.add_pair({1, 5}, North, West);

  EnvSpec spec;
  spec.grid = gb.build();
  spec.roster = {{{0, 0}, East, {0, 6}, kProgressDenom},
                 {{0, 6}, West, {0, 0}, kProgressDenom}};
  spec.max_steps = CommEnv::kMaxSteps;
  return spec;
}

CommEnv::CommEnv(std::uint64_t seed, bool comm_enabled)
    : env_(make_env(comm_layout(), Rng::derive(seed, 0x434f4d4dULL).next_u64())),
      coin_(Rng::derive(seed, 0x434f494eULL)),
      comm_enabled_(comm_enabled) {
  const bool flip = Rng::derive(seed, 0x534c4f54ULL).next_bool();
  slot_to_phys_ = flip ? std::array<int, 2>{1, 0} : std::array<int, 2>{0, 1};
  // Forced entry: both trains step onto the grid so the episode starts with
  // them already facing each other, eight movement steps from the horizon.
  const std::array<ActionKind, 2> enter{ActionKind::Forward, ActionKind::Forward};
  env_.step(std::span<const ActionKind>(enter.data(), enter.size()));
}

CommEnv comm_reset(std::uint64_t seed, bool comm_enabled) {
  return CommEnv(seed, comm_enabled);
}

int CommEnv::physical_agent(int slot) const {
  if (slot < 0 || slot >= 2) throw std::invalid_argument("CommEnv: bad slot");
  return slot_to_phys_[static_cast<std::size_t>(slot)];
}

bool CommEnv::eot_flag(int slot) const {
  if (slot < 0 || slot >= 2) throw std::invalid_argument("CommEnv: bad slot");
  return eot_[static_cast<std::size_t>(slot)];
}

bool CommEnv::arrived(int slot) const {
  return env_.agent(physical_agent(slot)).status == AgentStatus::Done;
}

std::vector<int> CommEnv::pending() {
  if (done_) return {};
  if (phase_ == CommPhase::Loop) return {writer_};
  std::vector<int> out;
  for (int slot = 0; slot < 2; ++slot)
    if (is_decision_point(env_, physical_agent(slot))) out.push_back(slot);
  return out;
}

CommEnv::DecisionView CommEnv::decision_view(int phys) const {
  const AgentState& a = env_.agent(phys);
  const CellPos next = a.position.neighbor(a.exit_heading);
  const Heading entry = a.exit_heading;
  DecisionView v;
  bool phys_left = false;
  bool phys_right = false;
  for (Heading mv : allowed_moves(env_.grid(), next, entry)) {
    if (mv == apply_turn(entry, ActionKind::Forward)) v.forward = true;
    if (mv == apply_turn(entry, ActionKind::Left)) phys_left = true;
    if (mv == apply_turn(entry, ActionKind::Right)) phys_right = true;
  }
  // A lone lateral branch is always presented as Right; the raw turn
  // direction would reveal which end of the track the agent came from.
  if (phys_left && !phys_right) {
    v.right = true;
    v.swap_lateral = true;
  } else {
    v.left = phys_left;
    v.right = phys_right;
  }
  return v;
}

ActionKind CommEnv::to_physical(int phys, int action) const {
  ActionKind act = static_cast<ActionKind>(action);
  if (act != ActionKind::Left && act != ActionKind::Right) return act;
  if (is_decision_point(env_, phys) && decision_view(phys).swap_lateral)
    act = act == ActionKind::Left ? ActionKind::Right : ActionKind::Left;
  return act;
}

Eigen::VectorXd CommEnv::observe(int slot) {
  const int phys = physical_agent(slot);
  const std::vector<double> base = builder_.build(env_, phys);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(kObsDim);
  x.head(ObservationBuilder::kObsDim) =
      Eigen::Map<const Eigen::VectorXd>(base.data(), static_cast<Eigen::Index>(base.size()));
  if (phase_ == CommPhase::Loop) {
    if (slot != writer_)
      throw std::logic_error("CommEnv::observe: only the writer observes during a loop");
    // During a turn the buffer replaces the section tree as the thing to
    // reason about; the tree block is blanked so loop states are unmistakable.
    x.head(ObservationBuilder::kObsDim - ObservationBuilder::kAgentFeatureCount).setZero();
  }
  // The buffer block is always present (all zero while nobody has spoken):
  // per slot a symbol one-hot plus a written-by-me bit, oldest entry first.
  for (std::size_t i = 0; i < buffer_.size(); ++i) {
    const Eigen::Index at =
        ObservationBuilder::kObsDim + static_cast<Eigen::Index>(i) * kBufferEntryDims;
    x[at + buffer_[i].symbol] = 1.0;
    x[at + kCommSymbolCount] = buffer_[i].writer_slot == slot ? 1.0 : 0.0;
  }
  return x;
}

ActionMask CommEnv::mask(int slot) {
  if (phase_ == CommPhase::Loop) {
    if (slot != writer_)
      throw std::logic_error("CommEnv::mask: only the writer acts during a loop");
    ActionMask m(kCommActionCount, 0);
    for (int a = kMoveActionCount; a < kCommActionCount; ++a) m[static_cast<std::size_t>(a)] = 1;
    return m;
  }
  const int phys = physical_agent(slot);
  if (!is_decision_point(env_, phys))
    throw std::logic_error("CommEnv::mask: agent is not at a decision point");
  const DecisionView v = decision_view(phys);
  ActionMask m(kCommActionCount, 0);
  m[static_cast<std::size_t>(ActionKind::Left)] = v.left;
  m[static_cast<std::size_t>(ActionKind::Forward)] = v.forward;
  m[static_cast<std::size_t>(ActionKind::Right)] = v.right;
  m[static_cast<std::size_t>(ActionKind::Stop)] = 1;
  if (comm_enabled_ && loops_started_ < kMaxLoops)
    for (int a = kMoveActionCount; a < kCommActionCount; ++a) m[static_cast<std::size_t>(a)] = 1;
  return m;
}

void CommEnv::write_symbol(int slot, int symbol) {
  const BufferEntry e{symbol, slot};
  buffer_.push_back(e);
  if (buffer_.size() > kBufferSlots) buffer_.erase(buffer_.begin());
  transcript_.push_back(e);
  if (symbol == kEotSymbol) eot_[static_cast<std::size_t>(slot)] = true;
}

void CommEnv::advance_turn(int last_writer) {
  if (eot_[0] && eot_[1]) {
    close_loop(false);
    return;
  }
  // A round is one pass through [initiator, other]; skipping a flagged
  // agent still wraps the pass, so a monologue after an early EOT cannot
  // dodge the round cap.
  int cand = 1 - last_writer;
  bool wrap = cand == initiator_;
  if (eot_[static_cast<std::size_t>(cand)]) {
    cand = 1 - cand;
    wrap = true;
  }
  if (wrap) {
    if (round_in_loop_ == kMaxRounds) {
      close_loop(true);
      return;
    }
    ++round_in_loop_;
    ++rounds_total_;
  }
  writer_ = cand;
}

void CommEnv::close_loop(bool forced) {
  if (forced) {
    eot_ = {true, true};
    forced_end_ = true;
  }
  phase_ = CommPhase::Movement;
  writer_ = -1;
  initiator_ = -1;
  round_in_loop_ = 0;
}

std::vector<double> CommEnv::finish(double reward_each) {
  done_ = true;
  final_rewards_ = {reward_each, reward_each};
  return {reward_each, reward_each};
}

std::vector<double> CommEnv::terminal_scan() {
  const AgentState& a0 = env_.agent(0);
  const AgentState& a1 = env_.agent(1);
  const auto in_span = [](const AgentState& a, int row) {
    return a.status == AgentStatus::Active && a.position.row == row && a.position.col >= 2 &&
           a.position.col <= 4;
  };
  for (int row : {0, 1}) {
    if (in_span(a0, row) && in_span(a1, row) && a0.heading == reverse(a1.heading)) {
      collided_ = true;
      return finish(-1.0);
    }
  }
  if (env_.arrived_count() == 2) return finish(1.0);
  if (env_.episode_over()) return finish(0.0);
  return {0.0, 0.0};
}

std::vector<double> CommEnv::step_once(const std::map<int, int>& decisions) {
  if (done_) throw std::invalid_argument("CommEnv::step_once: episode already over");
  for (const auto& [slot, act] : decisions) {
    if (slot < 0 || slot >= 2) throw std::invalid_argument("CommEnv::step_once: unknown slot");
    if (act < 0 || act >= kCommActionCount)
      throw std::invalid_argument("CommEnv::step_once: action out of range");
  }

  if (phase_ == CommPhase::Loop) {
    if (decisions.size() != 1 || !decisions.contains(writer_))
      throw std::invalid_argument(
          "CommEnv::step_once: exactly the current writer must act during a loop");
    const int act = decisions.at(writer_);
    if (!is_comm_action(act))
      throw std::domain_error("CommEnv::step_once: movement action during a communication loop");
    const int w = writer_;
    write_symbol(w, comm_symbol_of(act));
    advance_turn(w);
    return {0.0, 0.0};
  }

  const std::vector<int> pend = pending();
  for (const auto& [slot, act] : decisions)
    if (std::find(pend.begin(), pend.end(), slot) == pend.end())
      throw std::invalid_argument("CommEnv::step_once: slot is not awaiting a decision");

  const bool comm_ok = comm_enabled_ && loops_started_ < kMaxLoops;
  std::vector<int> comm_players;
  for (int slot : pend) {
    const auto it = decisions.find(slot);
    if (it != decisions.end() && is_comm_action(it->second) && comm_ok)
      comm_players.push_back(slot);
  }

  if (!comm_players.empty()) {
    // The step's movement is discarded and environment time freezes while
    // the agents talk.
    ++loops_started_;
    phase_ = CommPhase::Loop;
    eot_ = {false, false};
    round_in_loop_ = 1;
    ++rounds_total_;
    initiator_ = comm_players.size() == 2 ? static_cast<int>(coin_.next_u64() & 1)
                                          : comm_players.front();
    write_symbol(initiator_, comm_symbol_of(decisions.at(initiator_)));
    advance_turn(initiator_);
    if (comm_players.size() == 2 && phase_ == CommPhase::Loop) {
      // The co-initiator's symbol counts as its first turn.
      const int other = 1 - initiator_;
      write_symbol(other, comm_symbol_of(decisions.at(other)));
      advance_turn(other);
    }
    return {0.0, 0.0};
  }

  std::array<ActionKind, 2> acts{};
  for (int phys = 0; phys < 2; ++phys)
    acts[static_cast<std::size_t>(phys)] =
        env_.agent(phys).status == AgentStatus::Done ? ActionKind::Nothing : ActionKind::Forward;
  for (int slot : pend) {
    const auto it = decisions.find(slot);
    if (it == decisions.end()) continue;
    const int phys = physical_agent(slot);
    // A comm action that slipped past an exhausted loop budget (or a
    // comm-disabled run) degrades to Stop.
    acts[static_cast<std::size_t>(phys)] =
        is_comm_action(it->second) ? ActionKind::Stop : to_physical(phys, it->second);
  }
  env_.step(std::span<const ActionKind>(acts.data(), acts.size()));
  return terminal_scan();
}

// ---- Training ----

CommTrainResult train_comm(const CommTrainConfig& cfg) {
  if (cfg.net.input_dim != CommEnv::kObsDim)
    throw std::invalid_argument("train_comm: net.input_dim must match the observation size");
  if (cfg.net.n_actions != kCommActionCount)
    throw std::invalid_argument("train_comm: net.n_actions must cover the comm action set");
  if (cfg.episodes < 0) throw std::invalid_argument("train_comm: negative episode count");
  if (cfg.lr <= 0.0) throw std::invalid_argument("train_comm: lr must be positive");
  if (cfg.t_max < 1) throw std::invalid_argument("train_comm: t_max must be at least 1");
  if (cfg.log_every < 1) throw std::invalid_argument("train_comm: log_every must be at least 1");

  CommTrainResult res;
  res.params = Params::init(cfg.net, cfg.seed);
  Params rms = Params::zeros_like(cfg.net);
  Rng episode_seeds = Rng::derive(cfg.seed, 0x434d4d45ULL);

  long long window_hits = 0;
  for (long long ep = 0; ep < cfg.episodes; ++ep) {
    const std::uint64_t ep_seed = episode_seeds.next_u64();
    CommEnv env(ep_seed, cfg.comm_enabled);
    NetPolicy policy(res.params, Rng::derive(ep_seed, 0xAC5ULL));
    std::vector<Trajectory> segments;
    RolloutOptions opts;
    opts.record = true;
    opts.segment_len = cfg.t_max;
    opts.on_segment = [&](int, Trajectory&& t) { segments.push_back(std::move(t)); };
    run_episode(env, policy, opts);
    // Updates run after the episode so the policy stays fixed within it.
    for (const Trajectory& seg : segments) {
      if (seg.steps.empty()) continue;
      GradResult g = a3c_gradients(res.params, seg);
      const double norm = clip_global_norm(g.grads, cfg.clip_norm);
      if (!std::isfinite(norm) || !std::isfinite(g.total_loss))
        throw std::runtime_error("train_comm: non-finite loss or gradient");
      rmsprop_update(res.params, g.grads, rms, cfg.lr, cfg.rms_decay, cfg.rms_eps);
    }
    const bool ok = env.success();
    res.success.push_back(ok ? 1 : 0);
    window_hits += ok ? 1 : 0;
    res.transcripts.push_back({ep_seed, ok, env.rounds_total(), env.forced_end(), env.transcript()});
    if ((ep + 1) % cfg.log_every == 0) {
      res.curve.push_back(
          {ep + 1, static_cast<double>(window_hits) / static_cast<double>(cfg.log_every)});
      window_hits = 0;
    }
  }
  return res;
}

double trailing_success(const std::vector<std::uint8_t>& success, int window) {
  if (success.empty()) throw std::invalid_argument("trailing_success: empty history");
  if (window < 1) throw std::invalid_argument("trailing_success: window must be positive");
  const std::size_t n = std::min(success.size(), static_cast<std::size_t>(window));
  long long hits = 0;
  for (std::size_t i = success.size() - n; i < success.size(); ++i) hits += success[i];
  return static_cast<double>(hits) / static_cast<double>(n);
}

std::map<int, long long> round_histogram(const std::vector<CommTranscript>& log, int window,
                                         bool successful_only) {
  const std::size_t n =
      window <= 0 ? log.size() : std::min(log.size(), static_cast<std::size_t>(window));
  std::map<int, long long> hist;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) {
    if (successful_only && !log[i].success) continue;
    ++hist[log[i].rounds];
  }
  return hist;
}

std::string transcript_symbols(const CommTranscript& t) {
  if (t.symbols.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < t.symbols.size(); ++i) {
    if (i > 0) out += ',';
    out += comm_symbol_name(t.symbols[i].symbol);
  }
  return out;
}

std::string transcript_line(const CommTranscript& t) {
  std::string out = std::to_string(t.seed);
  out += t.success ? " 1 " : " 0 ";
  out += std::to_string(t.rounds);
  out += t.forced ? " 1 " : " 0 ";
  out += transcript_symbols(t);
  return out;
}

void write_transcript_log(const std::vector<CommTranscript>& log,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_transcript_log: cannot open " + path.string());
  for (const CommTranscript& t : log) out << transcript_line(t) << '\n';
}

double transcript_variability(const std::vector<CommTranscript>& log, int window) {
  if (log.empty()) throw std::invalid_argument("transcript_variability: empty log");
  if (window < 1) throw std::invalid_argument("transcript_variability: window must be positive");
  const std::size_t n = std::min(log.size(), static_cast<std::size_t>(window));
  std::set<std::string> distinct;
  long long total = 0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) {
    if (!log[i].success) continue;
    ++total;
    distinct.insert(transcript_symbols(log[i]));
  }
  return total == 0 ? 0.0 : static_cast<double>(distinct.size()) / static_cast<double>(total);
}

}  // namespace railab

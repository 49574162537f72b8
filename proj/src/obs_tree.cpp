#include "railab/obs_tree.hpp"

#include <algorithm>
#include <stdexcept>

namespace railab {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Relative turn of exit e for an agent arriving with heading h:
// 0 forward, 1 right, 2 reverse, 3 left.
int relative_turn(Heading h, Heading e) {
  return (static_cast<int>(e) - static_cast<int>(h) + 4) & 3;
}

int child_rank(ObservationBuilder::ChildOrder order, Heading arrival, Heading exit) {
  const int rel = relative_turn(arrival, exit);
  if (order == ObservationBuilder::ChildOrder::LeftFirst) {
    // left, forward, right
    switch (rel) {
      case 3: return 0;
      case 0: return 1;
      case 1: return 2;
      default: return 3;
    }
  }
  // forward, left, right
  switch (rel) {
    case 0: return 0;
    case 3: return 1;
    case 1: return 2;
    default: return 3;
  }
}

}  // namespace

Section trace_section(const RailGrid& grid, CellPos start, Heading entry,
                      std::optional<Heading> committed_exit, CellPos target, int max_len) {
  if (!grid.is_rail(start)) throw std::invalid_argument("trace_section: start is not rail");
  Section s;
  s.cells.push_back(start);
  s.entries.push_back(entry);
  CellPos cur = start;
  Heading h = entry;
  while (true) {
    if (cur == target) {
      s.kind = TerminalKind::Target;
      break;
    }
    Heading outs[kHeadingCount];
    const int n = grid.at(cur).moves(h, outs);
    Heading exit;
    if (cur == start && committed_exit) {
      exit = *committed_exit;
    } else {
      if (n == 0) {  // only possible for fictional entry states
        s.kind = TerminalKind::DeadEnd;
        break;
      }
      if (n >= 2) {
        s.kind = TerminalKind::Switch;
        s.branch_exits.assign(outs, outs + n);
        break;
      }
      if (outs[0] == reverse(h)) {
        s.kind = TerminalKind::DeadEnd;
        break;
      }
      exit = outs[0];
    }
    if (s.length() >= max_len) {
      s.kind = TerminalKind::Bound;
      break;
    }
    const CellPos next = cur.neighbor(exit);
    s.cells.push_back(next);
    s.entries.push_back(exit);
    cur = next;
    h = exit;
  }
  return s;
}

bool is_decision_point(const EnvState& env, int id) {
  const AgentState& a = env.agent(id);
  if (a.status != AgentStatus::Active) return false;
  if (a.malfunction_remaining > 0) return false;  // action is ignored anyway
  if (!a.would_cross()) return false;
  const CellPos next = a.position.neighbor(a.exit_heading);
  if (next == a.target) return false;  // arrival needs no choice
  return is_switch_for(env.grid(), next, a.exit_heading);
}

const DistanceField& ObservationBuilder::field_for(const EnvState& env, CellPos target) {
  if (bound_grid_ != &env.grid()) {
    fields_.clear();
    bound_grid_ = &env.grid();
  }
  auto& slot = fields_[{target.row, target.col}];
  if (!slot) slot = std::make_unique<DistanceField>(env.grid(), target);
  return *slot;
}

SectionNode ObservationBuilder::make_node(const EnvState& env, int id, const Section& sec) {
  SectionNode node;
  node.present = true;
  node.kind = sec.kind;
  node.length = sec.length();
  node.end = sec.end();

  const double span = env.grid().width() + env.grid().height();
  const AgentState& self = env.agent(id);

  const int d = field_for(env, self.target).distance(sec.end(), sec.end_entry());
  node.attrs[0] = d == kUnreachable ? 1.0 : clamp01(d / span);
  node.attrs[1] = clamp01(sec.length() / span);

  int others = 0;
  int opposing = 0;
  int max_malf = 0;
  double min_speed = 1.0;
  for (const AgentState& other : env.agents()) {
    if (other.id == id || other.status != AgentStatus::Active) continue;
    for (std::size_t i = 0; i < sec.cells.size(); ++i) {
      if (!(other.position == sec.cells[i])) continue;
      ++others;
      if (other.heading == reverse(sec.entries[i])) ++opposing;
      max_malf = std::max(max_malf, other.malfunction_remaining);
      min_speed = std::min(min_speed, other.speed());
      break;
    }
  }
  const double n_agents = env.agent_count();
  node.attrs[2] = others / n_agents;
  node.attrs[3] = opposing / n_agents;
  const int max_dur = env.malfunction_params().max_duration;
  node.attrs[4] = max_dur > 0 ? clamp01(static_cast<double>(max_malf) / max_dur) : 0.0;
  node.attrs[5] = others > 0 ? min_speed : 1.0;
  node.attrs[6] = sec.kind == TerminalKind::Target ? 1.0 : 0.0;
  return node;
}

SectionTree ObservationBuilder::build_tree(const EnvState& env, int id) {
  SectionTree tree;
  const AgentState& a = env.agent(id);
  if (a.status == AgentStatus::Done) return tree;

  const RailGrid& grid = env.grid();
  const int max_len = grid.width() + grid.height();

  CellPos pos = a.position;
  Heading entry = a.heading;
  Heading committed = a.exit_heading;
  if (a.status == AgentStatus::Ready) {
    pos = a.start;
    committed = a.depart_heading;
    // The agent never actually entered its start cell; reconstruct an entry
    // direction consistent with the committed departure.
    bool found = false;
    for (Heading h : all_headings())
      if (grid.at(pos).get(h, committed)) {
        entry = h;
        found = true;
        break;
      }
    if (!found) throw std::logic_error("build_tree: undepartable ready agent");
  }

  std::array<Section, SectionTree::kNodeCount> sections;
  sections[0] = trace_section(grid, pos, entry, committed, a.target, max_len);
  tree.nodes[0] = make_node(env, id, sections[0]);

  for (int i = 0; 2 * i + 2 < SectionTree::kNodeCount; ++i) {
    if (!tree.nodes[i].present || tree.nodes[i].kind != TerminalKind::Switch) continue;
    const Section& sec = sections[i];
    const Heading arrival = sec.end_entry();
    std::vector<Heading> exits = sec.branch_exits;
    std::sort(exits.begin(), exits.end(), [&](Heading x, Heading y) {
      return child_rank(order_, arrival, x) < child_rank(order_, arrival, y);
    });
    const int n_children = std::min<int>(2, static_cast<int>(exits.size()));
    for (int k = 0; k < n_children; ++k) {
      const Heading e = exits[static_cast<std::size_t>(k)];
      const CellPos child_start = sec.end().neighbor(e);
      sections[2 * i + 1 + k] =
          trace_section(grid, child_start, e, std::nullopt, a.target, max_len);
      tree.nodes[2 * i + 1 + k] = make_node(env, id, sections[2 * i + 1 + k]);
    }
  }
  return tree;
}

std::vector<double> ObservationBuilder::flatten(const SectionTree& tree, const EnvState& env,
                                                int id) const {
  std::vector<double> v(kObsDim, 0.0);
  for (int i = 0; i < SectionTree::kNodeCount; ++i) {
    const SectionNode& node = tree.nodes[i];
    if (node.present) {
      for (int k = 0; k < kAttrCount; ++k) v[i * kAttrCount + k] = node.attrs[k];
    } else {
      v[i * kAttrCount + 0] = 1.0;  // absent branches read as "infinitely far"
    }
  }
  const AgentState& a = env.agent(id);
  const int base = SectionTree::kNodeCount * kAttrCount;
  v[base + 0] = a.speed();
  v[base + 1] = a.progress();
  const int max_dur = env.malfunction_params().max_duration;
  v[base + 2] =
      max_dur > 0 ? clamp01(static_cast<double>(a.malfunction_remaining) / max_dur) : 0.0;
  v[base + 3] = a.status == AgentStatus::Ready ? 1.0 : 0.0;
  v[base + 4] = a.status == AgentStatus::Active ? 1.0 : 0.0;
  v[base + 5] = a.status == AgentStatus::Done ? 1.0 : 0.0;
  v[base + 6] = is_decision_point(env, id) ? 1.0 : 0.0;
  return v;
}

std::vector<double> ObservationBuilder::build(const EnvState& env, int id) {
  const AgentState& a = env.agent(id);
  if (a.status == AgentStatus::Done) return std::vector<double>(kObsDim, 0.0);
  return flatten(build_tree(env, id), env, id);
}

}  // namespace railab

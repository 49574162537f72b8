#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "railab/distance.hpp"
#include "railab/env_core.hpp"

namespace railab {

// Why a section ended.
enum class TerminalKind : std::uint8_t { Switch = 0, DeadEnd = 1, Target = 2, Bound = 3 };

// A section is a maximal choice-free run of track: it extends from a start
// cell until it hits a usable switch, a dead end, the agent's own target, or
// the length bound. The terminal cell is part of the section.
struct Section {
  std::vector<CellPos> cells;
  std::vector<Heading> entries;  // travel direction on entering cells[i]
  TerminalKind kind = TerminalKind::Bound;
  std::vector<Heading> branch_exits;  // populated for Switch terminals
  CellPos end() const { return cells.back(); }
  Heading end_entry() const { return entries.back(); }
  int length() const { return static_cast<int>(cells.size()); }
};

// Follows the track from (start, entry). `committed_exit` is the exit the
// agent has already chosen for the start cell; with it set, a switch at the
// start cell does not terminate the section. Without it, a switch ends the
// section immediately (also when it is the first cell).
Section trace_section(const RailGrid& grid, CellPos start, Heading entry,
                      std::optional<Heading> committed_exit, CellPos target, int max_len);

struct SectionNode {
  bool present = false;
  TerminalKind kind = TerminalKind::Bound;
  int length = 0;
  CellPos end{-1, -1};
  std::array<double, 7> attrs{};  // see ObservationBuilder for the layout
};

struct SectionTree {
  // Complete binary tree in level order: children of node i are 2i+1, 2i+2.
  static constexpr int kNodeCount = 15;
  std::array<SectionNode, kNodeCount> nodes;
};

// True when the agent must pick a direction this step: it is Active, about
// to complete its cell, and the next cell branches for its heading. Entry
// from the Ready state and plain running are handled automatically by
// masked policies.
bool is_decision_point(const EnvState& env, int id);

// Builds the fixed 112-dim observation: 15 nodes x 7 attributes in level
// order, then 7 agent features.
//
// Node attributes:
//   0  distance from section end to own target / (W+H), clamped; 1 if
//      unreachable (and for absent nodes)
//   1  section length / (W+H), clamped
//   2  other agents in section / n_agents
//   3  of those, opposing (facing against our travel direction) / n_agents
//   4  max malfunction_remaining in section / max_duration
//   5  min speed fraction among other agents in section (1 when empty)
//   6  own target inside the section (0/1)
// Agent features:
//   speed fraction, cell progress, own malfunction_remaining / max_duration,
//   status one-hot (Ready, Active, Done), decision-point flag.
class ObservationBuilder {
 public:
  enum class ChildOrder { LeftFirst, ForwardFirst };

  static constexpr int kAttrCount = 7;
  static constexpr int kAgentFeatureCount = 7;
  static constexpr int kObsDim = SectionTree::kNodeCount * kAttrCount + kAgentFeatureCount;

  explicit ObservationBuilder(ChildOrder order = ChildOrder::LeftFirst) : order_(order) {}

  SectionTree build_tree(const EnvState& env, int id);

  // Done agents get the all-zero vector.
  std::vector<double> build(const EnvState& env, int id);

  std::vector<double> flatten(const SectionTree& tree, const EnvState& env, int id) const;

 private:
  const DistanceField& field_for(const EnvState& env, CellPos target);
  SectionNode make_node(const EnvState& env, int id, const Section& sec);

  ChildOrder order_;
  const RailGrid* bound_grid_ = nullptr;
  std::map<std::pair<int, int>, std::unique_ptr<DistanceField>> fields_;
};

}  // namespace railab

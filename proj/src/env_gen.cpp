#include "railab/env_gen.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <stdexcept>

#include "railab/distance.hpp"
#include "railab/grid_builder.hpp"
#include "railab/rng.hpp"

namespace railab {

namespace {

struct RetryLayout {};  // internal: discard this attempt, redraw

Heading direction_toward(CellPos from, CellPos to) {
  for (Heading h : all_headings())
    if (from.neighbor(h) == to) return h;
  throw std::logic_error("direction_toward: cells not adjacent");
}

int isign(int v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

// Inclusive straight run appended to `path`.
void push_line(std::vector<CellPos>& path, CellPos from, CellPos to) {
  const int dr = isign(to.row - from.row);
  const int dc = isign(to.col - from.col);
  CellPos cur = from;
  while (true) {
    path.push_back(cur);
    if (cur == to) break;
    cur = {cur.row + dr, cur.col + dc};
  }
}

std::vector<CellPos> l_path(CellPos a, CellPos b, bool row_first) {
  const CellPos elbow = row_first ? CellPos{a.row, b.col} : CellPos{b.row, a.col};
  std::vector<CellPos> path;
  push_line(path, a, elbow);
  if (!(elbow == b)) {
    path.pop_back();
    push_line(path, elbow, b);
  }
  return path;
}

int chebyshev(CellPos a, CellPos b) {
  return std::max(std::abs(a.row - b.row), std::abs(a.col - b.col));
}

EnvSpec attempt_layout(const GeneratorParams& p, Rng& rng) {
  const int w = p.width;
  const int h = p.height;

  // --- Hubs ---
  const int n_hubs = std::clamp(2 + (w * h) / 150, 2, 6);
  const int sep = std::max(2, (w + h) / 6);
  std::vector<CellPos> hubs;
  for (int i = 0; i < n_hubs; ++i) {
    CellPos best{-1, -1};
    for (int attempt = 0; attempt < 40; ++attempt) {
      const CellPos cand{1 + static_cast<int>(rng.next_below(h - 2)),
                         1 + static_cast<int>(rng.next_below(w - 2))};
      bool distinct = true;
      bool spread = true;
      for (CellPos q : hubs) {
        if (q == cand) distinct = false;
        if (chebyshev(q, cand) < sep) spread = false;
      }
      if (!distinct) continue;
      best = cand;
      if (spread) break;
    }
    if (best.row < 0) throw RetryLayout{};
    hubs.push_back(best);
  }

  // --- Edges: random spanning tree plus extra loops for alternate routes ---
  std::vector<std::pair<int, int>> edges;
  for (int i = 1; i < n_hubs; ++i)
    edges.push_back({static_cast<int>(rng.next_below(i)), i});
  const int extras = n_hubs / 2;
  for (int e = 0; e < extras; ++e) {
    const int a = static_cast<int>(rng.next_below(n_hubs));
    const int b = static_cast<int>(rng.next_below(n_hubs));
    if (a == b) continue;
    const auto edge = std::minmax(a, b);
    if (std::find(edges.begin(), edges.end(), std::make_pair(edge.first, edge.second)) ==
        edges.end())
      edges.push_back({edge.first, edge.second});
  }

  // --- Corridors ---
  GridBuilder builder(w, h);
  std::vector<std::array<bool, 4>> hub_faces(n_hubs, {false, false, false, false});
  for (auto [ia, ib] : edges) {
    const CellPos a = hubs[ia];
    const CellPos b = hubs[ib];
    const auto path = l_path(a, b, rng.next_bool());
    if (path.size() < 2) throw RetryLayout{};
    builder.lay_path(path, /*cap_ends=*/false);
    hub_faces[ia][static_cast<int>(direction_toward(a, path[1]))] = true;
    hub_faces[ib][static_cast<int>(direction_toward(b, path[path.size() - 2]))] = true;
  }

  // --- Hub wiring: connect each incident face to its neighbors ---
  for (int i = 0; i < n_hubs; ++i) {
    std::vector<Heading> faces;
    for (Heading f : all_headings())
      if (hub_faces[i][static_cast<int>(f)]) faces.push_back(f);
    const CellPos at = hubs[i];
    switch (faces.size()) {
      case 0: throw RetryLayout{};
      case 1: builder.add_pair(at, faces[0], faces[0]); break;
      case 2: builder.add_pair(at, faces[0], faces[1]); break;
      case 3:
        builder.add_pair(at, faces[0], faces[1]);
        builder.add_pair(at, faces[0], faces[2]);
        builder.add_pair(at, faces[1], faces[2]);
        break;
      default:
        // Two straights plus two curves keeps every face at fan 2.
        builder.add_pair(at, Heading::North, Heading::South);
        builder.add_pair(at, Heading::East, Heading::West);
        builder.add_pair(at, Heading::North, Heading::East);
        builder.add_pair(at, Heading::South, Heading::West);
        break;
    }
  }

  EnvSpec spec;
  try {
    spec.grid = builder.build(2);
  } catch (const std::invalid_argument&) {
    throw RetryLayout{};  // fan overflow where corridors piled up
  }
  if (!spec.grid.validate().empty()) throw RetryLayout{};

  // --- Roster ---
  std::vector<std::pair<CellPos, Heading>> spots;  // departable (cell, heading)
  std::vector<CellPos> rail_cells;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const CellPos pos{r, c};
      const TransitionMap& tm = spec.grid.at(pos);
      if (!tm.is_rail()) continue;
      rail_cells.push_back(pos);
      for (Heading out : all_headings()) {
        bool departable = false;
        for (Heading in : all_headings())
          if (tm.get(in, out)) departable = true;
        if (departable) spots.push_back({pos, out});
      }
    }
  if (spots.empty() || rail_cells.size() < static_cast<std::size_t>(2 * p.n_agents))
    throw RetryLayout{};

  const int base_min_dist =
      p.min_target_distance > 0 ? p.min_target_distance : std::max(3, (w + h) / 4);
  std::set<std::pair<int, int>> used_starts, used_targets;
  for (int i = 0; i < p.n_agents; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
      const int min_dist = attempt < 40 ? base_min_dist : 1;
      const auto [start, heading] = spots[rng.next_below(static_cast<std::uint32_t>(spots.size()))];
      if (used_starts.count({start.row, start.col})) continue;
      const CellPos target =
          rail_cells[rng.next_below(static_cast<std::uint32_t>(rail_cells.size()))];
      if (target == start || used_targets.count({target.row, target.col})) continue;
      const DistanceField df(spec.grid, target);
      const int d = df.distance(start, heading);
      if (d == kUnreachable || d < min_dist) continue;
      AgentSpec agent;
      agent.start = start;
      agent.heading = heading;
      agent.target = target;
      agent.speed_twelfths = p.mixed_speeds ? std::array<int, 4>{12, 6, 4, 3}[rng.next_below(4)] : 12;
      spec.roster.push_back(agent);
      used_starts.insert({start.row, start.col});
      used_targets.insert({target.row, target.col});
      placed = true;
    }
    if (!placed) throw RetryLayout{};
  }

  spec.max_steps = (p.mixed_speeds ? 8 : 4) * (w + h);
  spec.malfunction = p.malfunction;
  return spec;
}

}  // namespace

EnvSpec generate_env(const GeneratorParams& p, std::uint64_t seed) {
  if (p.width < 6 || p.height < 6)
    throw std::invalid_argument("generate_env: grid must be at least 6x6");
  if (p.n_agents < 1) throw std::invalid_argument("generate_env: need at least one agent");
  if (p.malfunction.rate < 0.0 || p.malfunction.rate > 1.0)
    throw std::invalid_argument("generate_env: malfunction rate outside [0, 1]");

  for (std::uint64_t attempt = 0; attempt < 200; ++attempt) {
    Rng rng = Rng::derive(seed, 0x47454eULL + attempt);
    try {
      return attempt_layout(p, rng);
    } catch (const RetryLayout&) {
      continue;
    }
  }
  throw std::runtime_error("generate_env: no valid layout after 200 attempts");
}

const std::vector<CurriculumStage>& curriculum_stages() {
  static const std::vector<CurriculumStage> stages = {
      {10, 10, 2}, {15, 15, 3}, {25, 25, 4}, {35, 35, 8}, {50, 50, 14}};
  return stages;
}

Curriculum::Curriculum(int window, double threshold)
    : Curriculum(curriculum_stages(), window, threshold) {}

Curriculum::Curriculum(std::vector<CurriculumStage> stages, int window, double threshold)
    : stages_(std::move(stages)), window_(window), threshold_(threshold) {
  if (stages_.empty()) throw std::invalid_argument("Curriculum: stage list must be nonempty");
  if (window < 1) throw std::invalid_argument("Curriculum: window must be >= 1");
  if (threshold <= 0.0 || threshold > 1.0)
    throw std::invalid_argument("Curriculum: threshold must be in (0, 1]");
}

double Curriculum::window_mean() const {
  if (recent_.empty()) return 0.0;
  // Summed fresh every call: an incremental sum would accumulate rounding
  // drift and make the inclusive threshold comparison unreliable.
  double sum = 0.0;
  for (double v : recent_) sum += v;
  return sum / static_cast<double>(recent_.size());
}

bool Curriculum::at_final_stage() const {
  return index_ + 1 == static_cast<int>(stages_.size());
}

bool Curriculum::record_episode(double arrival_fraction) {
  if (arrival_fraction < 0.0 || arrival_fraction > 1.0)
    throw std::invalid_argument("Curriculum: arrival fraction outside [0, 1]");
  ++episodes_in_stage_;
  recent_.push_back(arrival_fraction);
  if (static_cast<int>(recent_.size()) > window_) recent_.pop_front();
  if (at_final_stage()) return false;
  if (static_cast<int>(recent_.size()) < window_) return false;
  if (window_mean() < threshold_) return false;
  ++index_;
  episodes_in_stage_ = 0;
  recent_.clear();
  return true;
}

}  // namespace railab

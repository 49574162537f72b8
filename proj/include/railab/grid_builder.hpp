#pragma once

#include <set>
#include <utility>
#include <vector>

#include "railab/rail_grid.hpp"

namespace railab {

// Builds transition maps from face connections. A track through a cell is a
// pair of faces {a,b}: traffic entering through a leaves through b and vice
// versa. A pair {a,a} is a dead end (enter, reverse, leave the same way).
// Deriving the 16-bit masks from symmetric face pairs keeps every laid path
// consistent with the grid validator by construction.
class GridBuilder {
 public:
  GridBuilder(int width, int height) : width_(width), height_(height), pairs_(width * height) {}

  int width() const { return width_; }
  int height() const { return height_; }

  bool in_bounds(CellPos p) const {
    return p.row >= 0 && p.row < height_ && p.col >= 0 && p.col < width_;
  }

  bool has_rail(CellPos p) const { return !pair_set(p).empty(); }

  // Face pair present at p?
  bool has_pair(CellPos p, Heading a, Heading b) const {
    return pair_set(p).count(canonical(a, b)) > 0;
  }

  void add_pair(CellPos p, Heading a, Heading b) { pair_set(p).insert(canonical(a, b)); }

  // Number of distinct exit faces reachable when entering through `face`,
  // counting a dead-end pair as one.
  int fan(CellPos p, Heading face) const {
    int n = 0;
    for (const auto& pr : pair_set(p))
      if (pr.first == face || pr.second == face) ++n;
    return n;
  }

  // Adds the straight/curved pairs for a path given as a cell sequence.
  // Consecutive cells must be 4-adjacent. Endpoints get dead-end pairs when
  // `cap_ends` is true, otherwise the boundary faces are left unconnected
  // (caller must join them onto something).
  void lay_path(const std::vector<CellPos>& cells, bool cap_ends = true);

  // All face pairs at p (canonical order).
  std::vector<std::pair<Heading, Heading>> pairs(CellPos p) const {
    return {pair_set(p).begin(), pair_set(p).end()};
  }

  // Materializes the transition maps. Throws std::invalid_argument if any
  // pair points off-grid or any entry face ends up with more than
  // `max_fan` exits.
  RailGrid build(int max_fan = 2) const;

 private:
  using Pair = std::pair<Heading, Heading>;

  static Pair canonical(Heading a, Heading b) {
    if (static_cast<int>(a) > static_cast<int>(b)) std::swap(a, b);
    return {a, b};
  }

  std::set<Pair>& pair_set(CellPos p) { return pairs_[p.row * width_ + p.col]; }
  const std::set<Pair>& pair_set(CellPos p) const { return pairs_[p.row * width_ + p.col]; }

  int width_;
  int height_;
  std::vector<std::set<Pair>> pairs_;
};

}  // namespace railab

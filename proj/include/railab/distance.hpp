#pragma once

#include <vector>

#include "railab/rail_grid.hpp"

namespace railab {

constexpr int kUnreachable = -1;

// Exact shortest-path distances, in cell transitions, from every directed
// state (cell, entry heading) to one target cell. Built once per target with
// a multi-source BFS over the reversed transition graph; arrival counts from
// any entry heading.
class DistanceField {
 public:
  DistanceField(const RailGrid& grid, CellPos target);

  CellPos target() const { return target_; }

  // Transitions needed to reach the target from `cell` after entering it
  // while travelling `heading`, or kUnreachable.
  int distance(CellPos cell, Heading heading) const {
    return dist_[index(cell, heading)];
  }

 private:
  std::size_t index(CellPos cell, Heading heading) const {
    return (static_cast<std::size_t>(cell.row) * width_ + cell.col) * 4 +
           static_cast<std::size_t>(heading);
  }

  int width_ = 0;
  int height_ = 0;
  CellPos target_;
  std::vector<int> dist_;
};

}  // namespace railab

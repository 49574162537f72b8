#include "railab/distance.hpp"

#include <deque>
#include <stdexcept>

namespace railab {

DistanceField::DistanceField(const RailGrid& grid, CellPos target)
    : width_(grid.width()), height_(grid.height()), target_(target) {
  if (!grid.in_bounds(target) || !grid.at(target).is_rail())
    throw std::invalid_argument("DistanceField: target is not on rail");

  const std::size_t n = static_cast<std::size_t>(width_) * height_ * 4;
  dist_.assign(n, kUnreachable);

  // Reverse adjacency: for the forward edge (cell, h) --exit e--> (cell', e)
  // we record that (cell', e) is reached from (cell, h).
  std::vector<std::vector<std::uint32_t>> rev(n);
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      const CellPos cell{r, c};
      const TransitionMap& tm = grid.at(cell);
      if (!tm.is_rail()) continue;
      for (int hi = 0; hi < 4; ++hi) {
        const Heading h = static_cast<Heading>(hi);
        Heading outs[kHeadingCount];
        const int n_out = tm.moves(h, outs);
        for (int k = 0; k < n_out; ++k) {
          const CellPos next = cell.neighbor(outs[k]);
          rev[index(next, outs[k])].push_back(static_cast<std::uint32_t>(index(cell, h)));
        }
      }
    }
  }

  std::deque<std::uint32_t> queue;
  for (int hi = 0; hi < 4; ++hi) {
    const std::size_t i = index(target_, static_cast<Heading>(hi));
    dist_[i] = 0;
    queue.push_back(static_cast<std::uint32_t>(i));
  }
  while (!queue.empty()) {
    const std::uint32_t cur = queue.front();
    queue.pop_front();
    const int d = dist_[cur];
    for (std::uint32_t prev : rev[cur]) {
      if (dist_[prev] != kUnreachable) continue;
      dist_[prev] = d + 1;
      queue.push_back(prev);
    }
  }
}

}  // namespace railab

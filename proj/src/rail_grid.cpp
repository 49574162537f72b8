#include "railab/rail_grid.hpp"

#include <sstream>
#include <stdexcept>

#include "railab/hash.hpp"

namespace railab {

RailGrid::RailGrid(int width, int height) : width_(width), height_(height) {
  if (width < 2 || height < 1)
    throw std::invalid_argument("RailGrid: width must be >= 2 and height >= 1");
  cells_.assign(static_cast<std::size_t>(width) * height, TransitionMap{});
}

std::string RailGrid::validate() const {
  std::ostringstream oss;
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      const CellPos pos{r, c};
      const TransitionMap& tm = at(pos);
      if (!tm.is_rail()) continue;
      for (Heading in : all_headings()) {
        Heading outs[kHeadingCount];
        const int n = tm.moves(in, outs);
        for (int i = 0; i < n; ++i) {
          const Heading out = outs[i];
          if (out == reverse(in) && n != 1) {
            oss << "cell (" << r << "," << c << "): reverse move for incoming "
                << heading_name(in) << " is not the sole option";
            return oss.str();
          }
          const CellPos nb = pos.neighbor(out);
          if (!in_bounds(nb)) {
            oss << "cell (" << r << "," << c << "): transition " << heading_name(in) << "->"
                << heading_name(out) << " leaves the grid";
            return oss.str();
          }
          if (!at(nb).is_rail()) {
            oss << "cell (" << r << "," << c << "): transition " << heading_name(in) << "->"
                << heading_name(out) << " enters a non-rail cell";
            return oss.str();
          }
          if (at(nb).move_count(out) == 0) {
            oss << "cell (" << r << "," << c << "): neighbor (" << nb.row << "," << nb.col
                << ") has no continuation for incoming " << heading_name(out);
            return oss.str();
          }
        }
      }
    }
  }
  return {};
}

std::uint64_t RailGrid::content_hash() const {
  Fnv1a h;
  h.i32(width_).i32(height_);
  for (const TransitionMap& tm : cells_) {
    const std::uint16_t b = tm.bits();
    h.bytes(&b, 2);
  }
  return h.value();
}

std::vector<Heading> allowed_moves(const RailGrid& grid, CellPos cell, Heading heading) {
  if (!grid.in_bounds(cell)) throw std::invalid_argument("allowed_moves: cell out of bounds");
  const TransitionMap& tm = grid.at(cell);
  if (!tm.is_rail()) throw std::invalid_argument("allowed_moves: cell is not rail");
  Heading outs[kHeadingCount];
  const int n = tm.moves(heading, outs);
  return std::vector<Heading>(outs, outs + n);
}

bool is_switch_for(const RailGrid& grid, CellPos cell, Heading heading) {
  if (!grid.in_bounds(cell)) throw std::invalid_argument("is_switch_for: cell out of bounds");
  const TransitionMap& tm = grid.at(cell);
  if (!tm.is_rail()) throw std::invalid_argument("is_switch_for: cell is not rail");
  return tm.move_count(heading) >= 2;
}

}  // namespace railab

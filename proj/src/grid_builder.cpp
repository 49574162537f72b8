#include "railab/grid_builder.hpp"

#include <sstream>
#include <stdexcept>

namespace railab {

namespace {

Heading direction_between(CellPos from, CellPos to) {
  for (Heading h : all_headings())
    if (from.neighbor(h) == to) return h;
  throw std::invalid_argument("lay_path: cells are not 4-adjacent");
}

}  // namespace

void GridBuilder::lay_path(const std::vector<CellPos>& cells, bool cap_ends) {
  if (cells.empty()) return;
  for (CellPos c : cells)
    if (!in_bounds(c)) throw std::invalid_argument("lay_path: cell out of bounds");

  if (cells.size() == 1) {
    if (cap_ends) throw std::invalid_argument("lay_path: single-cell path has no orientation");
    return;
  }

  for (std::size_t i = 0; i < cells.size(); ++i) {
    // Faces used by this path at cell i: toward the previous and next cell.
    const bool has_prev = i > 0;
    const bool has_next = i + 1 < cells.size();
    const Heading to_prev = has_prev ? direction_between(cells[i], cells[i - 1]) : Heading::North;
    const Heading to_next = has_next ? direction_between(cells[i], cells[i + 1]) : Heading::North;
    if (has_prev && has_next) {
      add_pair(cells[i], to_prev, to_next);
    } else if (cap_ends) {
      const Heading face = has_prev ? to_prev : to_next;
      add_pair(cells[i], face, face);
    }
  }
}

RailGrid GridBuilder::build(int max_fan) const {
  RailGrid grid(width_, height_);
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      const CellPos pos{r, c};
      const auto& ps = pair_set(pos);
      if (ps.empty()) continue;
      TransitionMap tm;
      for (const auto& [a, b] : ps) {
        const CellPos na = pos.neighbor(a);
        const CellPos nb = pos.neighbor(b);
        if (!in_bounds(na) || !in_bounds(nb)) {
          std::ostringstream oss;
          oss << "GridBuilder: pair at (" << r << "," << c << ") points off-grid";
          throw std::invalid_argument(oss.str());
        }
        // {a,b}: enter through a (moving reverse(a)... i.e. direction
        // opposite the face) and leave through b.
        tm.set(reverse(a), b);
        tm.set(reverse(b), a);
      }
      for (Heading face : all_headings()) {
        if (fan(pos, face) > max_fan) {
          std::ostringstream oss;
          oss << "GridBuilder: cell (" << r << "," << c << ") exceeds fan " << max_fan
              << " on face " << heading_name(face);
          throw std::invalid_argument(oss.str());
        }
      }
      grid.at(pos) = tm;
    }
  }
  return grid;
}

}  // namespace railab

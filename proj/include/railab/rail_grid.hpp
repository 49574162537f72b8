#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "railab/heading.hpp"

namespace railab {

// 16 flags indexed by (incoming heading, outgoing heading). The incoming
// heading is the agent's direction of travel when it entered the cell; a set
// flag means it may leave the cell moving in the outgoing direction.
class TransitionMap {
 public:
  TransitionMap() = default;
  explicit TransitionMap(std::uint16_t bits) : bits_(bits) {}

  std::uint16_t bits() const { return bits_; }

  bool get(Heading in, Heading out) const { return (bits_ >> index(in, out)) & 1u; }

  void set(Heading in, Heading out, bool value = true) {
    const std::uint16_t mask = static_cast<std::uint16_t>(1u << index(in, out));
    if (value)
      bits_ |= mask;
    else
      bits_ &= static_cast<std::uint16_t>(~mask);
  }

  bool is_rail() const { return bits_ != 0; }

  // Outgoing options for one incoming heading, in enum order.
  int moves(Heading in, Heading out_buf[kHeadingCount]) const {
    int n = 0;
    for (Heading out : all_headings())
      if (get(in, out)) out_buf[n++] = out;
    return n;
  }

  int move_count(Heading in) const {
    const std::uint16_t nib = (bits_ >> (static_cast<int>(in) * 4)) & 0xF;
    return __builtin_popcount(nib);
  }

  bool operator==(const TransitionMap&) const = default;

 private:
  static int index(Heading in, Heading out) {
    return static_cast<int>(in) * 4 + static_cast<int>(out);
  }

  std::uint16_t bits_ = 0;
};

// Dense grid of transition maps. Immutable once built; EnvState instances
// share one grid by pointer.
class RailGrid {
 public:
  RailGrid(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

  bool in_bounds(CellPos p) const {
    return p.row >= 0 && p.row < height_ && p.col >= 0 && p.col < width_;
  }

  const TransitionMap& at(CellPos p) const { return cells_[p.row * width_ + p.col]; }
  TransitionMap& at(CellPos p) { return cells_[p.row * width_ + p.col]; }

  bool is_rail(CellPos p) const { return in_bounds(p) && at(p).is_rail(); }

  // Checks the grid-wide consistency rules: every set flag points to an
  // in-bounds rail neighbor that can be continued from, and reverse moves
  // occur only as the sole option (dead ends). Returns a description of the
  // first violation, or an empty string when the grid is valid.
  std::string validate() const;

  std::uint64_t content_hash() const;

  bool operator==(const RailGrid&) const = default;

 private:
  int width_;
  int height_;
  std::vector<TransitionMap> cells_;
};

// Outgoing headings for an agent that entered `cell` travelling in
// direction `heading`. Throws std::invalid_argument off-rail.
std::vector<Heading> allowed_moves(const RailGrid& grid, CellPos cell, Heading heading);

// True when the cell offers at least two outgoing options for this travel
// direction. Usability is direction-relative: a junction that only branches
// for opposing traffic is not a switch from this side.
bool is_switch_for(const RailGrid& grid, CellPos cell, Heading heading);

}  // namespace railab

#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace railab {

// Travel direction on the grid. Also doubles as a cell face: the face named
// North is the edge an agent crosses when leaving the cell northward.
enum class Heading : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };

constexpr int kHeadingCount = 4;

constexpr std::array<Heading, 4> all_headings() {
  return {Heading::North, Heading::East, Heading::South, Heading::West};
}

constexpr Heading turn_right(Heading h) {
  return static_cast<Heading>((static_cast<int>(h) + 1) & 3);
}

constexpr Heading turn_left(Heading h) {
  return static_cast<Heading>((static_cast<int>(h) + 3) & 3);
}

constexpr Heading reverse(Heading h) {
  return static_cast<Heading>((static_cast<int>(h) + 2) & 3);
}

constexpr int row_delta(Heading h) {
  constexpr int d[4] = {-1, 0, 1, 0};
  return d[static_cast<int>(h)];
}

constexpr int col_delta(Heading h) {
  constexpr int d[4] = {0, 1, 0, -1};
  return d[static_cast<int>(h)];
}

inline const char* heading_name(Heading h) {
  constexpr const char* names[4] = {"N", "E", "S", "W"};
  return names[static_cast<int>(h)];
}

struct CellPos {
  int row = 0;
  int col = 0;

  bool operator==(const CellPos&) const = default;

  CellPos neighbor(Heading h) const { return {row + row_delta(h), col + col_delta(h)}; }
};

}  // namespace railab

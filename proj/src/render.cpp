#include "railab/render.hpp"

#include <array>
#include <vector>

#include "railab/rail_grid.hpp"

namespace railab {

namespace {

// Which of the four cell sides carry rail: a transition entered traveling h
// crosses the reverse(h) side and leaves through its exit side.
std::array<bool, 4> rail_sides(const RailGrid& grid, CellPos cell) {
  std::array<bool, 4> sides{};
  if (!grid.is_rail(cell)) return sides;
  for (Heading h : all_headings()) {
    const std::vector<Heading> exits = allowed_moves(grid, cell, h);
    if (exits.empty()) continue;
    sides[static_cast<std::size_t>(reverse(h))] = true;
    for (Heading g : exits) sides[static_cast<std::size_t>(g)] = true;
  }
  return sides;
}

char track_glyph(const std::array<bool, 4>& sides) {
  const bool n = sides[static_cast<std::size_t>(Heading::North)];
  const bool e = sides[static_cast<std::size_t>(Heading::East)];
  const bool s = sides[static_cast<std::size_t>(Heading::South)];
  const bool w = sides[static_cast<std::size_t>(Heading::West)];
  const int count = int(n) + int(e) + int(s) + int(w);
  if (count == 0) return ' ';
  if (count == 1) return (n || s) ? '|' : '-';
  if (n && s && !e && !w) return '|';
  if (e && w && !n && !s) return '-';
  return '+';  // corner or switch
}

std::vector<std::string> track_canvas(const RailGrid& grid) {
  std::vector<std::string> rows(static_cast<std::size_t>(grid.height()),
                                std::string(static_cast<std::size_t>(grid.width()), ' '));
  for (int r = 0; r < grid.height(); ++r)
    for (int c = 0; c < grid.width(); ++c)
      rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
          track_glyph(rail_sides(grid, {r, c}));
  return rows;
}

void put(std::vector<std::string>& rows, CellPos p, char glyph) {
  rows[static_cast<std::size_t>(p.row)][static_cast<std::size_t>(p.col)] = glyph;
}

char target_glyph(int id) { return static_cast<char>('a' + id % 26); }
char agent_glyph(int id) { return static_cast<char>('0' + id % 10); }

std::string join(const std::vector<std::string>& rows) {
  std::string out;
  for (const std::string& row : rows) {
    out += row;
    out += '\n';
  }
  return out;
}

}  // namespace

std::string render_grid(const RailGrid& grid) { return join(track_canvas(grid)); }

std::string render_scene(const EnvSpec& spec) {
  std::vector<std::string> rows = track_canvas(spec.grid);
  for (std::size_t i = 0; i < spec.roster.size(); ++i)
    put(rows, spec.roster[i].target, target_glyph(static_cast<int>(i)));
  for (std::size_t i = 0; i < spec.roster.size(); ++i)
    put(rows, spec.roster[i].start, agent_glyph(static_cast<int>(i)));
  return join(rows);
}

std::string render_state(const EnvState& env) {
  std::vector<std::string> rows = track_canvas(env.grid());
  for (int i = 0; i < env.agent_count(); ++i) put(rows, env.agent(i).target, target_glyph(i));
  for (int i = 0; i < env.agent_count(); ++i) {
    const AgentState& a = env.agent(i);
    if (a.status == AgentStatus::Active) put(rows, a.position, agent_glyph(i));
  }
  return join(rows);
}

}  // namespace railab

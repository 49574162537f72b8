#pragma once

#include <string>

#include "railab/env_core.hpp"
#include "railab/env_io.hpp"

namespace railab {

// Plain-ASCII frames, one grid row per line. Track glyphs come from cell
// connectivity: '-' and '|' for straight runs and stubs, '+' for corners
// and switches, ' ' for bare ground. Overlays win over track: targets draw
// as letters ('a' + id, wrapping), agents on the grid as digits (id mod
// 10). Agents still waiting to enter and agents already done are not drawn;
// a cell that is both someone's target and occupied shows the occupant.
std::string render_grid(const RailGrid& grid);

// Roster overlay on a bare spec: start cells as digits, targets as letters.
std::string render_scene(const EnvSpec& spec);

// Live overlay: active/malfunctioning agents at their current cells.
std::string render_state(const EnvState& env);

}  // namespace railab

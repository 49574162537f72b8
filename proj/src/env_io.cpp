#include "railab/env_io.hpp"

#include <fstream>
#include <stdexcept>

#include "railab/hash.hpp"

namespace railab {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "railab-env";
constexpr int kVersion = 1;

json pos_to_json(CellPos p) { return json::array({p.row, p.col}); }

CellPos pos_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    throw std::invalid_argument(std::string("env_from_json: ") + what + " must be [row, col]");
  return {j[0].get<int>(), j[1].get<int>()};
}

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end())
    throw std::invalid_argument(std::string("env_from_json: missing key '") + key + "'");
  return *it;
}

}  // namespace

Heading heading_from_name(const std::string& name) {
  if (name == "N") return Heading::North;
  if (name == "E") return Heading::East;
  if (name == "S") return Heading::South;
  if (name == "W") return Heading::West;
  throw std::invalid_argument("heading_from_name: expected one of N/E/S/W, got '" + name + "'");
}

nlohmann::json env_to_json(const EnvSpec& spec) {
  json cells = json::array();
  for (int r = 0; r < spec.grid.height(); ++r)
    for (int c = 0; c < spec.grid.width(); ++c) {
      const std::uint16_t bits = spec.grid.at({r, c}).bits();
      if (bits != 0) cells.push_back(json::array({r, c, bits}));
    }
  json agents = json::array();
  for (const AgentSpec& a : spec.roster) {
    agents.push_back({{"start", pos_to_json(a.start)},
                      {"heading", heading_name(a.heading)},
                      {"target", pos_to_json(a.target)},
                      {"speed_twelfths", a.speed_twelfths}});
  }
  return {{"format", kFormat},
          {"version", kVersion},
          {"grid", {{"width", spec.grid.width()}, {"height", spec.grid.height()}, {"cells", cells}}},
          {"agents", agents},
          {"max_steps", spec.max_steps},
          {"malfunction",
           {{"rate", spec.malfunction.rate},
            {"min_duration", spec.malfunction.min_duration},
            {"max_duration", spec.malfunction.max_duration}}}};
}

EnvSpec env_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("env_from_json: not a JSON object");
  if (require(j, "format").get<std::string>() != kFormat)
    throw std::invalid_argument("env_from_json: unrecognized format tag");
  if (require(j, "version").get<int>() != kVersion)
    throw std::invalid_argument("env_from_json: unsupported version");

  const json& jg = require(j, "grid");
  const int width = require(jg, "width").get<int>();
  const int height = require(jg, "height").get<int>();
  EnvSpec spec;
  spec.grid = RailGrid(width, height);
  for (const json& cell : require(jg, "cells")) {
    if (!cell.is_array() || cell.size() != 3)
      throw std::invalid_argument("env_from_json: grid cell must be [row, col, bits]");
    const CellPos p{cell[0].get<int>(), cell[1].get<int>()};
    if (!spec.grid.in_bounds(p))
      throw std::invalid_argument("env_from_json: grid cell out of bounds");
    const int bits = cell[2].get<int>();
    if (bits < 0 || bits > 0xFFFF)
      throw std::invalid_argument("env_from_json: transition bits out of range");
    spec.grid.at(p) = TransitionMap(static_cast<std::uint16_t>(bits));
  }
  if (const std::string err = spec.grid.validate(); !err.empty())
    throw std::invalid_argument("env_from_json: invalid grid: " + err);

  for (const json& ja : require(j, "agents")) {
    AgentSpec a;
    a.start = pos_from_json(require(ja, "start"), "agent start");
    a.heading = heading_from_name(require(ja, "heading").get<std::string>());
    a.target = pos_from_json(require(ja, "target"), "agent target");
    a.speed_twelfths = require(ja, "speed_twelfths").get<int>();
    spec.roster.push_back(a);
  }
  spec.max_steps = require(j, "max_steps").get<int>();
  const json& jm = require(j, "malfunction");
  spec.malfunction.rate = require(jm, "rate").get<double>();
  spec.malfunction.min_duration = require(jm, "min_duration").get<int>();
  spec.malfunction.max_duration = require(jm, "max_duration").get<int>();
  return spec;
}

void save_env(const EnvSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_env: cannot open " + path.string());
  out << env_to_json(spec).dump(2) << '\n';
}

EnvSpec load_env(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_env: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("load_env: " + path.string() + ": " + e.what());
  }
  return env_from_json(j);
}

std::uint64_t env_fingerprint(const EnvSpec& spec) {
  Fnv1a h;
  h.u64(spec.grid.content_hash());
  h.i32(spec.max_steps);
  h.f64(spec.malfunction.rate);
  h.i32(spec.malfunction.min_duration).i32(spec.malfunction.max_duration);
  for (const AgentSpec& a : spec.roster) {
    h.i32(a.start.row).i32(a.start.col);
    h.u8(static_cast<std::uint8_t>(a.heading));
    h.i32(a.target.row).i32(a.target.col);
    h.i32(a.speed_twelfths);
  }
  return h.value();
}

EnvState make_env(const EnvSpec& spec, std::uint64_t seed) {
  const int max_steps = spec.max_steps > 0 ? spec.max_steps : default_max_steps(spec.grid);
  return reset(std::make_shared<RailGrid>(spec.grid), spec.roster, max_steps, seed,
               spec.malfunction);
}

}  // namespace railab

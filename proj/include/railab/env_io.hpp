#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "railab/env_core.hpp"

namespace railab {

// Serializable description of an episode setup: the rails plus the roster.
// The RNG seed is deliberately not part of it; seeds are supplied at reset
// so one spec file can back many distinct episodes.
struct EnvSpec {
  RailGrid grid{2, 1};
  std::vector<AgentSpec> roster;
  int max_steps = 0;
  MalfunctionParams malfunction;
};

Heading heading_from_name(const std::string& name);

nlohmann::json env_to_json(const EnvSpec& spec);

// Parses and validates; throws std::invalid_argument on malformed input or
// an inconsistent grid.
EnvSpec env_from_json(const nlohmann::json& j);

void save_env(const EnvSpec& spec, const std::filesystem::path& path);
EnvSpec load_env(const std::filesystem::path& path);

// Stable digest of grid + roster + limits, independent of JSON formatting.
std::uint64_t env_fingerprint(const EnvSpec& spec);

// Starts an episode from a spec.
EnvState make_env(const EnvSpec& spec, std::uint64_t seed);

}  // namespace railab

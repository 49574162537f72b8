#pragma once

#include <filesystem>

#include <json.hpp>

#include "railab/a3c_trainer.hpp"
#include "railab/comm_lab.hpp"

namespace railab {

// Everything a run needs, read from one JSON file. Parsing is strict: an
// unknown key anywhere is a validation error, so typos fail loudly instead
// of silently training with defaults. All fields are optional in the file;
// run_config_to_json writes the fully resolved form (defaults expanded,
// fixed environments inlined) so the copy stored next to the outputs
// reproduces the run without the original file.
struct RunConfig {
  TrainerConfig trainer;  // net + generator + curriculum + fixed envs
  CommTrainConfig comm;   // the communication experiment (11-action net)
  std::filesystem::path out_dir = "out";
};

// Throws std::invalid_argument naming the offending key on unknown keys,
// type mismatches, or out-of-range values. Fixed-environment entries may be
// file paths (resolved against base_dir) or inline environment objects.
RunConfig run_config_from_json(const nlohmann::json& j,
                               const std::filesystem::path& base_dir = ".");

nlohmann::json run_config_to_json(const RunConfig& cfg);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace railab

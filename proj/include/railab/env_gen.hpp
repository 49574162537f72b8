#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "railab/env_io.hpp"

namespace railab {

struct GeneratorParams {
  int width = 25;
  int height = 25;
  int n_agents = 4;
  bool mixed_speeds = false;  // false: everyone at speed 1
  MalfunctionParams malfunction;
  int min_target_distance = 0;  // 0 = auto: max(3, (width+height)/4)
};

// Produces a random connected layout (hub junctions joined by L-shaped
// corridors, extra edges for alternate routes) plus a roster whose targets
// are all reachable. Same params + seed give a byte-identical spec.
// Internally rejection-samples: rare degenerate layouts are discarded and
// redrawn from a derived stream.
EnvSpec generate_env(const GeneratorParams& params, std::uint64_t seed);

struct CurriculumStage {
  int width = 0;
  int height = 0;
  int n_agents = 0;
};

const std::vector<CurriculumStage>& curriculum_stages();

// Monotone difficulty schedule: promote to the next stage once the trailing
// window of per-episode arrival fractions clears the threshold. Never
// demotes; parks at the last stage.
class Curriculum {
 public:
  explicit Curriculum(int window = 200, double threshold = 0.8);
  Curriculum(std::vector<CurriculumStage> stages, int window, double threshold);

  int stage_index() const { return index_; }
  const CurriculumStage& stage() const { return stages_[static_cast<std::size_t>(index_)]; }
  int episodes_in_stage() const { return episodes_in_stage_; }
  double window_mean() const;
  bool at_final_stage() const;

  // Feed one finished episode's arrival fraction; true when this triggered
  // a promotion.
  bool record_episode(double arrival_fraction);

 private:
  std::vector<CurriculumStage> stages_;
  int window_;
  double threshold_;
  int index_ = 0;
  int episodes_in_stage_ = 0;
  std::deque<double> recent_;
};

}  // namespace railab

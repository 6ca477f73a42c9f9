#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ssdlab/detector/model.hpp"
#include "ssdlab/diff/optim.hpp"
#include "ssdlab/selftrain/selftrain.hpp"

namespace ssdlab::selftrain {

// Everything train_loop needs to continue a run bit-identically.
struct Checkpoint {
  diff::ParameterSet teacher;
  diff::ParameterSet student;
  diff::SgdState optimizer;
  std::size_t iteration = 0;
  std::string sampler_state;
  diff::ParameterSet best;
  std::size_t best_iteration = 0;
  double best_val_map = -1;
  std::vector<MetricsRow> trajectory;
  double elapsed_seconds = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Parameter layouts are checked against a freshly initialised detector of `config`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const detector::DetectorConfig& config);

}  // namespace ssdlab::selftrain

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ssdlab/data/scene.hpp"
#include "ssdlab/data/split.hpp"
#include "ssdlab/harness/config.hpp"
#include "ssdlab/harness/report.hpp"
#include "ssdlab/selftrain/selftrain.hpp"

namespace ssdlab::harness {

/// Generated images plus the fixed train/val/test partition.
struct Workspace {
  data::Dataset dataset;
  data::DatasetSplit split;
};
Workspace build_workspace(const ExperimentConfig& config);

/// Self-training settings of one mode: supervised runs skip the unlabeled
/// half and weight it by zero.
selftrain::SelfTrainConfig selftrain_for(const ExperimentConfig& config, Mode mode);

struct RunResult {
  MetricsRow test;                 // best-validation model scored on the test split
  std::vector<MetricsRow> curve;   // validation trajectory
  selftrain::TrainResult training;
};

/// One (mode, fraction, seed) cell of the grid.
RunResult run_single(const ExperimentConfig& config, const Workspace& workspace, Mode mode, double fraction,
                     std::uint64_t seed, const selftrain::LoopOptions& options = {});

struct SweepOptions {
  bool write_files = true;
  std::function<void(const std::string&)> log;  // progress lines; may be empty
};

struct SweepResult {
  std::vector<MetricsRow> test_rows;   // one per run, grid order
  std::vector<MetricsRow> curve_rows;  // every validation evaluation of every run
  std::vector<std::string> class_names;
  std::filesystem::path output_dir;
  double seconds = 0;
};

/// Runs modes x fractions x seeds. With write_files, the output directory
/// receives config.toml, metrics.csv (test rows), curves.csv (validation
/// trajectories) and the report files of emit_report.
SweepResult run_sweep(const ExperimentConfig& config, const SweepOptions& options = {});

}  // namespace ssdlab::harness

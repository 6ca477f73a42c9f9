#include "ssdlab/harness/sweep.hpp"

#include <chrono>
#include <cstdio>

#include "ssdlab/data/coco.hpp"

namespace ssdlab::harness {

Workspace build_workspace(const ExperimentConfig& config) {
  config.validate();
  data::SceneSpec spec = config.scene;
  spec.seed = config.dataset_seed;
  Workspace ws;
  ws.dataset = data::generate_dataset(spec, config.total_images());
  ws.split = data::split_dataset(ws.dataset.ids(), config.split_ratios, config.split_seed);
  return ws;
}

selftrain::SelfTrainConfig selftrain_for(const ExperimentConfig& config, Mode mode) {
  selftrain::SelfTrainConfig cfg = config.selftrain;
  if (mode == Mode::Supervised) {
    cfg.supervised_only = true;
    cfg.lambda_u = 0.0;
  }
  return cfg;
}

RunResult run_single(const ExperimentConfig& config, const Workspace& workspace, Mode mode, double fraction,
                     std::uint64_t seed, const selftrain::LoopOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const auto split = data::sample_label_fraction(workspace.split, fraction, seed);
  const auto cfg = selftrain_for(config, mode);
  selftrain::LoopOptions loop = options;
  loop.record_seconds = config.record_seconds;

  RunResult run;
  run.training = selftrain::train_loop(workspace.dataset, split.labeled, split.unlabeled, split.val, config.detector, cfg,
                                       seed, loop);
  const std::string mode_name = to_string(mode);
  for (auto row : run.training.trajectory) {
    row.mode = mode_name;
    row.fraction = fraction;
    row.seed = seed;
    run.curve.push_back(std::move(row));
  }
  run.test = selftrain::to_metrics_row(
      selftrain::evaluate(run.training.best_model, workspace.dataset, split.test, cfg.eval_decode, cfg.eval_batch));
  run.test.mode = mode_name;
  run.test.fraction = fraction;
  run.test.seed = seed;
  run.test.iteration = run.training.best_iteration;
  run.test.seconds =
      config.record_seconds ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() : 0.0;
  return run;
}

SweepResult run_sweep(const ExperimentConfig& config, const SweepOptions& options) {
  config.validate();  // every field is checked before any work starts
  const auto start = std::chrono::steady_clock::now();
  auto log = [&](const std::string& line) {
    if (options.log) options.log(line);
  };

  SweepResult result;
  result.output_dir = resolve_output_dir(config);
  const Workspace ws = build_workspace(config);
  result.class_names = ws.dataset.class_names;
  log("dataset: " + std::to_string(ws.dataset.samples.size()) + " images, train " + std::to_string(ws.split.train.size()) +
      " / val " + std::to_string(ws.split.val.size()) + " / test " + std::to_string(ws.split.test.size()));
  if (options.write_files) {
    std::filesystem::create_directories(result.output_dir);
    data::write_text_file(result.output_dir / "config.toml", render_config(config));
  }

  const std::size_t total = config.modes.size() * config.fractions.size() * config.seeds.size();
  std::size_t done = 0;
  for (Mode mode : config.modes) {
    for (double fraction : config.fractions) {
      for (std::uint64_t seed : config.seeds) {
        auto run = run_single(config, ws, mode, fraction, seed);
        ++done;
        char line[160];
        std::snprintf(line, sizeof line, "[%zu/%zu] %s: test mAP@[.5:.95] %.2f mAP@.5 %.2f (best iteration %zu, %.0fs)",
                      done, total, run_name(to_string(mode), fraction, seed).c_str(), run.test.map_5095,
                      run.test.map_50, run.test.iteration, run.test.seconds);
        log(line);
        result.test_rows.push_back(std::move(run.test));
        for (auto& row : run.curve) result.curve_rows.push_back(std::move(row));
        // Persist after every run so partial sweeps leave usable artifacts.
        if (options.write_files) {
          data::write_text_file(result.output_dir / "metrics.csv", write_metrics_csv(result.test_rows));
          data::write_text_file(result.output_dir / "curves.csv", write_metrics_csv(result.curve_rows));
        }
      }
    }
  }
  if (options.write_files) emit_report(result.output_dir, result.test_rows, result.curve_rows, result.class_names);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace ssdlab::harness

// ssdlab: command-line front end of the semi-supervised detection lab.
//
//   ssdlab schema                         print every config key with its default
//   ssdlab generate [--config f]          write the synthetic dataset (COCO + PNG)
//   ssdlab train --mode semi --fraction 0.1 --seed 1
//   ssdlab sweep [--config f]             full modes x fractions x seeds grid
//   ssdlab eval --gt gt.json --results det.json
//   ssdlab report --csv metrics.csv [--curves curves.csv] --out dir
//
// Config keys are overridable on the command line as `--section.key value`.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssdlab/data/coco.hpp"
#include "ssdlab/eval/metrics.hpp"
#include "ssdlab/harness/config.hpp"
#include "ssdlab/harness/report.hpp"
#include "ssdlab/harness/sweep.hpp"

namespace fs = std::filesystem;
using namespace ssdlab;

namespace {

struct ConfigArgs {
  std::string path;
};

void add_config_option(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.path, "Experiment config file ([section] key = value)");
  cmd->allow_extras();
  cmd->footer("Any config key can be overridden as --section.key value (see `ssdlab schema`).");
}

// Loads the config file (if any), then applies `--section.key value` extras.
harness::ExperimentConfig resolve_config(const CLI::App* cmd, const ConfigArgs& args) {
  harness::ExperimentConfig config = args.path.empty() ? harness::ExperimentConfig{} : harness::load_config(args.path);
  const auto extras = cmd->remaining();
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& token = extras[i];
    if (token.rfind("--", 0) != 0) throw harness::ConfigError(token, "unexpected argument");
    std::string key = token.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw harness::ConfigError(key, "missing value");
      value = extras[++i];
    }
    harness::apply_override(config, key, value);
  }
  config.validate();
  return config;
}

void print_line(const std::string& line) {
  std::cout << line << std::endl;
}

data::CocoDocument subset(const data::CocoDocument& doc, const std::vector<int>& ids) {
  const std::set<int> keep(ids.begin(), ids.end());
  data::CocoDocument out;
  out.categories = doc.categories;
  for (const auto& img : doc.images) {
    if (keep.count(img.id)) out.images.push_back(img);
  }
  for (const auto& ann : doc.annotations) {
    if (keep.count(ann.image_id)) out.annotations.push_back(ann);
  }
  return out;
}

int cmd_schema() {
  std::cout << "# ssdlab experiment config: every key with its default value.\n"
               "# Unknown keys are rejected; relative output.dir values are placed under $"
            << harness::kOutputRootEnv << " when set.\n\n"
            << harness::render_config(harness::ExperimentConfig{});
  return 0;
}

int cmd_generate(const harness::ExperimentConfig& config, const std::string& format) {
  const auto ws = harness::build_workspace(config);
  const fs::path dir = harness::resolve_output_dir(config) / "dataset";
  data::save_dataset(dir, ws.dataset, format == "raw" ? data::ImageFormat::RawF64 : data::ImageFormat::Png);
  {
    std::string split = "{\n";
    auto list = [](const std::vector<int>& ids) {
      std::string s = "[";
      for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? "," : "") + std::to_string(ids[i]);
      return s + "]";
    };
    split += "  \"train\": " + list(ws.split.train) + ",\n";
    split += "  \"val\": " + list(ws.split.val) + ",\n";
    split += "  \"test\": " + list(ws.split.test) + "\n}\n";
    data::write_text_file(dir / "split.json", split);
  }
  std::printf("wrote %zu images to %s (train %zu / val %zu / test %zu)\n", ws.dataset.samples.size(), dir.c_str(),
              ws.split.train.size(), ws.split.val.size(), ws.split.test.size());
  return 0;
}

int cmd_train(const harness::ExperimentConfig& config, const std::string& mode_text, double fraction,
              std::uint64_t seed, const std::string& checkpoint, std::size_t checkpoint_every,
              const std::string& resume) {
  const auto mode = harness::parse_mode(mode_text);
  const auto ws = harness::build_workspace(config);
  selftrain::LoopOptions options;
  if (!checkpoint.empty()) {
    options.checkpoint_path = checkpoint;
    options.checkpoint_every = checkpoint_every == 0 ? config.selftrain.eval_every : checkpoint_every;
  }
  if (!resume.empty()) options.resume_from = fs::path(resume);
  options.on_step = [&](std::size_t it, const selftrain::StepRecord& r) {
    if (it % config.selftrain.eval_every != 0) return;
    std::printf("iter %zu loss %.4f (sup cls %.4f reg %.4f ctr %.4f unc %.4f | unsup cls %.4f reg %.4f, %zu pseudo-labels)\n",
                it, r.total, r.sup_cls, r.sup_reg, r.sup_ctr, r.sup_unc, r.unsup_cls, r.unsup_reg, r.pseudo_labels);
    std::fflush(stdout);
  };
  auto run = harness::run_single(config, ws, mode, fraction, seed, options);

  const auto name = harness::run_name(harness::to_string(mode), fraction, seed);
  const fs::path dir = harness::resolve_output_dir(config) / name;
  fs::create_directories(dir);
  data::write_text_file(dir / "config.toml", harness::render_config(config));
  data::write_text_file(dir / "metrics.csv", harness::write_metrics_csv(std::vector{run.test}));
  data::write_text_file(dir / "curves.csv", harness::write_metrics_csv(run.curve));
  data::write_text_file(dir / "curve.svg", harness::render_curve_svg(name + " (validation)", run.curve));

  // Test-split ground truth and detections in COCO form, ready for `ssdlab eval`.
  const auto split = data::sample_label_fraction(ws.split, fraction, seed);
  const auto gt = subset(data::to_coco(ws.dataset), split.test);
  std::vector<const Image*> images;
  for (int id : split.test) images.push_back(&ws.dataset.by_id(id).image);
  const auto cfg = harness::selftrain_for(config, mode);
  const auto dets = selftrain::predict(run.training.best_model, images, cfg.eval_decode, cfg.eval_batch);
  std::vector<data::DetectionRecord> records;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (const auto& d : dets[i]) records.push_back({split.test[i], d.box});
  }
  data::write_text_file(dir / "test_gt.json", data::write_coco(gt));
  data::write_text_file(dir / "test_detections.json", data::write_results(gt, records));

  std::printf("%s: best iteration %zu, test mAP@[.5:.95] %.2f, mAP@.5 %.2f -> %s\n", name.c_str(), run.test.iteration,
              run.test.map_5095, run.test.map_50, dir.c_str());
  return 0;
}

int cmd_sweep(const harness::ExperimentConfig& config) {
  harness::SweepOptions options;
  options.log = print_line;
  const auto result = harness::run_sweep(config, options);
  std::cout << "\n" << harness::render_summary_markdown(harness::summarize(result.test_rows));
  std::printf("sweep finished in %.1f s; results in %s\n", result.seconds, result.output_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& gt_path, const std::string& results_path) {
  const auto gt = data::read_coco(data::read_text_file(gt_path));
  const auto dets = data::read_results(gt, data::read_text_file(results_path));
  const auto truth = data::boxes_by_image(gt);
  std::map<int, std::size_t> index;
  std::vector<eval::ImageResult> images;
  for (const auto& img : gt.images) {
    index[img.id] = images.size();
    const auto it = truth.find(img.id);
    images.push_back({{}, it == truth.end() ? BoxList{} : it->second});
  }
  for (const auto& d : dets) images[index.at(d.image_id)].detections.push_back(d.box);
  const auto names = data::class_names(gt);
  const auto table = eval::map_coco(images, names.size());
  std::printf("images %zu, detections %zu\n", images.size(), dets.size());
  std::printf("mAP@[.5:.95] %.2f\nmAP@.5       %.2f\n", 100 * table.map_50_95, 100 * table.map_50);
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (table.evaluated[c]) std::printf("  %-12s %.2f\n", names[c].c_str(), 100 * table.per_class_mean[c]);
    else std::printf("  %-12s –\n", names[c].c_str());
  }
  return 0;
}

int cmd_report(const std::string& csv, const std::string& curves, const std::string& out) {
  const auto rows = harness::read_metrics_csv(data::read_text_file(csv));
  std::vector<harness::MetricsRow> curve_rows;
  if (!curves.empty()) curve_rows = harness::read_metrics_csv(data::read_text_file(curves));
  harness::emit_report(out, rows, curve_rows);
  std::cout << harness::render_summary_markdown(harness::summarize(rows));
  std::printf("report written to %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ssdlab: teacher-student semi-supervised detection lab"};
  app.require_subcommand(1);

  app.add_subcommand("schema", "Print every config key with its default value");

  ConfigArgs gen_args;
  std::string format = "png";
  auto* gen = app.add_subcommand("generate", "Write the synthetic dataset and its split");
  add_config_option(gen, gen_args);
  gen->add_option("--format", format, "Image format")->check(CLI::IsMember({"png", "raw"}));

  ConfigArgs train_args;
  std::string mode = "semi", checkpoint, resume;
  double fraction = 0.1;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;
  auto* train = app.add_subcommand("train", "Train and test one (mode, fraction, seed) run");
  add_config_option(train, train_args);
  train->add_option("--mode", mode, "supervised or semi")->check(CLI::IsMember({"supervised", "semi"}));
  train->add_option("--fraction", fraction, "Label fraction in (0, 1]");
  train->add_option("--seed", seed, "Run seed");
  train->add_option("--checkpoint", checkpoint, "Checkpoint file written during training");
  train->add_option("--checkpoint-every", checkpoint_every, "Checkpoint cadence (default: eval cadence)");
  train->add_option("--resume", resume, "Resume from this checkpoint")->check(CLI::ExistingFile);

  ConfigArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Run the modes x fractions x seeds grid");
  add_config_option(sweep, sweep_args);

  std::string gt_path, results_path;
  auto* ev = app.add_subcommand("eval", "Score COCO detection results against COCO ground truth");
  ev->add_option("--gt", gt_path, "Ground-truth annotations (COCO JSON)")->required()->check(CLI::ExistingFile);
  ev->add_option("--results", results_path, "Detections (COCO result JSON)")->required()->check(CLI::ExistingFile);

  std::string csv, curves, out = "report";
  auto* rep = app.add_subcommand("report", "Re-render summaries and curves from metrics CSVs");
  rep->add_option("--csv", csv, "Test metrics CSV")->required()->check(CLI::ExistingFile);
  rep->add_option("--curves", curves, "Validation curves CSV")->check(CLI::ExistingFile);
  rep->add_option("--out", out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("schema")) return cmd_schema();
    if (app.got_subcommand(gen)) return cmd_generate(resolve_config(gen, gen_args), format);
    if (app.got_subcommand(train)) {
      return cmd_train(resolve_config(train, train_args), mode, fraction, seed, checkpoint, checkpoint_every, resume);
    }
    if (app.got_subcommand(sweep)) return cmd_sweep(resolve_config(sweep, sweep_args));
    if (app.got_subcommand(ev)) return cmd_eval(gt_path, results_path);
    if (app.got_subcommand(rep)) return cmd_report(csv, curves, out);
  } catch (const harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include "ssdlab/harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

namespace ssdlab::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& path, const std::string& text) {
  double v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) throw ConfigError(path, "expected a real number, got '" + text + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& path, const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError(path, "expected a non-negative integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& path, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(path, "expected true or false, got '" + text + "'");
}

std::string parse_string(const std::string& path, const std::string& text) {
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') return text.substr(1, text.size() - 2);
  if (text.find_first_of(" \t\"[],") != std::string::npos || text.empty()) {
    throw ConfigError(path, "expected a quoted string, got '" + text + "'");
  }
  return text;
}

std::vector<std::string> parse_list(const std::string& path, const std::string& text) {
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') {
    throw ConfigError(path, "expected a [a, b, ...] list, got '" + text + "'");
  }
  std::vector<std::string> items;
  const std::string body = trim(text.substr(1, text.size() - 2));
  if (body.empty()) return items;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(path, "empty list element in '" + text + "'");
    items.push_back(item);
  }
  return items;
}

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, ptr);
  // Keep reals recognisable as reals in the rendered document.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

template <typename T, typename F>
std::string format_list(const std::vector<T>& items, F&& format) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += format(items[i]);
  }
  return out + "]";
}

struct Field {
  FieldInfo info;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

// Field factories binding a member accessor to its parse and format routine.
template <typename Access>
Field real_field(std::string path, std::string help, Access access) {
  return {{path, "real", std::move(help)},
          [access, path](ExperimentConfig& c, const std::string& v) { access(c) = parse_real(path, v); },
          [access](const ExperimentConfig& c) { return format_real(access(const_cast<ExperimentConfig&>(c))); }};
}

template <typename Access>
Field uint_field(std::string path, std::string help, Access access) {
  return {{path, "integer", std::move(help)},
          [access, path](ExperimentConfig& c, const std::string& v) {
            access(c) = static_cast<std::remove_reference_t<decltype(access(c))>>(parse_uint(path, v));
          },
          [access](const ExperimentConfig& c) { return std::to_string(access(const_cast<ExperimentConfig&>(c))); }};
}

template <typename Access>
Field bool_field(std::string path, std::string help, Access access) {
  return {{path, "bool", std::move(help)},
          [access, path](ExperimentConfig& c, const std::string& v) { access(c) = parse_bool(path, v); },
          [access](const ExperimentConfig& c) {
            return std::string(access(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          }};
}

template <typename Access>
Field real3_field(std::string path, std::string help, Access access) {
  return {{path, "real[3]", std::move(help)},
          [access, path](ExperimentConfig& c, const std::string& v) {
            const auto items = parse_list(path, v);
            if (items.size() != 3) throw ConfigError(path, "expected exactly 3 values");
            for (std::size_t i = 0; i < 3; ++i) access(c)[i] = parse_real(path, items[i]);
          },
          [access](const ExperimentConfig& c) {
            const auto& a = access(const_cast<ExperimentConfig&>(c));
            return format_list(std::vector<double>(a.begin(), a.end()), format_real);
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // [dataset]
    f.push_back(uint_field("dataset.num_classes", "number of shape classes (1..12; 12 uses a long-tail profile)",
                           [](ExperimentConfig& c) -> std::size_t& { return c.num_classes; }));
    f.push_back(uint_field("dataset.train_images", "training-split size; the generated total follows from split_ratios",
                           [](ExperimentConfig& c) -> std::size_t& { return c.train_images; }));
    f.push_back(real3_field("dataset.split_ratios", "train/val/test ratios (val and test sizes round up)",
                            [](ExperimentConfig& c) -> std::array<double, 3>& { return c.split_ratios; }));
    f.push_back(uint_field("dataset.seed", "scene generation seed",
                           [](ExperimentConfig& c) -> std::uint64_t& { return c.dataset_seed; }));
    f.push_back(uint_field("dataset.split_seed", "train/val/test shuffle seed",
                           [](ExperimentConfig& c) -> std::uint64_t& { return c.split_seed; }));
    f.push_back(uint_field("dataset.image_size", "square image side in pixels (multiple of 8)",
                           [](ExperimentConfig& c) -> std::size_t& { return c.scene.image_size; }));
    f.push_back(uint_field("dataset.min_instances", "minimum objects per image",
                           [](ExperimentConfig& c) -> std::size_t& { return c.scene.min_instances; }));
    f.push_back(uint_field("dataset.max_instances", "maximum objects per image",
                           [](ExperimentConfig& c) -> std::size_t& { return c.scene.max_instances; }));
    f.push_back(real_field("dataset.clutter_density", "expected distractor strokes per image",
                           [](ExperimentConfig& c) -> double& { return c.scene.clutter_density; }));
    f.push_back(real_field("dataset.min_object_size", "smallest object side in pixels",
                           [](ExperimentConfig& c) -> double& { return c.scene.min_object_size; }));
    f.push_back(real_field("dataset.max_object_size", "largest object side in pixels",
                           [](ExperimentConfig& c) -> double& { return c.scene.max_object_size; }));
    f.push_back(real_field("dataset.color_jitter", "relative object colour jitter",
                           [](ExperimentConfig& c) -> double& { return c.scene.color_jitter; }));
    f.push_back(real_field("dataset.texture_noise", "shading noise amplitude",
                           [](ExperimentConfig& c) -> double& { return c.scene.texture_noise; }));
    f.push_back(real_field("dataset.max_overlap", "largest IoU between placed objects",
                           [](ExperimentConfig& c) -> double& { return c.scene.max_overlap; }));
    // [detector]
    f.push_back({{"detector.backbone_channels", "integer list", "output channels of the three stride-2 blocks"},
                 [](ExperimentConfig& c, const std::string& v) {
                   const auto items = parse_list("detector.backbone_channels", v);
                   if (items.size() != 3) throw ConfigError("detector.backbone_channels", "expected exactly 3 values");
                   c.detector.backbone_channels.clear();
                   for (const auto& i : items) c.detector.backbone_channels.push_back(parse_uint("detector.backbone_channels", i));
                 },
                 [](const ExperimentConfig& c) {
                   return format_list(c.detector.backbone_channels, [](std::size_t v) { return std::to_string(v); });
                 }});
    f.push_back(uint_field("detector.head_channels", "width of the shared head tower",
                           [](ExperimentConfig& c) -> std::size_t& { return c.detector.head_channels; }));
    f.push_back(uint_field("detector.norm_groups", "group-norm groups per conv (0 disables normalisation)",
                           [](ExperimentConfig& c) -> std::size_t& { return c.detector.norm_groups; }));
    f.push_back(real_field("detector.prior_prob", "initial foreground probability of the class bias",
                           [](ExperimentConfig& c) -> double& { return c.detector.prior_prob; }));
    f.push_back(real_field("detector.uncertainty_floor", "lower bound of the per-side uncertainty",
                           [](ExperimentConfig& c) -> double& { return c.detector.uncertainty_floor; }));
    // [selftrain]
    f.push_back(real_field("selftrain.alpha", "EMA retention of the teacher",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.alpha; }));
    f.push_back(real_field("selftrain.tau", "pseudo-label score threshold",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.tau; }));
    f.push_back(real_field("selftrain.sigma", "uncertainty margin of the regression gate",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.sigma; }));
    f.push_back(real_field("selftrain.lambda_u", "weight of the unsupervised losses",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.lambda_u; }));
    f.push_back(real_field("selftrain.background_weight", "weight of unlabeled locations outside every pseudo-box",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.background_weight; }));
    f.push_back(real_field("selftrain.background_max_score",
                           "unlabeled background counts only below this teacher score (1 keeps all)",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.background_max_score; }));
    f.push_back(real_field("selftrain.pseudo_nms_iou", "NMS IoU applied to pseudo-labels",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.pseudo_nms_iou; }));
    f.push_back(uint_field("selftrain.burn_in", "supervised-only iterations before pseudo-labelling",
                           [](ExperimentConfig& c) -> std::size_t& { return c.selftrain.burn_in_iters; }));
    f.push_back(uint_field("selftrain.total_iters", "total optimisation steps",
                           [](ExperimentConfig& c) -> std::size_t& { return c.selftrain.total_iters; }));
    f.push_back(uint_field("selftrain.eval_every", "validation cadence in iterations",
                           [](ExperimentConfig& c) -> std::size_t& { return c.selftrain.eval_every; }));
    f.push_back(uint_field("selftrain.labeled_batch", "labeled images per step",
                           [](ExperimentConfig& c) -> std::size_t& { return c.selftrain.labeled_batch; }));
    f.push_back(uint_field("selftrain.unlabeled_batch", "unlabeled images per step",
                           [](ExperimentConfig& c) -> std::size_t& { return c.selftrain.unlabeled_batch; }));
    f.push_back(uint_field("selftrain.eval_batch", "images per evaluation forward pass",
                           [](ExperimentConfig& c) -> std::size_t& { return c.selftrain.eval_batch; }));
    f.push_back(real_field("selftrain.focal_gamma", "focal loss focusing exponent",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.focal.gamma; }));
    f.push_back(real_field("selftrain.focal_alpha", "focal loss positive-class weight",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.focal.alpha; }));
    // [optimizer]
    f.push_back(real_field("optimizer.lr", "SGD learning rate",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.learning_rate; }));
    f.push_back(real_field("optimizer.momentum", "SGD momentum",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.momentum; }));
    f.push_back(uint_field("optimizer.warmup_iters", "linear warm-up length from lr/10",
                           [](ExperimentConfig& c) -> std::size_t& { return c.selftrain.warmup_iters; }));
    // [eval]
    f.push_back({{"eval.score_mode", "string", "detection score: cls or cls_sqrt_ctr"},
                 [](ExperimentConfig& c, const std::string& v) {
                   const auto s = parse_string("eval.score_mode", v);
                   if (s == "cls") c.selftrain.eval_decode.score_mode = detector::ScoreMode::ClassOnly;
                   else if (s == "cls_sqrt_ctr") c.selftrain.eval_decode.score_mode = detector::ScoreMode::ClassSqrtCenterness;
                   else throw ConfigError("eval.score_mode", "expected \"cls\" or \"cls_sqrt_ctr\", got '" + s + "'");
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.selftrain.eval_decode.score_mode == detector::ScoreMode::ClassOnly ? "\"cls\""
                                                                                                          : "\"cls_sqrt_ctr\"");
                 }});
    f.push_back(real_field("eval.score_threshold", "minimum detection score kept for scoring",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.eval_decode.score_threshold; }));
    f.push_back(real_field("eval.nms_iou", "class-wise NMS IoU threshold",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.eval_decode.nms_iou; }));
    f.push_back(uint_field("eval.max_detections", "detections kept per image",
                           [](ExperimentConfig& c) -> std::size_t& { return c.selftrain.eval_decode.max_detections; }));
    // [augment]
    f.push_back(real_field("augment.flip_prob", "horizontal flip probability (weak view)",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.policy.flip_prob; }));
    f.push_back(uint_field("augment.short_side_min", "smallest resized short side",
                           [](ExperimentConfig& c) -> std::size_t& { return c.selftrain.policy.short_side_min; }));
    f.push_back(uint_field("augment.short_side_max", "largest resized short side",
                           [](ExperimentConfig& c) -> std::size_t& { return c.selftrain.policy.short_side_max; }));
    f.push_back(uint_field("augment.short_side_step", "short side granularity",
                           [](ExperimentConfig& c) -> std::size_t& { return c.selftrain.policy.short_side_step; }));
    f.push_back(real_field("augment.jitter_prob", "colour jitter probability",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.policy.jitter_prob; }));
    f.push_back(real_field("augment.brightness", "brightness jitter amplitude",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.policy.brightness; }));
    f.push_back(real_field("augment.contrast", "contrast jitter amplitude",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.policy.contrast; }));
    f.push_back(real_field("augment.saturation", "saturation jitter amplitude",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.policy.saturation; }));
    f.push_back(real_field("augment.grayscale_prob", "grayscale probability",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.policy.grayscale_prob; }));
    f.push_back(real_field("augment.blur_prob", "Gaussian blur probability",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.policy.blur_prob; }));
    f.push_back(real_field("augment.blur_sigma_min", "smallest blur sigma",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.policy.blur_sigma_min; }));
    f.push_back(real_field("augment.blur_sigma_max", "largest blur sigma",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.policy.blur_sigma_max; }));
    f.push_back(real_field("augment.cutout_prob", "cutout probability",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.policy.cutout_prob; }));
    f.push_back(uint_field("augment.cutout_count_min", "fewest cutout squares",
                           [](ExperimentConfig& c) -> std::size_t& { return c.selftrain.policy.cutout_count_min; }));
    f.push_back(uint_field("augment.cutout_count_max", "most cutout squares",
                           [](ExperimentConfig& c) -> std::size_t& { return c.selftrain.policy.cutout_count_max; }));
    f.push_back(real_field("augment.cutout_size_min", "smallest cutout side (fraction of short side)",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.policy.cutout_size_min; }));
    f.push_back(real_field("augment.cutout_size_max", "largest cutout side (fraction of short side)",
                           [](ExperimentConfig& c) -> double& { return c.selftrain.policy.cutout_size_max; }));
    // [sweep]
    f.push_back({{"sweep.fractions", "real list", "label fractions in (0, 1]"},
                 [](ExperimentConfig& c, const std::string& v) {
                   c.fractions.clear();
                   for (const auto& i : parse_list("sweep.fractions", v)) c.fractions.push_back(parse_real("sweep.fractions", i));
                 },
                 [](const ExperimentConfig& c) { return format_list(c.fractions, format_real); }});
    f.push_back({{"sweep.modes", "string list", "training modes: supervised and/or semi"},
                 [](ExperimentConfig& c, const std::string& v) {
                   c.modes.clear();
                   for (const auto& i : parse_list("sweep.modes", v)) {
                     const auto s = parse_string("sweep.modes", i);
                     try {
                       c.modes.push_back(parse_mode(s));
                     } catch (const std::invalid_argument& e) {
                       throw ConfigError("sweep.modes", e.what());
                     }
                   }
                 },
                 [](const ExperimentConfig& c) {
                   return format_list(c.modes, [](Mode m) { return "\"" + to_string(m) + "\""; });
                 }});
    f.push_back({{"sweep.seeds", "integer list", "run seeds (label subset, init and sampling)"},
                 [](ExperimentConfig& c, const std::string& v) {
                   c.seeds.clear();
                   for (const auto& i : parse_list("sweep.seeds", v)) c.seeds.push_back(parse_uint("sweep.seeds", i));
                 },
                 [](const ExperimentConfig& c) {
                   return format_list(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
                 }});
    f.push_back(bool_field("sweep.record_seconds", "write wall-clock seconds (false writes 0 for byte-stable CSVs)",
                           [](ExperimentConfig& c) -> bool& { return c.record_seconds; }));
    // [output]
    f.push_back({{"output.dir", "string", "results directory (relative paths honour SSDLAB_OUTPUT_ROOT)"},
                 [](ExperimentConfig& c, const std::string& v) { c.output_dir = parse_string("output.dir", v); },
                 [](const ExperimentConfig& c) { return "\"" + c.output_dir.generic_string() + "\""; }});
    return f;
  }();
  return table;
}

const Field& find_field(const std::string& path) {
  for (const auto& f : fields()) {
    if (f.info.path == path) return f;
  }
  throw ConfigError(path, "unknown key");
}

void require(bool ok, const char* path, const std::string& message) {
  if (!ok) throw ConfigError(path, message);
}

bool is_prob(double p) { return p >= 0 && p <= 1; }

// The class count lives in three places; the preset decides the frequency profile.
void sync_classes(ExperimentConfig& config) {
  config.scene.num_classes = config.num_classes;
  config.scene.profile = data::SceneSpec::preset(config.num_classes).profile;
  config.detector.num_classes = config.num_classes;
}

}  // namespace

std::string to_string(Mode mode) { return mode == Mode::Supervised ? "supervised" : "semi"; }

Mode parse_mode(const std::string& text) {
  if (text == "supervised") return Mode::Supervised;
  if (text == "semi") return Mode::Semi;
  throw std::invalid_argument("unknown mode '" + text + "' (expected supervised or semi)");
}

const std::vector<FieldInfo>& config_schema() {
  static const std::vector<FieldInfo> schema = [] {
    std::vector<FieldInfo> out;
    for (const auto& f : fields()) out.push_back(f.info);
    return out;
  }();
  return schema;
}

void apply_override(ExperimentConfig& config, const std::string& path, const std::string& value) {
  find_field(path).set(config, trim(value));
  sync_classes(config);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::string section;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    // Strip comments outside quotes.
    bool quoted = false;
    std::string line;
    for (char ch : raw) {
      if (ch == '"') quoted = !quoted;
      if (ch == '#' && !quoted) break;
      line += ch;
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where, "empty key");
    if (value.empty()) throw ConfigError(section.empty() ? key : section + "." + key, "missing value");
    const std::string path = section.empty() ? key : section + "." + key;
    if (!seen.insert(path).second) throw ConfigError(path, "duplicate key");
    find_field(path).set(config, value);
  }
  sync_classes(config);
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string render_config(const ExperimentConfig& config) {
  std::string out;
  std::string current;
  for (const auto& f : fields()) {
    const auto dot = f.info.path.find('.');
    const std::string section = f.info.path.substr(0, dot);
    if (section != current) {
      if (!current.empty()) out += "\n";
      out += "[" + section + "]\n";
      current = section;
    }
    out += f.info.path.substr(dot + 1) + " = " + f.get(config) + "  # " + f.info.help + "\n";
  }
  return out;
}

void ExperimentConfig::validate() const {
  require(num_classes >= 1 && num_classes <= 12, "dataset.num_classes", "must lie in 1..12");
  require(train_images >= 1, "dataset.train_images", "must be positive");
  for (double r : split_ratios) require(r >= 0 && r < 1, "dataset.split_ratios", "each ratio must lie in [0, 1)");
  require(split_ratios[0] > 0, "dataset.split_ratios", "train ratio must be positive");
  require(std::abs(split_ratios[0] + split_ratios[1] + split_ratios[2] - 1.0) <= 1e-9, "dataset.split_ratios",
          "ratios must sum to 1");
  require(split_ratios[1] > 0 && split_ratios[2] > 0, "dataset.split_ratios", "validation and test ratios must be positive");
  try {
    scene.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("dataset", e.what());
  }
  require(scene.num_classes == num_classes, "dataset.num_classes", "scene class count out of sync");
  require(detector.num_classes == num_classes, "dataset.num_classes", "detector class count out of sync");
  require(detector.backbone_channels.size() == 3, "detector.backbone_channels", "expected exactly 3 values");
  for (auto ch : detector.backbone_channels) require(ch > 0, "detector.backbone_channels", "channels must be positive");
  require(detector.head_channels > 0, "detector.head_channels", "must be positive");
  require(detector.prior_prob > 0 && detector.prior_prob < 1, "detector.prior_prob", "must lie in (0, 1)");
  require(detector.uncertainty_floor > 0, "detector.uncertainty_floor", "must be positive");

  require(is_prob(selftrain.alpha), "selftrain.alpha", "must lie in [0, 1]");
  require(is_prob(selftrain.tau), "selftrain.tau", "must lie in [0, 1]");
  require(selftrain.sigma >= 0, "selftrain.sigma", "must be non-negative");
  require(selftrain.lambda_u >= 0, "selftrain.lambda_u", "must be non-negative");
  require(selftrain.background_weight >= 0, "selftrain.background_weight", "must be non-negative");
  require(is_prob(selftrain.background_max_score), "selftrain.background_max_score", "must lie in [0, 1]");
  require(is_prob(selftrain.pseudo_nms_iou), "selftrain.pseudo_nms_iou", "must lie in [0, 1]");
  require(selftrain.total_iters >= 1, "selftrain.total_iters", "must be positive");
  require(selftrain.burn_in_iters <= selftrain.total_iters, "selftrain.burn_in", "must not exceed total_iters");
  require(selftrain.eval_every >= 1, "selftrain.eval_every", "must be positive");
  require(selftrain.labeled_batch >= 1, "selftrain.labeled_batch", "must be positive");
  require(selftrain.eval_batch >= 1, "selftrain.eval_batch", "must be positive");
  require(selftrain.focal.gamma >= 0, "selftrain.focal_gamma", "must be non-negative");
  require(is_prob(selftrain.focal.alpha), "selftrain.focal_alpha", "must lie in [0, 1]");
  require(selftrain.learning_rate > 0, "optimizer.lr", "must be positive");
  require(selftrain.momentum >= 0 && selftrain.momentum < 1, "optimizer.momentum", "must lie in [0, 1)");
  require(is_prob(selftrain.eval_decode.score_threshold), "eval.score_threshold", "must lie in [0, 1]");
  require(is_prob(selftrain.eval_decode.nms_iou), "eval.nms_iou", "must lie in [0, 1]");
  require(selftrain.eval_decode.max_detections >= 1, "eval.max_detections", "must be positive");
  try {
    selftrain.policy.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("augment", e.what());
  }

  require(!fractions.empty(), "sweep.fractions", "must not be empty");
  for (double f : fractions) require(f > 0 && f <= 1, "sweep.fractions", "every fraction must lie in (0, 1]");
  require(!modes.empty(), "sweep.modes", "must not be empty");
  require(!seeds.empty(), "sweep.seeds", "must not be empty");
  require(!output_dir.empty(), "output.dir", "must not be empty");
  for (double f : fractions) {
    const auto labeled = std::llround(f * static_cast<double>(train_images));
    require(labeled >= 1, "sweep.fractions", "fraction " + format_real(f) + " leaves no labeled images");
  }
}

std::size_t ExperimentConfig::total_images() const {
  // Validation and test take ceil(ratio * n); find the smallest n whose train
  // split has exactly the requested size.
  auto held_out = [](double r, std::size_t n) {
    return static_cast<std::size_t>(std::ceil(r * static_cast<double>(n) - 1e-9));
  };
  const auto guess = static_cast<std::size_t>(static_cast<double>(train_images) / split_ratios[0]);
  for (std::size_t n = guess > 8 ? guess - 8 : 1;; ++n) {
    const std::size_t held = held_out(split_ratios[1], n) + held_out(split_ratios[2], n);
    if (held > n) continue;
    const std::size_t train = n - held;
    if (train == train_images) return n;
    if (train > train_images) throw ConfigError("dataset.train_images", "no dataset size yields exactly this many training images");
  }
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& config) {
  if (config.output_dir.is_absolute()) return config.output_dir;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
    return std::filesystem::path(root) / config.output_dir;
  }
  return config.output_dir;
}

}  // namespace ssdlab::harness

#include "ssdlab/detector/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "ssdlab/diff/ops.hpp"

namespace ssdlab::detector {

using diff::Tensor;

namespace {

Tensor normal_tensor(diff::Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(diff::shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

void add_conv(diff::ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
              std::size_t kernel, double stddev, double bias, std::mt19937_64& rng) {
  params.entries.emplace_back(name + ".weight", normal_tensor({out, in, kernel, kernel}, stddev, rng));
  params.entries.emplace_back(name + ".bias", Tensor::full({out}, bias, true));
}

const Tensor& param(const DetectorParams& model, const std::string& name) {
  const Tensor* t = model.params.find(name);
  if (!t) throw std::invalid_argument("detector parameter '" + name + "' missing");
  return *t;
}

void add_norm(diff::ParameterSet& params, const std::string& name, std::size_t channels) {
  params.entries.emplace_back(name + ".norm.weight", Tensor::full({channels}, 1.0, true));
  params.entries.emplace_back(name + ".norm.bias", Tensor::full({channels}, 0.0, true));
}

std::size_t groups_for(const DetectorConfig& config, std::size_t channels) {
  std::size_t g = std::min(config.norm_groups, channels);
  while (channels % g != 0) --g;
  return g;
}

const char* const kBranches[] = {"head.cls", "head.ctr", "head.reg", "head.unc"};

}  // namespace

DetectorParams init_detector(const DetectorConfig& config, std::uint64_t seed) {
  if (config.num_classes == 0) throw std::invalid_argument("detector needs at least one class");
  if (config.backbone_channels.size() != 3) throw std::invalid_argument("backbone has exactly three blocks");
  if (!(config.prior_prob > 0 && config.prior_prob < 1)) throw std::invalid_argument("prior_prob must lie in (0,1)");
  std::mt19937_64 rng(seed);
  DetectorParams model{config, {}};
  std::size_t in = 3;
  for (std::size_t i = 0; i < config.backbone_channels.size(); ++i) {
    const std::size_t out = config.backbone_channels[i];
    const std::string name = "backbone.conv" + std::to_string(i + 1);
    add_conv(model.params, name, in, out, 3, std::sqrt(2.0 / (in * 9.0)), 0.0, rng);
    if (config.norm_groups > 0) add_norm(model.params, name, out);
    in = out;
  }
  add_conv(model.params, "head.tower", in, config.head_channels, 3, std::sqrt(2.0 / (in * 9.0)), 0.0, rng);
  if (config.norm_groups > 0) add_norm(model.params, "head.tower", config.head_channels);
  const std::size_t hc = config.head_channels;
  const double cls_bias = -std::log((1.0 - config.prior_prob) / config.prior_prob);
  add_conv(model.params, "head.cls", hc, config.num_classes, 1, 0.01, cls_bias, rng);
  add_conv(model.params, "head.ctr", hc, 1, 1, 0.01, 0.0, rng);
  add_conv(model.params, "head.reg", hc, 4, 1, 0.01, 0.0, rng);
  add_conv(model.params, "head.unc", hc, 4, 1, 0.01, 0.0, rng);
  return model;
}

void zero_head_outputs(DetectorParams& model) {
  for (auto& [name, tensor] : model.params.entries) {
    for (const char* branch : kBranches) {
      if (name.rfind(branch, 0) == 0) {
        for (auto& v : tensor.mutable_data()) v = 0.0;
      }
    }
  }
}

GridGeometry GridGeometry::for_image(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || height % kStride != 0 || width % kStride != 0) {
    throw std::invalid_argument("image size " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not divisible by the stride " + std::to_string(kStride));
  }
  return {height / kStride, width / kStride, kStride};
}

HeadOutputs HeadOutputs::slice_batch(std::size_t begin, std::size_t end) const {
  HeadOutputs out = *this;
  out.cls_logits = diff::slice(cls_logits, 0, begin, end);
  out.ctr_logits = diff::slice(ctr_logits, 0, begin, end);
  out.reg = diff::slice(reg, 0, begin, end);
  out.unc = diff::slice(unc, 0, begin, end);
  return out;
}

HeadOutputs forward(const DetectorParams& model, const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw diff::ShapeError("detector input must be [N,3,H,W], got " + diff::shape_to_string(images.shape()));
  }
  const auto grid = GridGeometry::for_image(images.dim(2), images.dim(3));

  // Pixel values live in [0,1]; centre them around zero.
  Tensor x = diff::affine(images, 4.0, -2.0);
  auto block = [&](const Tensor& input, const std::string& name, std::size_t stride) {
    Tensor y = diff::conv2d(input, param(model, name + ".weight"), param(model, name + ".bias"), {stride, 1});
    if (model.config.norm_groups > 0) {
      y = diff::group_norm(y, param(model, name + ".norm.weight"), param(model, name + ".norm.bias"),
                           groups_for(model.config, y.dim(1)));
    }
    return diff::relu(y);
  };
  for (std::size_t i = 1; i <= 3; ++i) x = block(x, "backbone.conv" + std::to_string(i), 2);
  const Tensor tower = block(x, "head.tower", 1);
  auto branch = [&](const char* name) {
    const std::string n(name);
    return diff::conv2d(tower, param(model, n + ".weight"), param(model, n + ".bias"));
  };

  HeadOutputs out;
  out.grid = grid;
  out.image_height = images.dim(2);
  out.image_width = images.dim(3);
  out.uncertainty_floor = model.config.uncertainty_floor;
  out.cls_logits = branch("head.cls");
  out.ctr_logits = branch("head.ctr");
  out.reg = diff::softplus(branch("head.reg"));
  out.unc = diff::affine(diff::softplus(branch("head.unc")), 1.0, model.config.uncertainty_floor);
  if (out.cls_logits.dim(2) != grid.rows || out.cls_logits.dim(3) != grid.cols) {
    throw diff::ShapeError("head grid does not match the stride geometry");
  }
  return out;
}

}  // namespace ssdlab::detector

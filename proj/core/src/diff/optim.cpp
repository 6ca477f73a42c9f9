#include "ssdlab/diff/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssdlab::diff {

const Tensor* ParameterSet::find(const std::string& name) const {
  for (const auto& [key, tensor] : entries) {
    if (key == name) return &tensor;
  }
  return nullptr;
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  out.entries.reserve(entries.size());
  for (const auto& [name, tensor] : entries) out.entries.emplace_back(name, tensor.clone());
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& entry : entries) entry.second.zero_grad();
}

void ParameterSet::set_requires_grad(bool flag) {
  for (auto& entry : entries) entry.second.set_requires_grad(flag);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& entry : entries) n += entry.second.numel();
  return n;
}

void require_same_layout(const ParameterSet& a, const ParameterSet& b, const char* context) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(context) + ": parameter count " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.entries[i].first != b.entries[i].first || a[i].shape() != b[i].shape()) {
      throw ShapeError(std::string(context) + ": parameter '" + a.entries[i].first + "' " +
                       shape_to_string(a[i].shape()) + " does not match '" + b.entries[i].first + "' " +
                       shape_to_string(b[i].shape()));
    }
  }
}

void copy_values(const ParameterSet& source, ParameterSet& destination) {
  require_same_layout(source, destination, "copy_values");
  for (std::size_t i = 0; i < source.size(); ++i) {
    auto src = source[i].data();
    std::copy(src.begin(), src.end(), destination[i].mutable_data().begin());
  }
}

double max_abs_difference(const ParameterSet& a, const ParameterSet& b) {
  require_same_layout(a, b, "max_abs_difference");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].numel(); ++j) worst = std::max(worst, std::abs(a[i].at(j) - b[i].at(j)));
  }
  return worst;
}

SgdState SgdState::for_params(const ParameterSet& params, double learning_rate, double momentum) {
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("momentum must lie in [0, 1)");
  SgdState state;
  state.learning_rate = learning_rate;
  state.momentum = momentum;
  for (const auto& entry : params.entries) state.velocity.emplace_back(entry.second.numel(), 0.0);
  return state;
}

void sgd_step(ParameterSet& params, SgdState& state) {
  if (state.velocity.size() != params.size()) {
    throw std::invalid_argument("optimizer state has " + std::to_string(state.velocity.size()) +
                                " buffers for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) throw std::invalid_argument("missing gradient for parameter '" + params.entries[i].first + "'");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_data();
    auto grads = params[i].mutable_grad();
    auto& v = state.velocity[i];
    if (v.size() != values.size()) throw ShapeError("velocity buffer size mismatch for '" + params.entries[i].first + "'");
    for (std::size_t j = 0; j < values.size(); ++j) {
      v[j] = state.momentum * v[j] + grads[j];
      values[j] -= state.learning_rate * v[j];
    }
    check_finite(values, "sgd_step");
    std::fill(grads.begin(), grads.end(), 0.0);
  }
}

}  // namespace ssdlab::diff

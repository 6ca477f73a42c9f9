#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ssdlab/diff/tensor.hpp"

namespace ssdlab::diff {

/// Ordered, named set of trainable tensors.
struct ParameterSet {
  std::vector<std::pair<std::string, Tensor>> entries;

  std::size_t size() const { return entries.size(); }
  Tensor& operator[](std::size_t i) { return entries[i].second; }
  const Tensor& operator[](std::size_t i) const { return entries[i].second; }
  const Tensor* find(const std::string& name) const;

  // Deep copy with fresh leaves; requires_grad flags are preserved.
  ParameterSet clone() const;
  void zero_grad();
  void set_requires_grad(bool flag);
  std::size_t scalar_count() const;
};

// Shapes and names must agree entry by entry.
void require_same_layout(const ParameterSet& a, const ParameterSet& b, const char* context);

// Overwrites destination values with source values.
void copy_values(const ParameterSet& source, ParameterSet& destination);

double max_abs_difference(const ParameterSet& a, const ParameterSet& b);

struct SgdState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::vector<std::vector<double>> velocity;  // one buffer per parameter

  static SgdState for_params(const ParameterSet& params, double learning_rate, double momentum);
};

/// v <- m*v + g;  theta <- theta - lr*v;  grads reset to zero afterwards.
/// Throws if any parameter has no gradient buffer.
void sgd_step(ParameterSet& params, SgdState& state);

}  // namespace ssdlab::diff

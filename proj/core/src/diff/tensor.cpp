#include "ssdlab/diff/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>

namespace ssdlab::diff {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("shape extents must be positive: " + shape_to_string(shape));
    n *= extent;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::vector<double>& TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_to_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_to_string(shape()));
  return impl_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const { return from(impl_->shape, impl_->data, impl_->requires_grad); }

void Tape::record(std::shared_ptr<TensorImpl> node) { nodes_.push_back(std::move(node)); }

void Tape::clear() {
  // Drop closures first so captured buffers are released even if a caller
  // still holds an output handle.
  for (auto& node : nodes_) {
    node->backward_fn = nullptr;
    node->inputs.clear();
  }
  nodes_.clear();
}

namespace {
thread_local Tape tls_tape;
thread_local bool tls_grad_enabled = true;
}  // namespace

Tape& active_tape() { return tls_tape; }

bool grad_enabled() { return tls_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(tls_grad_enabled) { tls_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { tls_grad_enabled = previous_; }

void check_finite(std::span<const double> values, const char* what) {
  // Branch-free scan over the exponent bits so the loop vectorises; a value is
  // non-finite exactly when all exponent bits are set.
  constexpr std::uint64_t kExponent = 0x7ff0000000000000ULL;
  std::uint64_t bad = 0;
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    bad |= static_cast<std::uint64_t>((bits & kExponent) == kExponent);
  }
  if (bad != 0) throw NonFiniteError(std::string("non-finite value produced by ") + what);
}

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ShapeError("backward requires a single-element root, got " +
                     (root.defined() ? shape_to_string(root.shape()) : std::string("undefined")));
  }
  auto& tape = active_tape();
  auto* root_node = root.get();
  if (root_node->requires_grad) root_node->ensure_grad()[0] += 1.0;

  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    TensorImpl& node = **it;
    if (node.grad.empty() || !node.backward_fn) continue;
    node.backward_fn(node);
    check_finite(node.grad, node.op_name);
    for (auto& input : node.inputs) {
      if (input->requires_grad && !input->grad.empty()) check_finite(input->grad, node.op_name);
    }
  }
  tape.clear();
}

}  // namespace ssdlab::diff

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssdlab/diff/tensor.hpp"

namespace ssdlab::diff {

// Elementwise binary ops; operands must have identical shapes (use broadcast()).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// scale * x + shift with constant coefficients.
Tensor affine(const Tensor& x, double scale, double shift = 0.0);

Tensor matmul(const Tensor& a, const Tensor& b);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// x: [N, C, H, W], weight: [O, C, K, K], bias: [O] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options = {});

// Group normalisation of x: [N, C, H, W] over (C/groups, H, W) per image,
// followed by a per-channel affine map with weight [C] and bias [C].
Tensor group_norm(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t groups, double eps = 1e-5);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
// log(1 + e^x), evaluated without overflow.
Tensor softplus(const Tensor& x);

// Full reductions to a single-element tensor of shape [1].
Tensor reduce_sum(const Tensor& x);
Tensor reduce_mean(const Tensor& x);

// Numpy-style expansion: trailing-aligned, size-1 axes stretch, missing leading axes added.
Tensor broadcast(const Tensor& x, const Shape& shape);

// Half-open range [begin, end) along one axis.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);

// Value copy cut off from the graph.
Tensor detach(const Tensor& x);

// Same data, new shape (no copy of semantics, only of storage).
Tensor reshape(const Tensor& x, const Shape& shape);

// Convenience wrappers built from the primitives above.
inline Tensor neg(const Tensor& x) { return affine(x, -1.0); }
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor abs(const Tensor& x);
Tensor constant_like(const Tensor& like, double value);

}  // namespace ssdlab::diff

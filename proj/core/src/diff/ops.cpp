#include "ssdlab/diff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace ssdlab::diff {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

using BackwardFn = std::function<void(TensorImpl&)>;

Tensor make_output(const char* name, Shape shape, std::vector<double> data,
                   std::vector<std::shared_ptr<TensorImpl>> inputs, BackwardFn backward_fn) {
  check_finite(data, name);
  auto out = std::make_shared<TensorImpl>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  out->op_name = name;
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in->requires_grad;
  }
  if (needs_grad) {
    out->requires_grad = true;
    out->inputs = std::move(inputs);
    out->backward_fn = std::move(backward_fn);
    active_tape().record(out);
  }
  return Tensor(std::move(out));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

// Accumulate grad * f(i) into an input, if it wants a gradient.
template <typename F>
void accumulate(TensorImpl& input, const std::vector<double>& upstream, F&& local) {
  if (!input.requires_grad) return;
  auto& g = input.ensure_grad();
  for (std::size_t i = 0; i < upstream.size(); ++i) g[i] += upstream[i] * local(i);
}

template <typename Forward, typename Derivative>
Tensor unary(const char* name, const Tensor& x, Forward&& f, Derivative&& dfdx) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  auto xi = x.impl();
  return make_output(name, x.shape(), std::move(out), {xi},
                     [dfdx](TensorImpl& self) {
                       auto& in_node = *self.inputs[0];
                       accumulate(in_node, self.grad,
                                  [&](std::size_t i) { return dfdx(in_node.data[i], self.data[i]); });
                     });
}

double softplus_scalar(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_output("add", a.shape(), std::move(out), {a.impl(), b.impl()}, [](TensorImpl& self) {
    accumulate(*self.inputs[0], self.grad, [](std::size_t) { return 1.0; });
    accumulate(*self.inputs[1], self.grad, [](std::size_t) { return 1.0; });
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_output("sub", a.shape(), std::move(out), {a.impl(), b.impl()}, [](TensorImpl& self) {
    accumulate(*self.inputs[0], self.grad, [](std::size_t) { return 1.0; });
    accumulate(*self.inputs[1], self.grad, [](std::size_t) { return -1.0; });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_output("mul", a.shape(), std::move(out), {a.impl(), b.impl()}, [](TensorImpl& self) {
    auto& lhs = *self.inputs[0];
    auto& rhs = *self.inputs[1];
    accumulate(lhs, self.grad, [&](std::size_t i) { return rhs.data[i]; });
    accumulate(rhs, self.grad, [&](std::size_t i) { return lhs.data[i]; });
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  return make_output("div", a.shape(), std::move(out), {a.impl(), b.impl()}, [](TensorImpl& self) {
    auto& num = *self.inputs[0];
    auto& den = *self.inputs[1];
    accumulate(num, self.grad, [&](std::size_t i) { return 1.0 / den.data[i]; });
    accumulate(den, self.grad, [&](std::size_t i) { return -self.data[i] / den.data[i]; });
  });
}

Tensor affine(const Tensor& x, double scale, double shift) {
  return unary(
      "affine", x, [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  MatrixMap(out.data(), m, n).noalias() =
      ConstMatrixMap(a.data().data(), m, k) * ConstMatrixMap(b.data().data(), k, n);
  return make_output("matmul", {m, n}, std::move(out), {a.impl(), b.impl()}, [m, k, n](TensorImpl& self) {
    auto& lhs = *self.inputs[0];
    auto& rhs = *self.inputs[1];
    ConstMatrixMap g(self.grad.data(), m, n);
    if (lhs.requires_grad) {
      MatrixMap(lhs.ensure_grad().data(), m, k).noalias() += g * ConstMatrixMap(rhs.data.data(), k, n).transpose();
    }
    if (rhs.requires_grad) {
      MatrixMap(rhs.ensure_grad().data(), k, n).noalias() += ConstMatrixMap(lhs.data.data(), m, k).transpose() * g;
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options) {
  if (x.rank() != 4 || weight.rank() != 4) throw ShapeError("conv2d: expects 4-d input and weight");
  const std::size_t batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  const std::size_t out_channels = weight.dim(0), kernel = weight.dim(2);
  if (weight.dim(1) != channels || weight.dim(3) != kernel) {
    throw ShapeError("conv2d: weight " + shape_to_string(weight.shape()) + " incompatible with input " +
                     shape_to_string(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_channels)) {
    throw ShapeError("conv2d: bias must have shape [" + std::to_string(out_channels) + "]");
  }
  const std::size_t stride = options.stride, pad = options.padding;
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (height + 2 * pad < kernel || width + 2 * pad < kernel) throw ShapeError("conv2d: kernel larger than input");
  const std::size_t out_h = (height + 2 * pad - kernel) / stride + 1;
  const std::size_t out_w = (width + 2 * pad - kernel) / stride + 1;
  const std::size_t patch = channels * kernel * kernel;
  const std::size_t positions = out_h * out_w;
  const std::size_t in_plane = channels * height * width;

  // im2col for every image; kept for the weight gradient. Every entry is
  // written (padding included), so the buffer needs no prior clearing.
  std::vector<double> cols(batch * patch * positions);
  const auto xd = x.data();
  for (std::size_t n = 0; n < batch; ++n) {
    double* col = cols.data() + n * patch * positions;
    const double* img = xd.data() + n * in_plane;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t ki = 0; ki < kernel; ++ki) {
        for (std::size_t kj = 0; kj < kernel; ++kj) {
          double* row = col + ((c * kernel + ki) * kernel + kj) * positions;
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            double* dst = row + oy * out_w;
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) {
              std::fill(dst, dst + out_w, 0.0);
              continue;
            }
            const double* src = img + (c * height + static_cast<std::size_t>(iy)) * width;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kj) - static_cast<std::ptrdiff_t>(pad);
              dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) ? 0.0 : src[ix];
            }
          }
        }
      }
    }
  }

  std::vector<double> out(batch * out_channels * positions);
  ConstMatrixMap w(weight.data().data(), out_channels, patch);
  for (std::size_t n = 0; n < batch; ++n) {
    MatrixMap y(out.data() + n * out_channels * positions, out_channels, positions);
    y.noalias() = w * ConstMatrixMap(cols.data() + n * patch * positions, patch, positions);
    if (bias.defined()) {
      for (std::size_t o = 0; o < out_channels; ++o) y.row(o).array() += bias.data()[o];
    }
  }

  std::vector<std::shared_ptr<TensorImpl>> inputs{x.impl(), weight.impl()};
  if (bias.defined()) inputs.push_back(bias.impl());
  const bool input_needs_grad = x.requires_grad();
  return make_output(
      "conv2d", {batch, out_channels, out_h, out_w}, std::move(out), std::move(inputs),
      [cols = input_needs_grad || weight.requires_grad() ? std::move(cols) : std::vector<double>{}, batch, channels,
       height, width, out_channels, kernel, stride, pad, out_h, out_w, patch, positions,
       in_plane](TensorImpl& self) {
        auto& xin = *self.inputs[0];
        auto& win = *self.inputs[1];
        TensorImpl* bin = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        ConstMatrixMap wmat(win.data.data(), out_channels, patch);
        std::vector<double> dcols(xin.requires_grad ? patch * positions : 0);
        for (std::size_t n = 0; n < batch; ++n) {
          ConstMatrixMap dy(self.grad.data() + n * out_channels * positions, out_channels, positions);
          if (win.requires_grad) {
            MatrixMap(win.ensure_grad().data(), out_channels, patch).noalias() +=
                dy * ConstMatrixMap(cols.data() + n * patch * positions, patch, positions).transpose();
          }
          if (bin && bin->requires_grad) {
            auto& gb = bin->ensure_grad();
            // Plain loop: a vectorised reduction would make the result depend on buffer alignment.
            const double* dyp = self.grad.data() + n * out_channels * positions;
            for (std::size_t o = 0; o < out_channels; ++o) {
              double acc = 0;
              for (std::size_t p = 0; p < positions; ++p) acc += dyp[o * positions + p];
              gb[o] += acc;
            }
          }
          if (xin.requires_grad) {
            MatrixMap dc(dcols.data(), patch, positions);
            dc.noalias() = wmat.transpose() * dy;
            double* gimg = xin.ensure_grad().data() + n * in_plane;
            for (std::size_t c = 0; c < channels; ++c) {
              for (std::size_t ki = 0; ki < kernel; ++ki) {
                for (std::size_t kj = 0; kj < kernel; ++kj) {
                  const double* row = dcols.data() + ((c * kernel + ki) * kernel + kj) * positions;
                  for (std::size_t oy = 0; oy < out_h; ++oy) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
                    double* dst = gimg + (c * height + static_cast<std::size_t>(iy)) * width;
                    for (std::size_t ox = 0; ox < out_w; ++ox) {
                      const std::ptrdiff_t ix =
                          static_cast<std::ptrdiff_t>(ox * stride + kj) - static_cast<std::ptrdiff_t>(pad);
                      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
                      dst[ix] += row[oy * out_w + ox];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Tensor group_norm(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t groups, double eps) {
  if (x.rank() != 4) throw ShapeError("group_norm: expects a 4-d input");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (groups == 0 || c % groups != 0) throw ShapeError("group_norm: channel count not divisible by group count");
  if (weight.shape() != Shape{c} || bias.shape() != Shape{c}) throw ShapeError("group_norm: weight and bias must be [C]");
  const std::size_t per_group = c / groups;
  const std::size_t group_size = per_group * plane;
  const double* xv = x.data().data();
  const double* wv = weight.data().data();
  const double* bv = bias.data().data();
  std::vector<double> normalized(x.numel()), inv_std(n * groups), out(x.numel());
  for (std::size_t g = 0; g < n * groups; ++g) {
    const std::size_t base = g * group_size;
    double mean = 0;
    for (std::size_t i = 0; i < group_size; ++i) mean += xv[base + i];
    mean /= static_cast<double>(group_size);
    double var = 0;
    for (std::size_t i = 0; i < group_size; ++i) {
      const double d = xv[base + i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(group_size);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[g] = is;
    for (std::size_t k = 0; k < per_group; ++k) {
      const std::size_t ch = (g % groups) * per_group + k;
      const std::size_t off = base + k * plane;
      const double w = wv[ch], b = bv[ch];
      for (std::size_t i = 0; i < plane; ++i) {
        const double h = (xv[off + i] - mean) * is;
        normalized[off + i] = h;
        out[off + i] = h * w + b;
      }
    }
  }
  return make_output("group_norm", x.shape(), std::move(out), {x.impl(), weight.impl(), bias.impl()},
                     [n, c, plane, groups, per_group, group_size, normalized = std::move(normalized),
                      inv_std = std::move(inv_std)](TensorImpl& self) {
                       auto& xin = *self.inputs[0];
                       auto& win = *self.inputs[1];
                       auto& bin = *self.inputs[2];
                       const double* dy = self.grad.data();
                       const double* h = normalized.data();
                       if (win.requires_grad || bin.requires_grad) {
                         std::vector<double> dw(c, 0.0), db(c, 0.0);
                         for (std::size_t img = 0; img < n; ++img) {
                           for (std::size_t ch = 0; ch < c; ++ch) {
                             const std::size_t off = (img * c + ch) * plane;
                             double sw = 0, sb = 0;
                             for (std::size_t i = 0; i < plane; ++i) {
                               sw += dy[off + i] * h[off + i];
                               sb += dy[off + i];
                             }
                             dw[ch] += sw;
                             db[ch] += sb;
                           }
                         }
                         if (win.requires_grad) {
                           auto& g = win.ensure_grad();
                           for (std::size_t k = 0; k < c; ++k) g[k] += dw[k];
                         }
                         if (bin.requires_grad) {
                           auto& g = bin.ensure_grad();
                           for (std::size_t k = 0; k < c; ++k) g[k] += db[k];
                         }
                       }
                       if (!xin.requires_grad) return;
                       double* gx = xin.ensure_grad().data();
                       const double* wv = win.data.data();
                       const double m = static_cast<double>(group_size);
                       for (std::size_t g = 0; g < n * groups; ++g) {
                         const std::size_t base = g * group_size;
                         // With dh = dy * w: dx = inv_std * (dh - mean(dh) - h * mean(dh * h)).
                         double sum_d = 0, sum_dh = 0;
                         for (std::size_t k = 0; k < per_group; ++k) {
                           const double w = wv[(g % groups) * per_group + k];
                           const std::size_t off = base + k * plane;
                           double sd = 0, sdh = 0;
                           for (std::size_t i = 0; i < plane; ++i) {
                             sd += dy[off + i];
                             sdh += dy[off + i] * h[off + i];
                           }
                           sum_d += w * sd;
                           sum_dh += w * sdh;
                         }
                         const double mean_d = sum_d / m, mean_dh = sum_dh / m, is = inv_std[g];
                         for (std::size_t k = 0; k < per_group; ++k) {
                           const double w = wv[(g % groups) * per_group + k];
                           const std::size_t off = base + k * plane;
                           for (std::size_t i = 0; i < plane; ++i) {
                             gx[off + i] += is * (w * dy[off + i] - mean_d - h[off + i] * mean_dh);
                           }
                         }
                       }
                     });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, sigmoid_scalar, [](double, double s) { return s * (1.0 - s); });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double e) { return e; });
}

Tensor log(const Tensor& x) {
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor softplus(const Tensor& x) {
  return unary("softplus", x, softplus_scalar, [](double v, double) { return sigmoid_scalar(v); });
}

Tensor reduce_sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_output("reduce_sum", {1}, {total}, {x.impl()}, [](TensorImpl& self) {
    const double g = self.grad[0];
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    for (auto& gi : in.ensure_grad()) gi += g;
  });
}

Tensor reduce_mean(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double count = static_cast<double>(x.numel());
  return make_output("reduce_mean", {1}, {total / count}, {x.impl()}, [count](TensorImpl& self) {
    const double g = self.grad[0] / count;
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    for (auto& gi : in.ensure_grad()) gi += g;
  });
}

Tensor broadcast(const Tensor& x, const Shape& shape) {
  const auto& src = x.shape();
  if (src.size() > shape.size()) throw ShapeError("broadcast: target rank smaller than source");
  const std::size_t lead = shape.size() - src.size();
  Shape padded(lead, 1);
  padded.insert(padded.end(), src.begin(), src.end());
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (padded[i] != shape[i] && padded[i] != 1) {
      throw ShapeError("broadcast: cannot expand " + shape_to_string(src) + " to " + shape_to_string(shape));
    }
  }
  const auto out_strides = strides_of(shape);
  const auto src_strides = strides_of(padded);
  const std::size_t total = shape_numel(shape);
  // Source index for every output element.
  std::vector<std::size_t> source(total);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat, idx = 0;
    for (std::size_t d = 0; d < shape.size(); ++d) {
      const std::size_t coord = rem / out_strides[d];
      rem %= out_strides[d];
      if (padded[d] != 1) idx += coord * src_strides[d];
    }
    source[flat] = idx;
  }
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = x.data()[source[i]];
  return make_output("broadcast", shape, std::move(out), {x.impl()},
                     [source = std::move(source)](TensorImpl& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.ensure_grad();
                       for (std::size_t i = 0; i < source.size(); ++i) g[source[i]] += self.grad[i];
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto& shape = x.shape();
  if (axis >= shape.size() || begin >= end || end > shape[axis]) {
    throw ShapeError("slice: invalid range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " of " + shape_to_string(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t extent = shape[axis], width = end - begin;
  Shape out_shape = shape;
  out_shape[axis] = width;
  std::vector<double> out(outer * width * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.data().data() + (o * extent + begin) * inner, width * inner, out.data() + o * width * inner);
  }
  return make_output("slice", std::move(out_shape), std::move(out), {x.impl()},
                     [outer, inner, extent, begin, width](TensorImpl& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.ensure_grad();
                       for (std::size_t o = 0; o < outer; ++o) {
                         const double* src = self.grad.data() + o * width * inner;
                         double* dst = g.data() + (o * extent + begin) * inner;
                         for (std::size_t i = 0; i < width * inner; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw ShapeError("concat: axis out of range");
  std::size_t total_extent = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != out_shape[d]) {
        throw ShapeError("concat: shape mismatch " + shape_to_string(s) + " vs " + shape_to_string(out_shape));
      }
    }
    total_extent += s[axis];
  }
  out_shape[axis] = total_extent;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (std::size_t d = axis + 1; d < out_shape.size(); ++d) inner *= out_shape[d];
  std::vector<double> out(outer * total_extent * inner);
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> extents;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t e = p.shape()[axis];
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().data() + o * e * inner, e * inner, out.data() + (o * total_extent + offset) * inner);
    }
    offsets.push_back(offset);
    extents.push_back(e);
    inputs.push_back(p.impl());
    offset += e;
  }
  return make_output("concat", std::move(out_shape), std::move(out), std::move(inputs),
                     [outer, inner, total_extent, offsets = std::move(offsets),
                      extents = std::move(extents)](TensorImpl& self) {
                       for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                         auto& in = *self.inputs[k];
                         if (!in.requires_grad) continue;
                         auto& g = in.ensure_grad();
                         const std::size_t e = extents[k];
                         for (std::size_t o = 0; o < outer; ++o) {
                           const double* src = self.grad.data() + (o * total_extent + offsets[k]) * inner;
                           double* dst = g.data() + o * e * inner;
                           for (std::size_t i = 0; i < e * inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor detach(const Tensor& x) { return Tensor::from(x.shape(), std::vector<double>(x.data().begin(), x.data().end())); }

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_to_string(x.shape()) + " to " + shape_to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_output("reshape", shape, std::move(out), {x.impl()}, [](TensorImpl& self) {
    accumulate(*self.inputs[0], self.grad, [](std::size_t) { return 1.0; });
  });
}

Tensor minimum(const Tensor& a, const Tensor& b) { return sub(a, relu(sub(a, b))); }

Tensor abs(const Tensor& x) { return add(relu(x), relu(neg(x))); }

Tensor constant_like(const Tensor& like, double value) { return Tensor::full(like.shape(), value); }

}  // namespace ssdlab::diff

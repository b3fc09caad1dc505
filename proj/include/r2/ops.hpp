#pragma once

// Differentiable operations on Tensor<T>. Every op returning a tensor
// records a backward closure when gradients are enabled. Conventions:
//   conv2d            cross-correlation, PyTorch-style shapes
//   affine_grid       corner-aligned normalization: extreme lattice points
//                     map to exactly +-1, so 90-degree multiples land on
//                     input grid points for any size
//   grid_sample       bilinear, zero padding outside [-1,1], differentiable
//                     w.r.t. input and grid
//   max pooling       ties break toward the lowest linear index

#include "r2/tensor.hpp"

namespace r2 {

namespace detail {

// 90-degree-multiple grids must hit lattice points exactly. The base
// coordinates 2i/(n-1) are not exactly representable, so unnormalized
// sample coordinates are snapped to the nearest integer when within a
// tolerance far below any meaningful perturbation.
template <typename T>
constexpr double snap_tol() {
  return std::is_same_v<T, float> ? 1e-4 : 1e-9;
}

inline double corner_coord(std::int64_t i, std::int64_t n) {
  return n <= 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(),
        "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto an = a.node(), bn = b.node();
  return make_node<T>("add", a.shape(), std::move(out), {a, b},
                      [an, bn](const std::vector<T>& og) {
                        if (an->requires_grad)
                          for (std::size_t i = 0; i < og.size(); ++i) an->tmp[i] += og[i];
                        if (bn->requires_grad)
                          for (std::size_t i = 0; i < og.size(); ++i) bn->tmp[i] += og[i];
                      });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(),
        "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto an = a.node(), bn = b.node();
  return make_node<T>("sub", a.shape(), std::move(out), {a, b},
                      [an, bn](const std::vector<T>& og) {
                        if (an->requires_grad)
                          for (std::size_t i = 0; i < og.size(); ++i) an->tmp[i] += og[i];
                        if (bn->requires_grad)
                          for (std::size_t i = 0; i < og.size(); ++i) bn->tmp[i] -= og[i];
                      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(),
        "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto an = a.node(), bn = b.node();
  return make_node<T>("mul", a.shape(), std::move(out), {a, b},
                      [an, bn](const std::vector<T>& og) {
                        if (an->requires_grad)
                          for (std::size_t i = 0; i < og.size(); ++i)
                            an->tmp[i] += og[i] * bn->data[i];
                        if (bn->requires_grad)
                          for (std::size_t i = 0; i < og.size(); ++i)
                            bn->tmp[i] += og[i] * an->data[i];
                      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  auto an = a.node();
  return make_node<T>("scale", a.shape(), std::move(out), {a},
                      [an, s](const std::vector<T>& og) {
                        if (an->requires_grad)
                          for (std::size_t i = 0; i < og.size(); ++i) an->tmp[i] += og[i] * s;
                      });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  std::vector<T> out(x.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    T v = x.data()[i];
    out[i] = v / (T(1) + std::exp(-v));
  }
  auto xn = x.node();
  return make_node<T>("silu", x.shape(), std::move(out), {x},
                      [xn](const std::vector<T>& og) {
                        if (!xn->requires_grad) return;
                        for (std::size_t i = 0; i < og.size(); ++i) {
                          T v = xn->data[i];
                          T s = T(1) / (T(1) + std::exp(-v));
                          xn->tmp[i] += og[i] * s * (T(1) + v * (T(1) - s));
                        }
                      });
}

// bias broadcast along one axis
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias, std::size_t axis) {
  check(axis < x.rank(), "add_bias: axis out of range");
  check(bias.rank() == 1 && bias.dim(0) == x.dim(axis),
        "add_bias: bias length " + shape_str(bias.shape()) + " does not match axis extent");
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::int64_t extent = x.dim(axis);
  std::vector<T> out(x.data().size());
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t e = 0; e < extent; ++e) {
      const T b = bias.data()[e];
      const std::int64_t base = (o * extent + e) * inner;
      for (std::int64_t i = 0; i < inner; ++i) out[base + i] = x.data()[base + i] + b;
    }
  auto xn = x.node(), bn = bias.node();
  return make_node<T>("add_bias", x.shape(), std::move(out), {x, bias},
                      [xn, bn, outer, extent, inner](const std::vector<T>& og) {
                        if (xn->requires_grad)
                          for (std::size_t i = 0; i < og.size(); ++i) xn->tmp[i] += og[i];
                        if (bn->requires_grad)
                          for (std::int64_t o = 0; o < outer; ++o)
                            for (std::int64_t e = 0; e < extent; ++e) {
                              const std::int64_t base = (o * extent + e) * inner;
                              T acc = 0;
                              for (std::int64_t i = 0; i < inner; ++i) acc += og[base + i];
                              bn->tmp[e] += acc;
                            }
                      });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  check(numel(shape) == x.size(), "reshape: cannot view " + shape_str(x.shape()) + " as " +
                                      shape_str(shape) + " (element count differs)");
  auto xn = x.node();
  return make_node<T>("reshape", std::move(shape), std::vector<T>(x.data()), {x},
                      [xn](const std::vector<T>& og) {
                        if (xn->requires_grad)
                          for (std::size_t i = 0; i < og.size(); ++i) xn->tmp[i] += og[i];
                      });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  check(!xs.empty(), "concat: empty input list");
  check(axis < xs[0].rank(), "concat: axis out of range");
  Shape shape = xs[0].shape();
  std::int64_t total = 0;
  for (const auto& x : xs) {
    check(x.rank() == shape.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < shape.size(); ++i)
      check(i == axis || x.dim(i) == shape[i],
            "concat: dim mismatch at axis " + std::to_string(i));
    total += x.dim(axis);
  }
  shape[axis] = total;
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  std::vector<T> out(static_cast<std::size_t>(numel(shape)));
  std::vector<std::int64_t> offsets(xs.size());
  std::int64_t off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    offsets[k] = off;
    const std::int64_t ext = xs[k].dim(axis);
    for (std::int64_t o = 0; o < outer; ++o) {
      const T* src = xs[k].data().data() + o * ext * inner;
      T* dst = out.data() + (o * total + off) * inner;
      std::copy(src, src + ext * inner, dst);
    }
    off += ext;
  }
  std::vector<std::shared_ptr<typename Tensor<T>::Node>> nodes;
  std::vector<std::int64_t> exts;
  for (const auto& x : xs) {
    nodes.push_back(x.node());
    exts.push_back(x.dim(axis));
  }
  return make_node<T>("concat", std::move(shape), std::move(out), xs,
                      [nodes, exts, offsets, outer, inner, total](const std::vector<T>& og) {
                        for (std::size_t k = 0; k < nodes.size(); ++k) {
                          if (!nodes[k]->requires_grad) continue;
                          for (std::int64_t o = 0; o < outer; ++o) {
                            const T* src = og.data() + (o * total + offsets[k]) * inner;
                            T* dst = nodes[k]->tmp.data() + o * exts[k] * inner;
                            for (std::int64_t i = 0; i < exts[k] * inner; ++i) dst[i] += src[i];
                          }
                        }
                      });
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::int64_t start, std::int64_t len) {
  check(axis < x.rank(), "narrow: axis out of range");
  check(start >= 0 && len >= 1 && start + len <= x.dim(axis),
        "narrow: range [" + std::to_string(start) + "," + std::to_string(start + len) +
            ") out of bounds for extent " + std::to_string(x.dim(axis)));
  Shape shape = x.shape();
  const std::int64_t ext = shape[axis];
  shape[axis] = len;
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<T> out(static_cast<std::size_t>(numel(shape)));
  for (std::int64_t o = 0; o < outer; ++o) {
    const T* src = x.data().data() + (o * ext + start) * inner;
    std::copy(src, src + len * inner, out.data() + o * len * inner);
  }
  auto xn = x.node();
  return make_node<T>("narrow", std::move(shape), std::move(out), {x},
                      [xn, outer, inner, ext, start, len](const std::vector<T>& og) {
                        if (!xn->requires_grad) return;
                        for (std::int64_t o = 0; o < outer; ++o) {
                          const T* src = og.data() + o * len * inner;
                          T* dst = xn->tmp.data() + (o * ext + start) * inner;
                          for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                        }
                      });
}

// out[i] = in[(i - offset) mod extent] along axis; offset 1 maps (a,b,c,d)
// to (d,a,b,c).
template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, std::size_t axis, std::int64_t offset) {
  check(axis < x.rank(), "cyclic_shift: axis out of range");
  const std::int64_t ext = x.dim(axis);
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::int64_t off = ((offset % ext) + ext) % ext;
  std::vector<T> out(x.data().size());
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t e = 0; e < ext; ++e) {
      const std::int64_t s = (e - off + ext) % ext;
      const T* src = x.data().data() + (o * ext + s) * inner;
      std::copy(src, src + inner, out.data() + (o * ext + e) * inner);
    }
  auto xn = x.node();
  return make_node<T>("cyclic_shift", x.shape(), std::move(out), {x},
                      [xn, outer, inner, ext, off](const std::vector<T>& og) {
                        if (!xn->requires_grad) return;
                        for (std::int64_t o = 0; o < outer; ++o)
                          for (std::int64_t e = 0; e < ext; ++e) {
                            const std::int64_t s = (e - off + ext) % ext;
                            const T* src = og.data() + (o * ext + e) * inner;
                            T* dst = xn->tmp.data() + (o * ext + s) * inner;
                            for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
                          }
                      });
}

// Rotates the last two (square) axes counterclockwise by g*90 degrees:
// g=1 maps out(i,j) = in(j, n-1-i). A lossless permutation.
template <typename T>
Tensor<T> rot_spatial(const Tensor<T>& x, int g) {
  check(x.rank() >= 2, "rot_spatial: rank must be >= 2");
  const std::int64_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  check(h == w, "rot_spatial: spatial dims must be square, got " + shape_str(x.shape()));
  const int r = ((g % 4) + 4) % 4;
  if (r == 0) {
    auto xn = x.node();
    return make_node<T>("rot_spatial", x.shape(), std::vector<T>(x.data()), {x},
                        [xn](const std::vector<T>& og) {
                          if (xn->requires_grad)
                            for (std::size_t i = 0; i < og.size(); ++i) xn->tmp[i] += og[i];
                        });
  }
  const std::int64_t n = h;
  std::int64_t outer = 1;
  for (std::size_t i = 0; i + 2 < x.rank(); ++i) outer *= x.dim(i);
  auto src_index = [n, r](std::int64_t i, std::int64_t j) -> std::int64_t {
    switch (r) {
      case 1: return j * n + (n - 1 - i);
      case 2: return (n - 1 - i) * n + (n - 1 - j);
      default: return (n - 1 - j) * n + i;  // r == 3
    }
  };
  std::vector<T> out(x.data().size());
  for (std::int64_t o = 0; o < outer; ++o) {
    const T* src = x.data().data() + o * n * n;
    T* dst = out.data() + o * n * n;
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < n; ++j) dst[i * n + j] = src[src_index(i, j)];
  }
  auto xn = x.node();
  return make_node<T>("rot_spatial", x.shape(), std::move(out), {x},
                      [xn, outer, n, src_index](const std::vector<T>& og) {
                        if (!xn->requires_grad) return;
                        for (std::int64_t o = 0; o < outer; ++o) {
                          const T* src = og.data() + o * n * n;
                          T* dst = xn->tmp.data() + o * n * n;
                          for (std::int64_t i = 0; i < n; ++i)
                            for (std::int64_t j = 0; j < n; ++j)
                              dst[src_index(i, j)] += src[i * n + j];
                        }
                      });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  auto xn = x.node();
  return make_node<T>("sum_all", Shape{1}, std::vector<T>{acc}, {x},
                      [xn](const std::vector<T>& og) {
                        if (!xn->requires_grad) return;
                        for (std::size_t i = 0; i < xn->tmp.size(); ++i) xn->tmp[i] += og[0];
                      });
}

// max over one axis (removed from the shape); ties toward lowest index
template <typename T>
Tensor<T> reduce_max(const Tensor<T>& x, std::size_t axis) {
  check(axis < x.rank(), "reduce_max: axis out of range");
  const std::int64_t ext = x.dim(axis);
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  Shape shape;
  for (std::size_t i = 0; i < x.rank(); ++i)
    if (i != axis) shape.push_back(x.dim(i));
  if (shape.empty()) shape.push_back(1);
  std::vector<T> out(static_cast<std::size_t>(outer * inner));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      T best = x.data()[(o * ext) * inner + i];
      std::int64_t bi = 0;
      for (std::int64_t e = 1; e < ext; ++e) {
        T v = x.data()[(o * ext + e) * inner + i];
        if (v > best) {
          best = v;
          bi = e;
        }
      }
      out[o * inner + i] = best;
      (*argmax)[o * inner + i] = (o * ext + bi) * inner + i;
    }
  auto xn = x.node();
  return make_node<T>("reduce_max", std::move(shape), std::move(out), {x},
                      [xn, argmax](const std::vector<T>& og) {
                        if (!xn->requires_grad) return;
                        for (std::size_t i = 0; i < og.size(); ++i)
                          xn->tmp[(*argmax)[i]] += og[i];
                      });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  check(x.rank() == 4, "global_avg_pool: expected (b,c,h,w), got " + shape_str(x.shape()));
  const std::int64_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(static_cast<std::size_t>(b * c));
  for (std::int64_t i = 0; i < b * c; ++i) {
    T acc = 0;
    const T* p = x.data().data() + i * hw;
    for (std::int64_t k = 0; k < hw; ++k) acc += p[k];
    out[i] = acc / static_cast<T>(hw);
  }
  auto xn = x.node();
  return make_node<T>("global_avg_pool", Shape{b, c}, std::move(out), {x},
                      [xn, b, c, hw](const std::vector<T>& og) {
                        if (!xn->requires_grad) return;
                        for (std::int64_t i = 0; i < b * c; ++i) {
                          const T g = og[i] / static_cast<T>(hw);
                          T* p = xn->tmp.data() + i * hw;
                          for (std::int64_t k = 0; k < hw; ++k) p[k] += g;
                        }
                      });
}

// ---------------------------------------------------------------------------
// matmul / loss
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.rank() == 2 && b.rank() == 2, "matmul: expects 2-d tensors");
  check(a.dim(1) == b.dim(0), "matmul: inner dims differ, " + shape_str(a.shape()) + " x " +
                                  shape_str(b.shape()));
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m * n), T(0));
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = a.data()[i * k + p];
      const T* brow = b.data().data() + p * n;
      T* orow = out.data() + i * n;
      for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  auto an = a.node(), bn = b.node();
  return make_node<T>("matmul", Shape{m, n}, std::move(out), {a, b},
                      [an, bn, m, k, n](const std::vector<T>& og) {
                        if (an->requires_grad)
                          for (std::int64_t i = 0; i < m; ++i)
                            for (std::int64_t p = 0; p < k; ++p) {
                              T acc = 0;
                              const T* brow = bn->data.data() + p * n;
                              const T* grow = og.data() + i * n;
                              for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                              an->tmp[i * k + p] += acc;
                            }
                        if (bn->requires_grad)
                          for (std::int64_t i = 0; i < m; ++i)
                            for (std::int64_t p = 0; p < k; ++p) {
                              const T av = an->data[i * k + p];
                              const T* grow = og.data() + i * n;
                              T* brow = bn->tmp.data() + p * n;
                              for (std::int64_t j = 0; j < n; ++j) brow[j] += av * grow[j];
                            }
                      });
}

// Mean cross-entropy over the batch; numerically stable softmax.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<std::int64_t>& labels) {
  check(logits.rank() == 2, "softmax_cross_entropy: expected (batch, classes)");
  const std::int64_t b = logits.dim(0), c = logits.dim(1);
  check(static_cast<std::int64_t>(labels.size()) == b,
        "softmax_cross_entropy: label count " + std::to_string(labels.size()) +
            " does not match batch " + std::to_string(b));
  for (auto l : labels)
    if (l < 0 || l >= c)
      throw ValueError("softmax_cross_entropy: label " + std::to_string(l) +
                       " out of range [0," + std::to_string(c) + ")");
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(b * c));
  T loss = 0;
  for (std::int64_t i = 0; i < b; ++i) {
    const T* row = logits.data().data() + i * c;
    T mx = row[0];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T denom = 0;
    for (std::int64_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    const T logz = std::log(denom) + mx;
    for (std::int64_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(row[j] - logz);
    loss += logz - row[labels[i]];
  }
  loss /= static_cast<T>(b);
  auto ln = logits.node();
  auto lbl = std::make_shared<std::vector<std::int64_t>>(labels);
  return make_node<T>("softmax_cross_entropy", Shape{1}, std::vector<T>{loss}, {logits},
                      [ln, probs, lbl, b, c](const std::vector<T>& og) {
                        if (!ln->requires_grad) return;
                        const T s = og[0] / static_cast<T>(b);
                        for (std::int64_t i = 0; i < b; ++i)
                          for (std::int64_t j = 0; j < c; ++j) {
                            T g = (*probs)[i * c + j];
                            if (j == (*lbl)[i]) g -= T(1);
                            ln->tmp[i * c + j] += s * g;
                          }
                      });
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

struct ConvDims {
  std::int64_t b, ci, h, w, co, cig, kh, kw, oh, ow, groups, stride, padding;
};

template <typename T>
ConvDims conv_check(const Tensor<T>& input, const Tensor<T>& weight, std::int64_t stride,
                    std::int64_t padding, std::int64_t groups) {
  check(input.rank() == 4, "conv2d: input must be (b,ci,h,w), got " + shape_str(input.shape()));
  check(weight.rank() == 4,
        "conv2d: weight must be (co,ci/g,kh,kw), got " + shape_str(weight.shape()));
  check(stride >= 1, "conv2d: stride must be >= 1");
  check(padding >= 0, "conv2d: padding must be >= 0");
  check(groups >= 1, "conv2d: groups must be >= 1");
  ConvDims d;
  d.b = input.dim(0);
  d.ci = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.co = weight.dim(0);
  d.cig = weight.dim(1);
  d.kh = weight.dim(2);
  d.kw = weight.dim(3);
  d.groups = groups;
  d.stride = stride;
  d.padding = padding;
  check(d.ci % groups == 0, "conv2d: groups " + std::to_string(groups) +
                                " do not divide input channels " + std::to_string(d.ci));
  check(d.co % groups == 0, "conv2d: groups " + std::to_string(groups) +
                                " do not divide output channels " + std::to_string(d.co));
  check(d.cig == d.ci / groups, "conv2d: weight channel dim " + std::to_string(d.cig) +
                                    " != ci/groups = " + std::to_string(d.ci / groups));
  d.oh = (d.h + 2 * padding - d.kh) / stride + 1;
  d.ow = (d.w + 2 * padding - d.kw) / stride + 1;
  check(d.h + 2 * padding >= d.kh && d.w + 2 * padding >= d.kw,
        "conv2d: kernel larger than padded input");
  return d;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, std::int64_t stride = 1,
                 std::int64_t padding = 0, std::int64_t groups = 1) {
  const ConvDims d = conv_check(input, weight, stride, padding, groups);
  const T* X = input.data().data();
  const T* W = weight.data().data();
  std::vector<T> out(static_cast<std::size_t>(d.b * d.co * d.oh * d.ow), T(0));
  const std::int64_t copg = d.co / d.groups;

  if (d.kh == 1 && d.kw == 1 && stride == 1 && padding == 0) {
    // pointwise fast path: per-pixel channel mixing
    const std::int64_t hw = d.h * d.w;
    for (std::int64_t n = 0; n < d.b; ++n)
      for (std::int64_t oc = 0; oc < d.co; ++oc) {
        const std::int64_t g = oc / copg;
        T* orow = out.data() + (n * d.co + oc) * hw;
        for (std::int64_t icr = 0; icr < d.cig; ++icr) {
          const T wv = W[oc * d.cig + icr];
          if (wv == T(0)) continue;
          const T* xrow = X + (n * d.ci + g * d.cig + icr) * hw;
          for (std::int64_t p = 0; p < hw; ++p) orow[p] += wv * xrow[p];
        }
      }
  } else {
    for (std::int64_t n = 0; n < d.b; ++n)
      for (std::int64_t oc = 0; oc < d.co; ++oc) {
        const std::int64_t g = oc / copg;
        for (std::int64_t oy = 0; oy < d.oh; ++oy)
          for (std::int64_t ox = 0; ox < d.ow; ++ox) {
            T acc = 0;
            for (std::int64_t icr = 0; icr < d.cig; ++icr) {
              const std::int64_t ic = g * d.cig + icr;
              const T* xp = X + (n * d.ci + ic) * d.h * d.w;
              const T* wp = W + (oc * d.cig + icr) * d.kh * d.kw;
              for (std::int64_t ky = 0; ky < d.kh; ++ky) {
                const std::int64_t iy = oy * stride + ky - padding;
                if (iy < 0 || iy >= d.h) continue;
                for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                  const std::int64_t ix = ox * stride + kx - padding;
                  if (ix < 0 || ix >= d.w) continue;
                  acc += xp[iy * d.w + ix] * wp[ky * d.kw + kx];
                }
              }
            }
            out[((n * d.co + oc) * d.oh + oy) * d.ow + ox] = acc;
          }
      }
  }

  auto xn = input.node(), wn = weight.node();
  return make_node<T>(
      "conv2d", Shape{d.b, d.co, d.oh, d.ow}, std::move(out), {input, weight},
      [xn, wn, d](const std::vector<T>& og) {
        const std::int64_t copg = d.co / d.groups;
        if (d.kh == 1 && d.kw == 1 && d.stride == 1 && d.padding == 0) {
          const std::int64_t hw = d.h * d.w;
          for (std::int64_t n = 0; n < d.b; ++n)
            for (std::int64_t oc = 0; oc < d.co; ++oc) {
              const std::int64_t g = oc / copg;
              const T* grow = og.data() + (n * d.co + oc) * hw;
              for (std::int64_t icr = 0; icr < d.cig; ++icr) {
                const std::int64_t ic = g * d.cig + icr;
                if (xn->requires_grad) {
                  const T wv = wn->data[oc * d.cig + icr];
                  if (wv != T(0)) {
                    T* dx = xn->tmp.data() + (n * d.ci + ic) * hw;
                    for (std::int64_t p = 0; p < hw; ++p) dx[p] += wv * grow[p];
                  }
                }
                if (wn->requires_grad) {
                  const T* xrow = xn->data.data() + (n * d.ci + ic) * hw;
                  T acc = 0;
                  for (std::int64_t p = 0; p < hw; ++p) acc += xrow[p] * grow[p];
                  wn->tmp[oc * d.cig + icr] += acc;
                }
              }
            }
          return;
        }
        for (std::int64_t n = 0; n < d.b; ++n)
          for (std::int64_t oc = 0; oc < d.co; ++oc) {
            const std::int64_t g = oc / copg;
            for (std::int64_t oy = 0; oy < d.oh; ++oy)
              for (std::int64_t ox = 0; ox < d.ow; ++ox) {
                const T go = og[((n * d.co + oc) * d.oh + oy) * d.ow + ox];
                if (go == T(0)) continue;
                for (std::int64_t icr = 0; icr < d.cig; ++icr) {
                  const std::int64_t ic = g * d.cig + icr;
                  const std::int64_t xoff = (n * d.ci + ic) * d.h * d.w;
                  const std::int64_t woff = (oc * d.cig + icr) * d.kh * d.kw;
                  for (std::int64_t ky = 0; ky < d.kh; ++ky) {
                    const std::int64_t iy = oy * d.stride + ky - d.padding;
                    if (iy < 0 || iy >= d.h) continue;
                    for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                      const std::int64_t ix = ox * d.stride + kx - d.padding;
                      if (ix < 0 || ix >= d.w) continue;
                      if (xn->requires_grad)
                        xn->tmp[xoff + iy * d.w + ix] += go * wn->data[woff + ky * d.kw + kx];
                      if (wn->requires_grad)
                        wn->tmp[woff + ky * d.kw + kx] += go * xn->data[xoff + iy * d.w + ix];
                    }
                  }
                }
              }
          }
      });
}

// Adjoint of conv2d w.r.t. its input: <conv2d(x,w), y> == <x, conv2d_transposed(y,w)>.
// weight keeps the conv2d layout (co, ci/groups, kh, kw); input carries co
// channels and the output carries ci.
template <typename T>
Tensor<T> conv2d_transposed(const Tensor<T>& input, const Tensor<T>& weight,
                            std::int64_t stride = 1, std::int64_t padding = 0,
                            std::int64_t groups = 1) {
  check(input.rank() == 4, "conv2d_transposed: input must be (b,co,h,w)");
  check(weight.rank() == 4, "conv2d_transposed: weight must be (co,ci/g,kh,kw)");
  check(stride >= 1 && padding >= 0 && groups >= 1, "conv2d_transposed: bad stride/padding/groups");
  const std::int64_t b = input.dim(0), co = input.dim(1), h = input.dim(2), w = input.dim(3);
  check(weight.dim(0) == co, "conv2d_transposed: weight co " + std::to_string(weight.dim(0)) +
                                 " != input channels " + std::to_string(co));
  check(co % groups == 0, "conv2d_transposed: groups do not divide channels");
  const std::int64_t cig = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  const std::int64_t ci = cig * groups;
  const std::int64_t oh = (h - 1) * stride - 2 * padding + kh;
  const std::int64_t ow = (w - 1) * stride - 2 * padding + kw;
  check(oh >= 1 && ow >= 1, "conv2d_transposed: empty output");
  const std::int64_t copg = co / groups;

  const T* X = input.data().data();
  const T* W = weight.data().data();
  std::vector<T> out(static_cast<std::size_t>(b * ci * oh * ow), T(0));
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t oc = 0; oc < co; ++oc) {
      const std::int64_t g = oc / copg;
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
          const T v = X[((n * co + oc) * h + y) * w + x];
          if (v == T(0)) continue;
          for (std::int64_t icr = 0; icr < cig; ++icr) {
            const std::int64_t ic = g * cig + icr;
            T* op = out.data() + (n * ci + ic) * oh * ow;
            const T* wp = W + (oc * cig + icr) * kh * kw;
            for (std::int64_t ky = 0; ky < kh; ++ky) {
              const std::int64_t oy = y * stride + ky - padding;
              if (oy < 0 || oy >= oh) continue;
              for (std::int64_t kx = 0; kx < kw; ++kx) {
                const std::int64_t ox = x * stride + kx - padding;
                if (ox < 0 || ox >= ow) continue;
                op[oy * ow + ox] += v * wp[ky * kw + kx];
              }
            }
          }
        }
    }

  auto xn = input.node(), wn = weight.node();
  return make_node<T>(
      "conv2d_transposed", Shape{b, ci, oh, ow}, std::move(out), {input, weight},
      [xn, wn, b, co, h, w, ci, cig, kh, kw, oh, ow, stride, padding, copg](
          const std::vector<T>& og) {
        for (std::int64_t n = 0; n < b; ++n)
          for (std::int64_t oc = 0; oc < co; ++oc) {
            const std::int64_t g = oc / copg;
            for (std::int64_t y = 0; y < h; ++y)
              for (std::int64_t x = 0; x < w; ++x) {
                const std::int64_t xidx = ((n * co + oc) * h + y) * w + x;
                for (std::int64_t icr = 0; icr < cig; ++icr) {
                  const std::int64_t ic = g * cig + icr;
                  const T* gp = og.data() + (n * ci + ic) * oh * ow;
                  const std::int64_t woff = (oc * cig + icr) * kh * kw;
                  for (std::int64_t ky = 0; ky < kh; ++ky) {
                    const std::int64_t oy = y * stride + ky - padding;
                    if (oy < 0 || oy >= oh) continue;
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                      const std::int64_t ox = x * stride + kx - padding;
                      if (ox < 0 || ox >= ow) continue;
                      const T go = gp[oy * ow + ox];
                      if (xn->requires_grad) xn->tmp[xidx] += go * wn->data[woff + ky * kw + kx];
                      if (wn->requires_grad)
                        wn->tmp[woff + ky * kw + kx] += go * xn->data[xidx];
                    }
                  }
                }
              }
          }
      });
}

// ---------------------------------------------------------------------------
// affine grid + bilinear sampling
// ---------------------------------------------------------------------------

// theta: (n,2,3) row-major [[a,b,tx],[c,d,ty]]; output (n,h,w,2) of
// normalized (x,y) sampling coordinates. Corner-aligned: output pixel (i,j)
// has base coordinates (bx, by) with extremes at exactly +-1.
template <typename T>
Tensor<T> affine_grid(const Tensor<T>& theta, const Shape& out_shape) {
  check(theta.rank() == 3 && theta.dim(1) == 2 && theta.dim(2) == 3,
        "affine_grid: theta must be (n,2,3), got " + shape_str(theta.shape()));
  check(out_shape.size() == 4, "affine_grid: out_shape must be (n,c,h,w)");
  const std::int64_t n = out_shape[0], h = out_shape[2], w = out_shape[3];
  check(theta.dim(0) == n, "affine_grid: batch mismatch");
  check(h >= 1 && w >= 1, "affine_grid: output dims must be >= 1");
  std::vector<T> out(static_cast<std::size_t>(n * h * w * 2));
  const T* th = theta.data().data();
  for (std::int64_t b = 0; b < n; ++b) {
    const T* t = th + b * 6;
    for (std::int64_t i = 0; i < h; ++i) {
      const T by = static_cast<T>(detail::corner_coord(i, h));
      for (std::int64_t j = 0; j < w; ++j) {
        const T bx = static_cast<T>(detail::corner_coord(j, w));
        T* g = out.data() + ((b * h + i) * w + j) * 2;
        g[0] = t[0] * bx + t[1] * by + t[2];
        g[1] = t[3] * bx + t[4] * by + t[5];
      }
    }
  }
  auto tn = theta.node();
  return make_node<T>("affine_grid", Shape{n, h, w, 2}, std::move(out), {theta},
                      [tn, n, h, w](const std::vector<T>& og) {
                        if (!tn->requires_grad) return;
                        for (std::int64_t b = 0; b < n; ++b) {
                          T* dt = tn->tmp.data() + b * 6;
                          for (std::int64_t i = 0; i < h; ++i) {
                            const T by = static_cast<T>(detail::corner_coord(i, h));
                            for (std::int64_t j = 0; j < w; ++j) {
                              const T bx = static_cast<T>(detail::corner_coord(j, w));
                              const T* g = og.data() + ((b * h + i) * w + j) * 2;
                              dt[0] += g[0] * bx;
                              dt[1] += g[0] * by;
                              dt[2] += g[0];
                              dt[3] += g[1] * bx;
                              dt[4] += g[1] * by;
                              dt[5] += g[1];
                            }
                          }
                        }
                      });
}

// Bilinear sampling with zero padding outside [-1,1]. Differentiable w.r.t.
// both input and grid.
template <typename T>
Tensor<T> grid_sample(const Tensor<T>& input, const Tensor<T>& grid) {
  check(input.rank() == 4, "grid_sample: input must be (n,c,h,w)");
  check(grid.rank() == 4 && grid.dim(3) == 2, "grid_sample: grid must be (n,h,w,2)");
  check(grid.dim(0) == input.dim(0), "grid_sample: batch mismatch");
  const std::int64_t n = input.dim(0), c = input.dim(1), hi = input.dim(2), wi = input.dim(3);
  const std::int64_t ho = grid.dim(1), wo = grid.dim(2);
  for (T v : grid.data())
    if (!std::isfinite(v)) throw ValueError("grid_sample: non-finite grid coordinate");

  const double tol = detail::snap_tol<T>();
  auto unnormalize = [tol](T g, std::int64_t size) -> double {
    double f = (static_cast<double>(g) + 1.0) * 0.5 * static_cast<double>(size - 1);
    const double r = std::nearbyint(f);
    if (std::abs(f - r) < tol) f = r;
    return f;
  };

  std::vector<T> out(static_cast<std::size_t>(n * c * ho * wo), T(0));
  const T* X = input.data().data();
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t i = 0; i < ho; ++i)
      for (std::int64_t j = 0; j < wo; ++j) {
        const T* g = grid.data().data() + ((b * ho + i) * wo + j) * 2;
        const double fx = unnormalize(g[0], wi);
        const double fy = unnormalize(g[1], hi);
        const std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
        const std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
        const T wx1 = static_cast<T>(fx - static_cast<double>(x0)), wx0 = T(1) - wx1;
        const T wy1 = static_cast<T>(fy - static_cast<double>(y0)), wy0 = T(1) - wy1;
        const T wgt[4] = {wy0 * wx0, wy0 * wx1, wy1 * wx0, wy1 * wx1};
        const std::int64_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
        const std::int64_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
        for (std::int64_t ch = 0; ch < c; ++ch) {
          T acc = 0;
          const T* xp = X + (b * c + ch) * hi * wi;
          for (int k = 0; k < 4; ++k) {
            if (ys[k] < 0 || ys[k] >= hi || xs[k] < 0 || xs[k] >= wi) continue;
            if (wgt[k] == T(0)) continue;
            acc += wgt[k] * xp[ys[k] * wi + xs[k]];
          }
          out[((b * c + ch) * ho + i) * wo + j] = acc;
        }
      }

  auto xn = input.node(), gn = grid.node();
  return make_node<T>(
      "grid_sample", Shape{n, c, ho, wo}, std::move(out), {input, grid},
      [xn, gn, n, c, hi, wi, ho, wo, unnormalize](const std::vector<T>& og) {
        for (std::int64_t b = 0; b < n; ++b)
          for (std::int64_t i = 0; i < ho; ++i)
            for (std::int64_t j = 0; j < wo; ++j) {
              const T* g = gn->data.data() + ((b * ho + i) * wo + j) * 2;
              const double fx = unnormalize(g[0], wi);
              const double fy = unnormalize(g[1], hi);
              const std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
              const std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
              const T wx1 = static_cast<T>(fx - static_cast<double>(x0)), wx0 = T(1) - wx1;
              const T wy1 = static_cast<T>(fy - static_cast<double>(y0)), wy0 = T(1) - wy1;
              T dgx = 0, dgy = 0;
              for (std::int64_t ch = 0; ch < c; ++ch) {
                const T go = og[((b * c + ch) * ho + i) * wo + j];
                if (go == T(0) && !gn->requires_grad) continue;
                const T* xp = xn->data.data() + (b * c + ch) * hi * wi;
                T v[4] = {0, 0, 0, 0};
                const std::int64_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
                const std::int64_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
                const T wgt[4] = {wy0 * wx0, wy0 * wx1, wy1 * wx0, wy1 * wx1};
                for (int k = 0; k < 4; ++k) {
                  const bool in = ys[k] >= 0 && ys[k] < hi && xs[k] >= 0 && xs[k] < wi;
                  if (in) {
                    v[k] = xp[ys[k] * wi + xs[k]];
                    if (xn->requires_grad && go != T(0))
                      xn->tmp[(b * c + ch) * hi * wi + ys[k] * wi + xs[k]] += go * wgt[k];
                  }
                }
                if (gn->requires_grad) {
                  dgx += go * (wy0 * (v[1] - v[0]) + wy1 * (v[3] - v[2]));
                  dgy += go * (wx0 * (v[2] - v[0]) + wx1 * (v[3] - v[1]));
                }
              }
              if (gn->requires_grad) {
                T* gt = gn->tmp.data() + ((b * ho + i) * wo + j) * 2;
                gt[0] += dgx * static_cast<T>(wi - 1) * T(0.5);
                gt[1] += dgy * static_cast<T>(hi - 1) * T(0.5);
              }
            }
      });
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

// Max over k x k windows; padding cells are ignored (as if -inf). Ties break
// toward the lowest linear index.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::int64_t k, std::int64_t stride,
                     std::int64_t padding = 0) {
  check(x.rank() == 4, "max_pool2d: input must be (b,c,h,w)");
  check(k >= 1 && stride >= 1 && padding >= 0 && padding < k, "max_pool2d: bad window");
  const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = (h + 2 * padding - k) / stride + 1;
  const std::int64_t ow = (w + 2 * padding - k) / stride + 1;
  check(oh >= 1 && ow >= 1, "max_pool2d: window larger than padded input");
  std::vector<T> out(static_cast<std::size_t>(b * c * oh * ow));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  const T* X = x.data().data();
  for (std::int64_t bc = 0; bc < b * c; ++bc) {
    const T* xp = X + bc * h * w;
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        T best = 0;
        std::int64_t bi = -1;
        for (std::int64_t ky = 0; ky < k; ++ky) {
          const std::int64_t iy = oy * stride + ky - padding;
          if (iy < 0 || iy >= h) continue;
          for (std::int64_t kx = 0; kx < k; ++kx) {
            const std::int64_t ix = ox * stride + kx - padding;
            if (ix < 0 || ix >= w) continue;
            const T v = xp[iy * w + ix];
            if (bi < 0 || v > best) {
              best = v;
              bi = iy * w + ix;
            }
          }
        }
        check(bi >= 0, "max_pool2d: empty window");
        out[bc * oh * ow + oy * ow + ox] = best;
        (*argmax)[bc * oh * ow + oy * ow + ox] = bc * h * w + bi;
      }
  }
  auto xn = x.node();
  return make_node<T>("max_pool2d", Shape{b, c, oh, ow}, std::move(out), {x},
                      [xn, argmax](const std::vector<T>& og) {
                        if (!xn->requires_grad) return;
                        for (std::size_t i = 0; i < og.size(); ++i)
                          xn->tmp[(*argmax)[i]] += og[i];
                      });
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  bool initialized = false;
};

// Normalizes over every axis except axis 1 (channels). For group feature
// maps (b,c,4,h,w) the statistics are therefore shared across the group
// axis, which preserves strict equivariance.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, bool training, T momentum = T(0.1),
                     T eps = T(1e-5)) {
  check(x.rank() >= 2, "batch_norm: input rank must be >= 2");
  const std::int64_t c = x.dim(1);
  check(gamma.rank() == 1 && gamma.dim(0) == c, "batch_norm: gamma must have length " +
                                                    std::to_string(c));
  check(beta.rank() == 1 && beta.dim(0) == c, "batch_norm: beta must have length " +
                                                  std::to_string(c));
  const std::int64_t b = x.dim(0);
  std::int64_t inner = 1;
  for (std::size_t i = 2; i < x.rank(); ++i) inner *= x.dim(i);
  const std::int64_t cnt = b * inner;

  if (state.running_mean.empty()) {
    state.running_mean.assign(static_cast<std::size_t>(c), T(0));
    state.running_var.assign(static_cast<std::size_t>(c), T(1));
  }
  if (!training && !state.initialized)
    throw ValueError("batch_norm: eval mode before any training batch populated running stats");

  auto mean = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c), T(0));
  auto invstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c), T(0));
  const T* X = x.data().data();
  if (training) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      T m = 0;
      for (std::int64_t n = 0; n < b; ++n) {
        const T* p = X + (n * c + ch) * inner;
        for (std::int64_t i = 0; i < inner; ++i) m += p[i];
      }
      m /= static_cast<T>(cnt);
      T v = 0;
      for (std::int64_t n = 0; n < b; ++n) {
        const T* p = X + (n * c + ch) * inner;
        for (std::int64_t i = 0; i < inner; ++i) {
          const T dd = p[i] - m;
          v += dd * dd;
        }
      }
      v /= static_cast<T>(cnt);
      (*mean)[ch] = m;
      (*invstd)[ch] = T(1) / std::sqrt(v + eps);
      const T unbiased = cnt > 1 ? v * static_cast<T>(cnt) / static_cast<T>(cnt - 1) : v;
      state.running_mean[ch] = (T(1) - momentum) * state.running_mean[ch] + momentum * m;
      state.running_var[ch] = (T(1) - momentum) * state.running_var[ch] + momentum * unbiased;
    }
    state.initialized = true;
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      (*mean)[ch] = state.running_mean[ch];
      (*invstd)[ch] = T(1) / std::sqrt(state.running_var[ch] + eps);
    }
  }

  std::vector<T> out(x.data().size());
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T m = (*mean)[ch], is = (*invstd)[ch];
      const T ga = gamma.data()[ch], be = beta.data()[ch];
      const T* p = X + (n * c + ch) * inner;
      T* o = out.data() + (n * c + ch) * inner;
      for (std::int64_t i = 0; i < inner; ++i) o[i] = (p[i] - m) * is * ga + be;
    }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_node<T>(
      "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, mean, invstd, b, c, inner, cnt, training](const std::vector<T>& og) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const T m = (*mean)[ch], is = (*invstd)[ch];
          const T ga = gn->data[ch];
          // reductions over the normalization axes
          T sum_og = 0, sum_og_xhat = 0;
          for (std::int64_t n = 0; n < b; ++n) {
            const T* go = og.data() + (n * c + ch) * inner;
            const T* xp = xn->data.data() + (n * c + ch) * inner;
            for (std::int64_t i = 0; i < inner; ++i) {
              sum_og += go[i];
              sum_og_xhat += go[i] * (xp[i] - m) * is;
            }
          }
          if (gn->requires_grad) gn->tmp[ch] += sum_og_xhat;
          if (bn->requires_grad) bn->tmp[ch] += sum_og;
          if (!xn->requires_grad) continue;
          if (training) {
            const T inv_cnt = T(1) / static_cast<T>(cnt);
            for (std::int64_t n = 0; n < b; ++n) {
              const T* go = og.data() + (n * c + ch) * inner;
              const T* xp = xn->data.data() + (n * c + ch) * inner;
              T* dx = xn->tmp.data() + (n * c + ch) * inner;
              for (std::int64_t i = 0; i < inner; ++i) {
                const T xhat = (xp[i] - m) * is;
                dx[i] += ga * is * (go[i] - inv_cnt * sum_og - inv_cnt * xhat * sum_og_xhat);
              }
            }
          } else {
            for (std::int64_t n = 0; n < b; ++n) {
              const T* go = og.data() + (n * c + ch) * inner;
              T* dx = xn->tmp.data() + (n * c + ch) * inner;
              for (std::int64_t i = 0; i < inner; ++i) dx[i] += go[i] * ga * is;
            }
          }
        }
      });
}

}  // namespace r2

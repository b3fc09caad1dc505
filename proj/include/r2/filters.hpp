#pragma once

// Expansion of an initial filter into its 4-fold relaxed rotation-
// equivariant bank: per group element, assemble the perturbed 2x3 affine
// matrix, generate the corner-aligned grid over the filter's spatial
// support, and bilinearly resample. Pointwise filters additionally get a
// cyclic shift of their group input axis so the delta=0 limit reproduces
// standard regular-representation group convolution weights.

#include "r2/group.hpp"

namespace r2 {

enum class FilterFlavor { lifting, pointwise, depthwise };

inline const char* flavor_name(FilterFlavor f) {
  switch (f) {
    case FilterFlavor::lifting: return "lifting";
    case FilterFlavor::pointwise: return "pointwise";
    default: return "depthwise";
  }
}

// Learnable perturbation factor, 4x2x2, i.i.d. N(0, sigma).
template <typename T>
Tensor<T> init_delta(double sigma, std::mt19937_64& rng, bool trainable) {
  check(sigma >= 0, "init_delta: sigma must be non-negative");
  auto d = Tensor<T>::randn({4, 2, 2}, rng, sigma);
  d.set_requires_grad(trainable);
  return d;
}

// k_init shapes per flavor:
//   lifting    (co, ci, k, k)      -> k_rel (co, 4, ci, k, k)
//   pointwise  (co, ci, 4, 1, 1)   -> k_rel (co, 4, ci, 4, 1, 1)
//   depthwise  (co, 1, 1, k, k)    -> k_rel (co, 4, 1, 1, k, k)
// Fully differentiable w.r.t. k_init and delta.
template <typename T>
Tensor<T> build_relaxed_filters(const Tensor<T>& k_init, const Tensor<T>& delta,
                                FilterFlavor flavor) {
  check(delta.shape() == Shape({4, 2, 2}),
        "build_relaxed_filters: delta must be (4,2,2), got " + shape_str(delta.shape()));
  const Shape& s = k_init.shape();
  switch (flavor) {
    case FilterFlavor::lifting:
      check(s.size() == 4 && s[2] == s[3],
            "build_relaxed_filters: lifting filter must be (co,ci,k,k), got " + shape_str(s));
      break;
    case FilterFlavor::pointwise:
      check(s.size() == 5 && s[2] == 4 && s[3] == 1 && s[4] == 1,
            "build_relaxed_filters: pointwise filter must be (co,ci,4,1,1), got " + shape_str(s));
      break;
    case FilterFlavor::depthwise:
      check(s.size() == 5 && s[1] == 1 && s[2] == 1 && s[3] == s[4],
            "build_relaxed_filters: depthwise filter must be (co,1,1,k,k), got " + shape_str(s));
      break;
  }
  const std::int64_t k = s.back();
  const std::int64_t planes = numel(s) / (k * k);
  const Tensor<T> zero_col = Tensor<T>::zeros({2, 1});

  std::vector<Tensor<T>> slices;
  slices.reserve(4);
  Shape slice_shape = s;
  slice_shape.insert(slice_shape.begin() + 1, 1);
  for (int i = 0; i < 4; ++i) {
    // [A_i^c + Delta_i | 0], repeated across all filter planes via a single
    // batch entry with planes as channels.
    auto theta = reshape(concat<T>({relaxed_affine(i, delta), zero_col}, 1), {1, 2, 3});
    Tensor<T> source = flavor == FilterFlavor::pointwise ? cyclic_shift(k_init, 2, i) : k_init;
    auto flat = reshape(source, {1, planes, k, k});
    auto grid = affine_grid(theta, {1, planes, k, k});
    auto warped = grid_sample(flat, grid);
    slices.push_back(reshape(warped, slice_shape));
  }
  return concat(slices, 1);
}

// Max-absolute elementwise distance between two banks.
template <typename T>
T strictness_gap(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "strictness_gap: shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  T m = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace r2

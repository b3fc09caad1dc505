#pragma once

// The cyclic rotation group C4 and its actions: composition on indices,
// exact affine matrices, the relaxed (perturbed) matrices, and the input /
// regular-representation actions on tensors.

#include <array>

#include "r2/ops.hpp"

namespace r2 {

namespace c4 {

inline constexpr int order = 4;

inline int compose(int i, int j) { return (((i + j) % 4) + 4) % 4; }
inline int inverse(int i) { return (4 - (((i % 4) + 4) % 4)) % 4; }

}  // namespace c4

// Row-major 2x2 matrix.
using Mat2 = std::array<double, 4>;

// Rotation matrix for c^i with entries snapped to exact {-1,0,1}; trig
// calls would spoil the exact-equivariance tests.
inline Mat2 strict_affine(int i) {
  switch ((((i % 4) + 4) % 4)) {
    case 0: return {1, 0, 0, 1};
    case 1: return {0, -1, 1, 0};
    case 2: return {-1, 0, 0, -1};
    default: return {0, 1, -1, 0};
  }
}

template <typename T>
Tensor<T> strict_affine_tensor(int i) {
  const Mat2 m = strict_affine(i);
  return Tensor<T>::from_data({2, 2}, {static_cast<T>(m[0]), static_cast<T>(m[1]),
                                       static_cast<T>(m[2]), static_cast<T>(m[3])});
}

// A_i^r = A_i^c + Delta_i; differentiable in delta.
template <typename T>
Tensor<T> relaxed_affine(int i, const Tensor<T>& delta) {
  check(delta.shape() == Shape({4, 2, 2}),
        "relaxed_affine: delta must be (4,2,2), got " + shape_str(delta.shape()));
  auto di = reshape(narrow(delta, 0, (((i % 4) + 4) % 4), 1), {2, 2});
  return add(di, strict_affine_tensor<T>(i));
}

inline Mat2 mat_mul(const Mat2& a, const Mat2& b) {
  return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
          a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}

// Matrix-vector action on a list of coordinates.
inline std::vector<std::array<double, 2>> act_on_coords(
    const Mat2& m, const std::vector<std::array<double, 2>>& coords) {
  std::vector<std::array<double, 2>> out;
  out.reserve(coords.size());
  for (const auto& uv : coords)
    out.push_back({m[0] * uv[0] + m[1] * uv[1], m[2] * uv[0] + m[3] * uv[1]});
  return out;
}

// rho_X: exact spatial rotation of a (...,h,w) tensor by g*90 degrees CCW.
// Requires square spatial dims (non-square rotation changes the shape).
template <typename T>
Tensor<T> act_on_input(int g, const Tensor<T>& x) {
  return rot_spatial(x, g);
}

// rho_Y (regular representation): spatial rotation combined with a cyclic
// shift of the group axis. f has layout (b, c, 4, h, w).
template <typename T>
Tensor<T> act_on_group_feature(int g, const Tensor<T>& f) {
  check(f.rank() == 5 && f.dim(2) == 4,
        "act_on_group_feature: expected (b,c,4,h,w), got " + shape_str(f.shape()));
  return rot_spatial(cyclic_shift(f, 2, g), g);
}

}  // namespace r2

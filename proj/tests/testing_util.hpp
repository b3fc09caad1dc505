#pragma once

// Shared test oracles: central finite differences against the tape,
// independent array-rotation, and tolerance helpers. These stay
// independent of the implementation paths they check.

#include <gtest/gtest.h>

#include <functional>

#include "r2/tensor.hpp"

namespace r2::testing {

inline bool close(double a, double b, double rtol, double atol = 1e-8) {
  return std::abs(a - b) <= rtol * std::max(std::abs(a), std::abs(b)) + atol;
}

// Central finite-difference check of dLoss/dParam against the recorded
// gradient. make_loss must rebuild the forward pass from current leaf data.
// Checks every entry when the parameter is small, otherwise a seeded sample.
inline void expect_grad_matches(const std::function<Tensor<double>()>& make_loss,
                                Tensor<double>& param, double eps = 1e-5, double rtol = 1e-5,
                                double atol = 1e-8, int max_checks = 64,
                                std::uint64_t seed = 17) {
  ASSERT_TRUE(param.requires_grad());
  param.zero_grad();
  make_loss().backward();
  const std::vector<double> grad = param.grad();

  std::vector<std::size_t> idx(param.data().size());
  std::iota(idx.begin(), idx.end(), 0);
  if (static_cast<int>(idx.size()) > max_checks) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(max_checks));
  }

  for (std::size_t k : idx) {
    const double orig = param.data()[k];
    param.data()[k] = orig + eps;
    const double lp = make_loss().item();
    param.data()[k] = orig - eps;
    const double lm = make_loss().item();
    param.data()[k] = orig;
    const double fd = (lp - lm) / (2.0 * eps);
    EXPECT_TRUE(close(grad[k], fd, rtol, atol))
        << "index " << k << ": tape grad " << grad[k] << " vs finite diff " << fd;
  }
}

// Independent CCW array rotation (index bookkeeping only, no sampling).
template <typename T>
std::vector<T> rotate_array_ccw(const std::vector<T>& in, std::int64_t n, int times) {
  std::vector<T> cur = in, next(in.size());
  for (int t = 0; t < ((times % 4) + 4) % 4; ++t) {
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < n; ++j) next[i * n + j] = cur[j * n + (n - 1 - i)];
    std::swap(cur, next);
  }
  return cur;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  return m;
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double stddev = 1.0,
                        bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  auto t = Tensor<T>::randn(std::move(shape), rng, stddev);
  t.set_requires_grad(requires_grad);
  return t;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  EXPECT_EQ(a.data().size(), b.data().size());
  double acc = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    acc += static_cast<double>(a.data()[i]) * static_cast<double>(b.data()[i]);
  return acc;
}

}  // namespace r2::testing

#pragma once

// Empirical equivariance auditing: the equivariance error over a finite
// probe set (a lower bound on the definition's sup), an empirical
// Lipschitz estimate, and two bound checks instantiated with those
// empirical quantities. Both checks hold by construction up to floating-
// point slack on self-consistent inputs; they guard implementation
// consistency, not the underlying theory.

#include "r2/data.hpp"
#include "r2/group.hpp"

namespace r2 {

template <typename T>
struct ProbeSet {
  std::vector<Tensor<T>> inputs;  // square spatial, identical shapes
  std::uint64_t seed = 0;
};

template <typename T>
ProbeSet<T> gaussian_probes(std::uint64_t seed, int count, const Shape& shape) {
  check(count >= 1, "gaussian_probes: need at least one probe");
  check(shape.size() >= 2 && shape[shape.size() - 1] == shape[shape.size() - 2],
        "gaussian_probes: square spatial shape required");
  std::mt19937_64 rng(seed_stream(seed, 0xBEEF));
  ProbeSet<T> ps;
  ps.seed = seed;
  for (int i = 0; i < count; ++i) ps.inputs.push_back(Tensor<T>::randn(shape, rng));
  return ps;
}

// Half natural samples (cycled from a pool), half unit Gaussian.
template <typename T>
ProbeSet<T> mixed_probes(std::uint64_t seed, int count, const Shape& shape,
                         const std::vector<Tensor<T>>& natural) {
  ProbeSet<T> ps = gaussian_probes<T>(seed, count, shape);
  const int n_nat = natural.empty() ? 0 : count / 2;
  for (int i = 0; i < n_nat; ++i) {
    const auto& nat = natural[static_cast<std::size_t>(i) % natural.size()];
    check(nat.shape() == shape, "mixed_probes: natural sample shape mismatch");
    ps.inputs[static_cast<std::size_t>(i)] = nat.detach();
  }
  return ps;
}

// Natural probes drawn from a dataset (first `count` images as batch-1 tensors).
template <typename T>
std::vector<Tensor<T>> dataset_probes(const LabeledImageSet& set, int count) {
  std::vector<Tensor<T>> out;
  const std::int64_t c = set.images.dim(1), h = set.images.dim(2), w = set.images.dim(3);
  const std::int64_t plane = c * h * w;
  for (int i = 0; i < count && i < set.count(); ++i) {
    std::vector<T> d(static_cast<std::size_t>(plane));
    const float* src = set.images.data().data() + i * plane;
    for (std::int64_t k = 0; k < plane; ++k) d[static_cast<std::size_t>(k)] = static_cast<T>(src[k]);
    out.push_back(Tensor<T>::from_data({1, c, h, w}, std::move(d)));
  }
  return out;
}

template <typename T>
T l2_norm(const Tensor<T>& x) {
  double acc = 0;
  for (T v : x.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  return static_cast<T>(std::sqrt(acc));
}

template <typename T>
T l2_distance(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "l2_distance: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  double acc = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    acc += d * d;
  }
  return static_cast<T>(std::sqrt(acc));
}

// Output actions rho_Y.
template <typename T>
Tensor<T> action_identity(int, const Tensor<T>& y) {
  return y;
}
template <typename T>
Tensor<T> action_regular(int g, const Tensor<T>& y) {
  return act_on_group_feature(g, y);
}
template <typename T>
Tensor<T> action_rotation(int g, const Tensor<T>& y) {
  return rot_spatial(y, g);
}

struct EquivRecord {
  int g;
  double error;  // max over probes for this group element
  double norm;   // max reference-output norm, for context
};

// max over probes and group elements of || rhoY(g) model(x) - model(rhoX(g) x) ||_2
template <typename T, typename Model, typename OutAction>
T equivariance_error(Model&& model, const ProbeSet<T>& probes, OutAction&& out_action,
                     std::vector<EquivRecord>* records = nullptr) {
  check(!probes.inputs.empty(), "equivariance_error: empty probe set");
  NoGradGuard ng;
  T worst = 0;
  std::vector<EquivRecord> recs(4);
  for (int g = 0; g < 4; ++g) recs[g] = {g, 0.0, 0.0};
  for (const auto& x : probes.inputs) {
    const Tensor<T> y = model(x);
    for (int g = 0; g < 4; ++g) {
      const Tensor<T> lhs = out_action(g, y);
      const Tensor<T> rhs = model(act_on_input(g, x));
      check(lhs.shape() == rhs.shape(),
            "equivariance_error: action/output shape mismatch at g=" + std::to_string(g));
      const T e = l2_distance(lhs, rhs);
      worst = std::max(worst, e);
      recs[g].error = std::max(recs[g].error, static_cast<double>(e));
      recs[g].norm = std::max(recs[g].norm, static_cast<double>(l2_norm(y)));
    }
  }
  if (records) *records = recs;
  return worst;
}

// max over sampled probe pairs of ||model(x)-model(y)|| / ||x-y||; an
// empirical lower bound on the Lipschitz constant. Pairs closer than 1e-8
// are skipped.
template <typename T, typename Model>
T lipschitz_probe(Model&& model, const ProbeSet<T>& probes, int num_pairs,
                  std::uint64_t seed = 1) {
  check(probes.inputs.size() >= 2, "lipschitz_probe: need at least 2 probes");
  NoGradGuard ng;
  std::mt19937_64 rng(seed_stream(seed, 0x11F));
  std::uniform_int_distribution<std::size_t> pick(0, probes.inputs.size() - 1);
  std::vector<Tensor<T>> outputs;
  outputs.reserve(probes.inputs.size());
  for (const auto& x : probes.inputs) outputs.push_back(model(x));
  T best = 0;
  bool any = false;
  for (int k = 0; k < num_pairs; ++k) {
    std::size_t i = pick(rng), j = pick(rng);
    if (i == j) j = (j + 1) % probes.inputs.size();
    const T dx = l2_distance(probes.inputs[i], probes.inputs[j]);
    if (dx < T(1e-8)) continue;
    any = true;
    best = std::max(best, l2_distance(outputs[i], outputs[j]) / dx);
  }
  if (!any) throw ValueError("lipschitz_probe: all sampled pairs degenerate");
  return best;
}

struct BoundCheck {
  std::string name;
  bool holds;
  double slack;  // min over checked instances of (rhs - lhs); >= -1e-6 expected
};

// || rhoY(g) model(x) - model(x) || <= k_hat * || rhoX(g) x - x || + ee_hat,
// with k_hat and ee_hat estimated on the same probe set. Holds by
// construction up to floating-point slack.
template <typename T, typename Model, typename OutAction>
BoundCheck prop1_check(Model&& model, const ProbeSet<T>& probes, OutAction&& out_action) {
  NoGradGuard ng;
  const T ee = equivariance_error(model, probes, out_action);
  // Lipschitz estimate over exactly the (x, rhoX(g) x) pairs the bound uses.
  T k_hat = 0;
  for (const auto& x : probes.inputs) {
    const Tensor<T> y = model(x);
    for (int g = 1; g < 4; ++g) {
      const Tensor<T> xg = act_on_input(g, x);
      const T dx = l2_distance(xg, x);
      if (dx < T(1e-8)) continue;
      k_hat = std::max(k_hat, l2_distance(model(xg), y) / dx);
    }
  }
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& x : probes.inputs) {
    const Tensor<T> y = model(x);
    for (int g = 0; g < 4; ++g) {
      const double lhs = l2_distance(out_action(g, y), y);
      const double rhs = static_cast<double>(k_hat) *
                             static_cast<double>(l2_distance(act_on_input(g, x), x)) +
                         static_cast<double>(ee);
      worst = std::min(worst, rhs - lhs);
    }
  }
  return {"prop1", worst >= -1e-6, worst};
}

// |EE(A) - EE(B)| <= 2 c_hat + EE(A) with c_hat the max output distance over
// probes and their group transforms.
template <typename T, typename ModelA, typename ModelB, typename OutAction>
BoundCheck prop2_check(ModelA&& a, ModelB&& b, const ProbeSet<T>& probes,
                       OutAction&& out_action, T* c_hat_out = nullptr) {
  NoGradGuard ng;
  T c_hat = 0;
  for (const auto& x : probes.inputs)
    for (int g = 0; g < 4; ++g) {
      const Tensor<T> xg = act_on_input(g, x);
      const Tensor<T> ya = a(xg), yb = b(xg);
      check(ya.shape() == yb.shape(), "prop2_check: model output shapes differ");
      c_hat = std::max(c_hat, l2_distance(ya, yb));
    }
  const T ee_a = equivariance_error(a, probes, out_action);
  const T ee_b = equivariance_error(b, probes, out_action);
  const double lhs = std::abs(static_cast<double>(ee_a) - static_cast<double>(ee_b));
  const double rhs = 2.0 * static_cast<double>(c_hat) + static_cast<double>(ee_a);
  if (c_hat_out) *c_hat_out = c_hat;
  return {"prop2", rhs - lhs >= -1e-6, rhs - lhs};
}

template <typename T>
struct EquivarianceReport {
  T ee = 0;              // empirical equivariance error (max over probes)
  T epsilon = 0;         // relaxation budget the bounds are instantiated with
  T lipschitz_k = 0;     // empirical max ratio
  T sup_distance_c = 0;  // max output distance to the reference model
  std::vector<BoundCheck> bound_checks;
};

}  // namespace r2

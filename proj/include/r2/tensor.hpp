#pragma once

// Dense row-major tensor with reverse-mode autodiff.
//
// Tensor<T> is a cheap value handle onto a shared tape node. Ops (see
// ops.hpp) record a backward closure when gradients are enabled and any
// input requires them. backward() walks the tape in reverse topological
// order; leaf tensors with requires_grad accumulate into a persistent
// grad buffer until zero_grad().
//
// T is float (storage precision) or double (check mode for gradient and
// exactness oracles). Everything is single-threaded by contract; a model
// whose parameters are frozen builds no tape and is safe to share.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace r2 {

using Shape = std::vector<std::int64_t>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ValueError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct DivergenceError : Error {
  using Error::Error;
};

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

// Gradient recording is on by default; NoGradGuard disables it within a
// scope (evaluation loops, probe sweeps).
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Derives independent RNG streams from one base seed.
inline std::uint64_t seed_stream(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>);

 public:
  struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // persistent, leaves with requires_grad only
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const std::vector<T>&)> backward;  // out grad -> parents' tmp
    const char* op = "leaf";
    // transient state used by Tensor::backward()
    std::vector<T> tmp;
    int visit = 0;
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    check(numel(shape) == static_cast<std::int64_t>(data.size()),
          "from_data: shape " + shape_str(shape) + " does not match data length " +
              std::to_string(data.size()));
    for (T v : data) {
      if (!std::isfinite(v)) throw ValueError("from_data: non-finite value");
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->data.assign(static_cast<std::size_t>(numel(shape)), T(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->data.assign(static_cast<std::size_t>(numel(shape)), value);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor ones(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(1), requires_grad);
  }

  // Sampling is done in double so float and double twins of a model can
  // share bit-equivalent initial values.
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0,
                      double mean = 0.0, bool requires_grad = false) {
    std::normal_distribution<double> dist(mean, stddev > 0 ? stddev : 1.0);
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->data.resize(static_cast<std::size_t>(numel(shape)));
    for (auto& v : n->data) v = stddev > 0 ? static_cast<T>(dist(rng)) : static_cast<T>(mean);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t rank() const { return node_->shape.size(); }
  std::int64_t size() const { return static_cast<std::int64_t>(node_->data.size()); }

  std::vector<T>& data() { return node_->data; }
  const std::vector<T>& data() const { return node_->data; }
  T item() const {
    check(size() == 1, "item: tensor has " + std::to_string(size()) + " elements");
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) {
    check(node_->parents.empty(), "set_requires_grad: only valid on leaf tensors");
    node_->requires_grad = rg;
  }

  bool is_leaf() const { return node_->parents.empty(); }
  const char* op() const { return node_->op; }

  const std::vector<T>& grad() const {
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), T(0));
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }

  bool all_finite() const {
    for (T v : node_->data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Detached deep copy (no tape, optionally grad-tracking leaf).
  Tensor detach(bool requires_grad = false) const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->data = node_->data;
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  template <typename U>
  Tensor<U> to(bool requires_grad = false) const {
    std::vector<U> d(node_->data.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<U>(node_->data[i]);
    auto t = Tensor<U>::from_data(node_->shape, std::move(d));
    t.set_requires_grad(requires_grad);
    return t;
  }

  std::shared_ptr<Node> node() const { return node_; }

  // Reverse-mode sweep from a scalar. Leaf grads accumulate across calls;
  // intermediate buffers are transient.
  void backward() const {
    check(size() == 1, "backward: loss must be a scalar, got " + shape_str(shape()));
    std::vector<Node*> order;
    toposort(node_.get(), order);
    for (Node* n : order) n->tmp.assign(n->data.size(), T(0));
    node_->tmp[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward) n->backward(n->tmp);
    }
    for (Node* n : order) {
      if (n->requires_grad && n->parents.empty()) {
        if (n->grad.empty()) n->grad.assign(n->data.size(), T(0));
        for (std::size_t i = 0; i < n->tmp.size(); ++i) n->grad[i] += n->tmp[i];
      }
      n->tmp = {};
      n->visit = 0;
    }
  }

 private:
  static void toposort(Node* root, std::vector<Node*>& order) {
    // Iterative DFS; visit==1 marks the stack so a cycle (impossible by
    // construction) trips an assertion instead of hanging.
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    root->visit = 1;
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        Node* p = n->parents[idx++].get();
        if (p->visit == 1) throw Error("backward: cycle in tape at op " + std::string(p->op));
        if (p->visit == 0) {
          p->visit = 1;
          stack.emplace_back(p, 0);
        }
      } else {
        n->visit = 2;
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> node_;
};

// Shorthand for building an op node. parents/backward recorded only when
// the result actually participates in differentiation.
template <typename T>
Tensor<T> make_node(const char* op, Shape shape, std::vector<T> data,
                    std::vector<Tensor<T>> inputs,
                    std::function<void(const std::vector<T>&)> backward) {
  auto n = std::make_shared<typename Tensor<T>::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  bool rg = false;
  if (grad_mode()) {
    for (const auto& in : inputs) rg = rg || in.requires_grad();
  }
  if (rg) {
    n->requires_grad = true;
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Tensor<T>(std::move(n));
}

}  // namespace r2

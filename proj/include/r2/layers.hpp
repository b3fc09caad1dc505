#pragma once

// Layer zoo over group feature maps (b, c, 4, h, w): lifting, pointwise /
// depthwise group convolutions and their composition, GCBA blocks, the
// split/bottleneck block, group SPPF, transposed upsampling, and the
// group-to-plane transfer block. Plus the plain (no group structure)
// counterparts used for baselines.
//
// Modes: relaxed trains the perturbation delta, strict freezes it at zero
// (exact equivariance), plain bypasses group structure entirely.

#include "r2/filters.hpp"

namespace r2 {

enum class EqMode { relaxed, strict, plain };

inline const char* mode_name(EqMode m) {
  switch (m) {
    case EqMode::relaxed: return "relaxed";
    case EqMode::strict: return "strict";
    default: return "plain";
  }
}

inline EqMode mode_from_name(const std::string& s) {
  if (s == "relaxed") return EqMode::relaxed;
  if (s == "strict") return EqMode::strict;
  if (s == "plain") return EqMode::plain;
  throw ValueError("unknown mode '" + s + "' (expected relaxed|strict|plain)");
}

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T>* tensor;
  bool trainable;
};

// ---------------------------------------------------------------------------
// functional layer ops (take prebuilt banks)
// ---------------------------------------------------------------------------

// Lifting: k_rel (co,4,ci,k,k) reshaped to (4co,ci,k,k), convolved with a
// plane image (b,ci,h,w), output viewed as (b,co,4,h',w').
template <typename T>
Tensor<T> r2_lifting(const Tensor<T>& x, const Tensor<T>& k_rel, std::int64_t stride,
                     std::int64_t padding) {
  check(k_rel.rank() == 5 && k_rel.dim(1) == 4,
        "r2_lifting: bank must be (co,4,ci,k,k), got " + shape_str(k_rel.shape()));
  check(x.rank() == 4, "r2_lifting: input must be (b,ci,h,w)");
  check(x.dim(1) == k_rel.dim(2), "r2_lifting: input channels " + std::to_string(x.dim(1)) +
                                      " != bank ci " + std::to_string(k_rel.dim(2)));
  const std::int64_t co = k_rel.dim(0), ci = k_rel.dim(2), k = k_rel.dim(3);
  auto w = reshape(k_rel, {4 * co, ci, k, k});
  auto y = conv2d(x, w, stride, padding, 1);
  return reshape(y, {y.dim(0), co, std::int64_t(4), y.dim(2), y.dim(3)});
}

// Pointwise group conv: k_rel (co,4,ci,4,1,1) reshaped to (4co,4ci,1,1),
// input flattened to (b,4ci,h,w); contraction over input channels and
// group positions.
template <typename T>
Tensor<T> r2_pgconv(const Tensor<T>& f, const Tensor<T>& k_rel) {
  check(f.rank() == 5 && f.dim(2) == 4,
        "r2_pgconv: input must be (b,ci,4,h,w), got " + shape_str(f.shape()));
  check(k_rel.rank() == 6 && k_rel.dim(1) == 4 && k_rel.dim(3) == 4,
        "r2_pgconv: bank must be (co,4,ci,4,1,1), got " + shape_str(k_rel.shape()));
  check(k_rel.dim(2) == f.dim(1), "r2_pgconv: channel mismatch, input ci " +
                                      std::to_string(f.dim(1)) + " vs bank ci " +
                                      std::to_string(k_rel.dim(2)));
  const std::int64_t b = f.dim(0), ci = f.dim(1), h = f.dim(3), w = f.dim(4);
  const std::int64_t co = k_rel.dim(0);
  auto x = reshape(f, {b, 4 * ci, h, w});
  auto wt = reshape(k_rel, {4 * co, 4 * ci, std::int64_t(1), std::int64_t(1)});
  auto y = conv2d(x, wt, 1, 0, 1);
  return reshape(y, {b, co, std::int64_t(4), h, w});
}

// Depthwise group conv: k_rel (co,4,1,1,k,k) reshaped to (4co,1,k,k),
// grouped conv with 4co groups; padding k/2 so stride 1 preserves size.
template <typename T>
Tensor<T> r2_dgconv(const Tensor<T>& f, const Tensor<T>& k_rel, std::int64_t stride = 1) {
  check(f.rank() == 5 && f.dim(2) == 4,
        "r2_dgconv: input must be (b,co,4,h,w), got " + shape_str(f.shape()));
  check(k_rel.rank() == 6 && k_rel.dim(1) == 4,
        "r2_dgconv: bank must be (co,4,1,1,k,k), got " + shape_str(k_rel.shape()));
  check(k_rel.dim(0) == f.dim(1), "r2_dgconv: channel mismatch, input " +
                                      std::to_string(f.dim(1)) + " vs bank co " +
                                      std::to_string(k_rel.dim(0)));
  const std::int64_t b = f.dim(0), co = f.dim(1), h = f.dim(3), w = f.dim(4);
  const std::int64_t k = k_rel.dim(4);
  auto x = reshape(f, {b, 4 * co, h, w});
  auto wt = reshape(k_rel, {4 * co, std::int64_t(1), k, k});
  auto y = conv2d(x, wt, stride, k / 2, 4 * co);
  return reshape(y, {b, co, std::int64_t(4), y.dim(2), y.dim(3)});
}

// Depthwise stage with the transposed operator (2x spatial upsampling).
template <typename T>
Tensor<T> r2_dgconv_transposed(const Tensor<T>& f, const Tensor<T>& k_rel,
                               std::int64_t stride = 2) {
  check(f.rank() == 5 && f.dim(2) == 4, "r2_dgconv_transposed: input must be (b,co,4,h,w)");
  check(k_rel.rank() == 6 && k_rel.dim(1) == 4 && k_rel.dim(0) == f.dim(1),
        "r2_dgconv_transposed: bank/channel mismatch");
  const std::int64_t b = f.dim(0), co = f.dim(1), h = f.dim(3), w = f.dim(4);
  const std::int64_t k = k_rel.dim(4);
  auto x = reshape(f, {b, 4 * co, h, w});
  auto wt = reshape(k_rel, {4 * co, std::int64_t(1), k, k});
  auto y = conv2d_transposed(x, wt, stride, 0, 4 * co);
  return reshape(y, {b, co, std::int64_t(4), y.dim(2), y.dim(3)});
}

// R2GConv: pointwise first (channel mixing), then depthwise (spatial).
template <typename T>
Tensor<T> r2_gconv(const Tensor<T>& f, const Tensor<T>& pw_rel, const Tensor<T>& dw_rel,
                   std::int64_t stride = 1) {
  return r2_dgconv(r2_pgconv(f, pw_rel), dw_rel, stride);
}

// Group-to-plane transfer: max over the group axis (shift-invariant), then
// plain 1x1 conv + bias.
template <typename T>
Tensor<T> transfer_reduce(const Tensor<T>& f) {
  check(f.rank() == 5 && f.dim(2) == 4, "transfer_reduce: expected (b,c,4,h,w)");
  return reduce_max(f, 2);
}

// Max pool applied independently per group slice.
template <typename T>
Tensor<T> group_max_pool(const Tensor<T>& f, std::int64_t k, std::int64_t stride,
                         std::int64_t padding) {
  check(f.rank() == 5 && f.dim(2) == 4, "group_max_pool: expected (b,c,4,h,w)");
  const std::int64_t b = f.dim(0), c = f.dim(1), h = f.dim(3), w = f.dim(4);
  auto y = max_pool2d(reshape(f, {b, c * 4, h, w}), k, stride, padding);
  return reshape(y, {b, c, std::int64_t(4), y.dim(2), y.dim(3)});
}

// ---------------------------------------------------------------------------
// parameter initialization helpers
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> kaiming_init(Shape shape, std::int64_t fan_in, std::mt19937_64& rng) {
  return Tensor<T>::randn(std::move(shape), rng, std::sqrt(2.0 / static_cast<double>(fan_in)),
                          0.0, false);
}

// ---------------------------------------------------------------------------
// stateful blocks
// ---------------------------------------------------------------------------

// Shared per-layer perturbation factor. In strict mode the tensor stays
// zero and is excluded from training. delta_scale is a diagnostic knob for
// equivariance-error sweeps; 1 during training.
template <typename T>
class Delta {
 public:
  Delta() = default;
  Delta(double sigma, std::mt19937_64& rng, EqMode mode)
      : value_(mode == EqMode::strict ? Tensor<T>::zeros({4, 2, 2})
                                      : init_delta<T>(sigma, rng, true)) {}

  Tensor<T> effective() const {
    return scale_ == T(1) ? value_ : scale(value_, scale_);
  }
  Tensor<T>& tensor() { return value_; }
  const Tensor<T>& tensor() const { return value_; }
  void set_scale(T s) { scale_ = s; }
  T scale_factor() const { return scale_; }

 private:
  Tensor<T> value_ = Tensor<T>::zeros({4, 2, 2});
  T scale_ = T(1);
};

template <typename T>
class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  explicit BatchNormLayer(std::int64_t channels)
      : gamma_(Tensor<T>::ones({channels}, true)), beta_(Tensor<T>::zeros({channels}, true)) {}

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return batch_norm(x, gamma_, beta_, state_, training);
  }
  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".gamma", &gamma_, true});
    out.push_back({prefix + ".beta", &beta_, true});
  }
  void collect_states(const std::string& prefix,
                      std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    out.push_back({prefix, &state_});
  }
  BatchNormState<T>& state() { return state_; }

 private:
  Tensor<T> gamma_, beta_;
  BatchNormState<T> state_;
};

// R2Lifting + BatchNorm + SiLU.
template <typename T>
class LiftingBlock {
 public:
  LiftingBlock() = default;
  LiftingBlock(std::int64_t ci, std::int64_t co, std::int64_t k, double sigma,
               std::mt19937_64& rng, EqMode mode)
      : mode_(mode),
        k_init_(kaiming_init<T>({co, ci, k, k}, ci * k * k, rng)),
        delta_(sigma, rng, mode),
        bn_(co),
        k_(k) {
    k_init_.set_requires_grad(true);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training, std::int64_t stride = 1) {
    auto bank = build_relaxed_filters(k_init_, delta_.effective(), FilterFlavor::lifting);
    auto y = r2_lifting(x, bank, stride, k_ / 2);
    return silu(bn_.forward(y, training));
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".k_init", &k_init_, true});
    out.push_back({prefix + ".delta", &delta_.tensor(), mode_ == EqMode::relaxed});
    bn_.collect(prefix + ".bn", out);
  }
  void collect_states(const std::string& prefix,
                      std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    bn_.collect_states(prefix + ".bn", out);
  }
  Delta<T>& delta() { return delta_; }

 private:
  EqMode mode_ = EqMode::strict;
  Tensor<T> k_init_;
  Delta<T> delta_;
  BatchNormLayer<T> bn_;
  std::int64_t k_ = 3;
};

// R2GConv (pointwise then depthwise sharing one delta) + BatchNorm + SiLU.
// Stride lives in the depthwise stage.
template <typename T>
class GcbaBlock {
 public:
  GcbaBlock() = default;
  GcbaBlock(std::int64_t ci, std::int64_t co, std::int64_t k, std::int64_t stride, double sigma,
            std::mt19937_64& rng, EqMode mode)
      : mode_(mode),
        stride_(stride),
        pw_init_(kaiming_init<T>({co, ci, 4, 1, 1}, 4 * ci, rng)),
        dw_init_(kaiming_init<T>({co, 1, 1, k, k}, k * k, rng)),
        delta_(sigma, rng, mode),
        bn_(co) {
    pw_init_.set_requires_grad(true);
    dw_init_.set_requires_grad(true);
  }

  Tensor<T> forward(const Tensor<T>& f, bool training) {
    auto d = delta_.effective();
    auto pw = build_relaxed_filters(pw_init_, d, FilterFlavor::pointwise);
    auto dw = build_relaxed_filters(dw_init_, d, FilterFlavor::depthwise);
    auto y = r2_gconv(f, pw, dw, stride_);
    return silu(bn_.forward(y, training));
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".pw_init", &pw_init_, true});
    out.push_back({prefix + ".dw_init", &dw_init_, true});
    out.push_back({prefix + ".delta", &delta_.tensor(), mode_ == EqMode::relaxed});
    bn_.collect(prefix + ".bn", out);
  }
  void collect_states(const std::string& prefix,
                      std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    bn_.collect_states(prefix + ".bn", out);
  }
  Delta<T>& delta() { return delta_; }
  std::int64_t stride() const { return stride_; }

 private:
  EqMode mode_ = EqMode::strict;
  std::int64_t stride_ = 1;
  Tensor<T> pw_init_, dw_init_;
  Delta<T> delta_;
  BatchNormLayer<T> bn_;
};

// Pointwise-only GCBA (1x1 group conv + BN + SiLU); used inside the split
// block fuse stage and GSPPF. May share a delta owned by the enclosing
// block.
template <typename T>
class PwGcba {
 public:
  PwGcba() = default;
  PwGcba(std::int64_t ci, std::int64_t co, std::mt19937_64& rng)
      : pw_init_(kaiming_init<T>({co, ci, 4, 1, 1}, 4 * ci, rng)), bn_(co) {
    pw_init_.set_requires_grad(true);
  }

  Tensor<T> forward(const Tensor<T>& f, const Tensor<T>& delta_eff, bool training) {
    auto pw = build_relaxed_filters(pw_init_, delta_eff, FilterFlavor::pointwise);
    return silu(bn_.forward(r2_pgconv(f, pw), training));
  }
  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".pw_init", &pw_init_, true});
    bn_.collect(prefix + ".bn", out);
  }
  void collect_states(const std::string& prefix,
                      std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    bn_.collect_states(prefix + ".bn", out);
  }

 private:
  Tensor<T> pw_init_;
  BatchNormLayer<T> bn_;
};

// Two GCBA3x3 with an identity residual (hidden ratio 1).
template <typename T>
class BottleneckBlock {
 public:
  BottleneckBlock() = default;
  BottleneckBlock(std::int64_t c, double sigma, std::mt19937_64& rng, EqMode mode)
      : a_(c, c, 3, 1, sigma, rng, mode), b_(c, c, 3, 1, sigma, rng, mode) {}

  Tensor<T> forward(const Tensor<T>& f, bool training) {
    return add(f, b_.forward(a_.forward(f, training), training));
  }
  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    a_.collect(prefix + ".gcba1", out);
    b_.collect(prefix + ".gcba2", out);
  }
  void collect_states(const std::string& prefix,
                      std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    a_.collect_states(prefix + ".gcba1", out);
    b_.collect_states(prefix + ".gcba2", out);
  }
  GcbaBlock<T>& first() { return a_; }
  GcbaBlock<T>& second() { return b_; }

 private:
  GcbaBlock<T> a_, b_;
};

// Channel split into two halves, a chain of bottlenecks on one half, all
// intermediate halves concatenated and fused by a pointwise GCBA.
template <typename T>
class R2NetBlock {
 public:
  R2NetBlock() = default;
  R2NetBlock(std::int64_t ci, std::int64_t co, int n_bottlenecks, double sigma,
             std::mt19937_64& rng, EqMode mode)
      : ci_(ci), mode_(mode), fuse_delta_(sigma, rng, mode) {
    check(ci % 2 == 0, "r2net_block: channel count " + std::to_string(ci) + " must be even");
    const std::int64_t half = ci / 2;
    for (int i = 0; i < n_bottlenecks; ++i) bottlenecks_.emplace_back(half, sigma, rng, mode);
    fuse_ = PwGcba<T>((2 + n_bottlenecks) * half, co, rng);
  }

  Tensor<T> forward(const Tensor<T>& f, bool training) {
    const std::int64_t half = ci_ / 2;
    std::vector<Tensor<T>> parts;
    parts.push_back(narrow(f, 1, 0, half));
    parts.push_back(narrow(f, 1, half, half));
    for (auto& bk : bottlenecks_) parts.push_back(bk.forward(parts.back(), training));
    return fuse_.forward(concat(parts, 1), fuse_delta_.effective(), training);
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    for (std::size_t i = 0; i < bottlenecks_.size(); ++i)
      bottlenecks_[i].collect(prefix + ".bottleneck" + std::to_string(i), out);
    out.push_back({prefix + ".fuse.delta", &fuse_delta_.tensor(), mode_ == EqMode::relaxed});
    fuse_.collect(prefix + ".fuse", out);
  }
  void collect_states(const std::string& prefix,
                      std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    for (std::size_t i = 0; i < bottlenecks_.size(); ++i)
      bottlenecks_[i].collect_states(prefix + ".bottleneck" + std::to_string(i), out);
    fuse_.collect_states(prefix + ".fuse", out);
  }
  std::vector<BottleneckBlock<T>>& bottlenecks() { return bottlenecks_; }
  Delta<T>& fuse_delta() { return fuse_delta_; }

 private:
  std::int64_t ci_ = 0;
  EqMode mode_ = EqMode::strict;
  std::vector<BottleneckBlock<T>> bottlenecks_;
  Delta<T> fuse_delta_;
  PwGcba<T> fuse_;
};

// Group SPPF: pointwise GCBA to half channels, three stride-1 spatial max
// pools per group slice, concat of the four stages, pointwise GCBA back.
// One delta shared by both pointwise stages.
template <typename T>
class GsppfBlock {
 public:
  GsppfBlock() = default;
  GsppfBlock(std::int64_t c, double sigma, std::mt19937_64& rng, EqMode mode,
             std::int64_t pool_k = 5)
      : pool_k_(pool_k), mode_(mode), delta_(sigma, rng, mode) {
    check(c % 2 == 0, "gsppf: channel count must be even");
    pw1_ = PwGcba<T>(c, c / 2, rng);
    pw2_ = PwGcba<T>(2 * c, c, rng);
  }

  Tensor<T> forward(const Tensor<T>& f, bool training) {
    check(f.dim(3) >= 1 && f.dim(4) >= 1 && f.dim(3) + 2 * (pool_k_ / 2) >= pool_k_,
          "gsppf: spatial dims too small for pooling window");
    auto d = delta_.effective();
    auto y = pw1_.forward(f, d, training);
    auto p1 = group_max_pool(y, pool_k_, 1, pool_k_ / 2);
    auto p2 = group_max_pool(p1, pool_k_, 1, pool_k_ / 2);
    auto p3 = group_max_pool(p2, pool_k_, 1, pool_k_ / 2);
    return pw2_.forward(concat<T>({y, p1, p2, p3}, 1), d, training);
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".delta", &delta_.tensor(), mode_ == EqMode::relaxed});
    pw1_.collect(prefix + ".pw1", out);
    pw2_.collect(prefix + ".pw2", out);
  }
  void collect_states(const std::string& prefix,
                      std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    pw1_.collect_states(prefix + ".pw1", out);
    pw2_.collect_states(prefix + ".pw2", out);
  }
  Delta<T>& delta() { return delta_; }

 private:
  std::int64_t pool_k_ = 5;
  EqMode mode_ = EqMode::strict;
  Delta<T> delta_;
  PwGcba<T> pw1_, pw2_;
};

// R2GConv with the depthwise stage replaced by a grouped transposed conv,
// stride 2 (2x spatial upsampling). k=2 so even-size maps stay exactly
// equivariant; no normalization stage.
template <typename T>
class R2GUpBlock {
 public:
  R2GUpBlock() = default;
  R2GUpBlock(std::int64_t ci, std::int64_t co, double sigma, std::mt19937_64& rng, EqMode mode)
      : mode_(mode),
        pw_init_(kaiming_init<T>({co, ci, 4, 1, 1}, 4 * ci, rng)),
        dw_init_(kaiming_init<T>({co, 1, 1, 2, 2}, 4, rng)),
        delta_(sigma, rng, mode) {
    pw_init_.set_requires_grad(true);
    dw_init_.set_requires_grad(true);
  }

  Tensor<T> forward(const Tensor<T>& f, bool /*training*/) {
    auto d = delta_.effective();
    auto pw = build_relaxed_filters(pw_init_, d, FilterFlavor::pointwise);
    auto dw = build_relaxed_filters(dw_init_, d, FilterFlavor::depthwise);
    return r2_dgconv_transposed(r2_pgconv(f, pw), dw, 2);
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".pw_init", &pw_init_, true});
    out.push_back({prefix + ".dw_init", &dw_init_, true});
    out.push_back({prefix + ".delta", &delta_.tensor(), mode_ == EqMode::relaxed});
  }
  Delta<T>& delta() { return delta_; }

 private:
  EqMode mode_ = EqMode::strict;
  Tensor<T> pw_init_, dw_init_;
  Delta<T> delta_;
};

// Max over the group axis, then plain 1x1 conv (with bias) + BN + SiLU.
template <typename T>
class TransferBlock {
 public:
  TransferBlock() = default;
  TransferBlock(std::int64_t ci, std::int64_t co, std::mt19937_64& rng)
      : w_(kaiming_init<T>({co, ci, 1, 1}, ci, rng)), bias_(Tensor<T>::zeros({co}, true)),
        bn_(co) {
    w_.set_requires_grad(true);
  }

  Tensor<T> forward(const Tensor<T>& f, bool training) {
    auto m = transfer_reduce(f);
    auto y = add_bias(conv2d(m, w_, 1, 0, 1), bias_, 1);
    return silu(bn_.forward(y, training));
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".weight", &w_, true});
    out.push_back({prefix + ".bias", &bias_, true});
    bn_.collect(prefix + ".bn", out);
  }
  void collect_states(const std::string& prefix,
                      std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    bn_.collect_states(prefix + ".bn", out);
  }

 private:
  Tensor<T> w_, bias_;
  BatchNormLayer<T> bn_;
};

// Concatenation along channels of group feature maps; no parameters.
template <typename T>
Tensor<T> gconcat(const std::vector<Tensor<T>>& fs) {
  check(!fs.empty(), "gconcat: empty list");
  for (const auto& f : fs)
    check(f.rank() == 5 && f.dim(2) == 4, "gconcat: expected (b,c,4,h,w) maps");
  return concat(fs, 1);
}

// ---------------------------------------------------------------------------
// plain (no group structure) counterparts
// ---------------------------------------------------------------------------

template <typename T>
class PlainConvBlock {
 public:
  PlainConvBlock() = default;
  PlainConvBlock(std::int64_t ci, std::int64_t co, std::int64_t k, std::int64_t stride,
                 std::mt19937_64& rng)
      : stride_(stride), k_(k), w_(kaiming_init<T>({co, ci, k, k}, ci * k * k, rng)), bn_(co) {
    w_.set_requires_grad(true);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return silu(bn_.forward(conv2d(x, w_, stride_, k_ / 2, 1), training));
  }
  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".weight", &w_, true});
    bn_.collect(prefix + ".bn", out);
  }
  void collect_states(const std::string& prefix,
                      std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    bn_.collect_states(prefix + ".bn", out);
  }

 private:
  std::int64_t stride_ = 1, k_ = 3;
  Tensor<T> w_;
  BatchNormLayer<T> bn_;
};

template <typename T>
class PlainBottleneck {
 public:
  PlainBottleneck() = default;
  PlainBottleneck(std::int64_t c, std::mt19937_64& rng)
      : a_(c, c, 3, 1, rng), b_(c, c, 3, 1, rng) {}
  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return add(x, b_.forward(a_.forward(x, training), training));
  }
  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    a_.collect(prefix + ".conv1", out);
    b_.collect(prefix + ".conv2", out);
  }
  void collect_states(const std::string& prefix,
                      std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    a_.collect_states(prefix + ".conv1", out);
    b_.collect_states(prefix + ".conv2", out);
  }

 private:
  PlainConvBlock<T> a_, b_;
};

template <typename T>
class PlainSplitBlock {
 public:
  PlainSplitBlock() = default;
  PlainSplitBlock(std::int64_t ci, std::int64_t co, int n_bottlenecks, std::mt19937_64& rng)
      : ci_(ci) {
    check(ci % 2 == 0, "plain split block: channel count must be even");
    const std::int64_t half = ci / 2;
    for (int i = 0; i < n_bottlenecks; ++i) bottlenecks_.emplace_back(half, rng);
    fuse_ = PlainConvBlock<T>((2 + n_bottlenecks) * half, co, 1, 1, rng);
  }
  Tensor<T> forward(const Tensor<T>& x, bool training) {
    const std::int64_t half = ci_ / 2;
    std::vector<Tensor<T>> parts;
    parts.push_back(narrow(x, 1, 0, half));
    parts.push_back(narrow(x, 1, half, half));
    for (auto& bk : bottlenecks_) parts.push_back(bk.forward(parts.back(), training));
    return fuse_.forward(concat(parts, 1), training);
  }
  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    for (std::size_t i = 0; i < bottlenecks_.size(); ++i)
      bottlenecks_[i].collect(prefix + ".bottleneck" + std::to_string(i), out);
    fuse_.collect(prefix + ".fuse", out);
  }
  void collect_states(const std::string& prefix,
                      std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    for (std::size_t i = 0; i < bottlenecks_.size(); ++i)
      bottlenecks_[i].collect_states(prefix + ".bottleneck" + std::to_string(i), out);
    fuse_.collect_states(prefix + ".fuse", out);
  }

 private:
  std::int64_t ci_ = 0;
  std::vector<PlainBottleneck<T>> bottlenecks_;
  PlainConvBlock<T> fuse_;
};

// Plain head stage mirroring the transfer block: 1x1 conv + bias + BN + SiLU.
template <typename T>
class PlainHeadConv {
 public:
  PlainHeadConv() = default;
  PlainHeadConv(std::int64_t ci, std::int64_t co, std::mt19937_64& rng)
      : w_(kaiming_init<T>({co, ci, 1, 1}, ci, rng)), bias_(Tensor<T>::zeros({co}, true)),
        bn_(co) {
    w_.set_requires_grad(true);
  }
  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return silu(bn_.forward(add_bias(conv2d(x, w_, 1, 0, 1), bias_, 1), training));
  }
  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".weight", &w_, true});
    out.push_back({prefix + ".bias", &bias_, true});
    bn_.collect(prefix + ".bn", out);
  }
  void collect_states(const std::string& prefix,
                      std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    bn_.collect_states(prefix + ".bn", out);
  }

 private:
  Tensor<T> w_, bias_;
  BatchNormLayer<T> bn_;
};

}  // namespace r2

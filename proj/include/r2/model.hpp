#pragma once

// Toy classifier assembly: lifting, four downsampling stages of
// GCBA3x3 + split block, transfer block, global average pool, linear head.
// A plain-mode twin substitutes shape-matched ordinary conv blocks with a
// parameter count within 10% of the group model.
//
// Downsampling is parity-adaptive so that strict-mode models are exactly
// equivariant at any input size: a stride-2 convolution commutes with
// 90-degree rotation only on odd sizes (the sample lattice must satisfy
// n-1 = 2(n'-1)), while a 2x2/stride-2 max pool commutes exactly on even
// sizes (rotation permutes the 2x2 blocks). Even sizes therefore pool,
// odd sizes use the strided conv.

#include <map>

#include "r2/layers.hpp"

namespace r2 {

struct ModelConfig {
  std::string name = "r2net-toy";
  std::vector<std::int64_t> widths{8, 16, 32, 32};
  std::int64_t in_channels = 1;
  std::int64_t num_classes = 10;
  std::int64_t image_size = 28;
  EqMode mode = EqMode::relaxed;
  double sigma = 0.1;
  std::uint64_t seed = 0;
};

namespace detail {

struct StagePlan {
  bool pool_first;      // even entry size: 2x2 max pool, conv stride 1
  std::int64_t stride;  // conv stride (2 when entry size odd)
  std::int64_t size_out;
};

inline std::vector<StagePlan> plan_stages(std::int64_t size, std::size_t n_stages) {
  std::vector<StagePlan> plan;
  for (std::size_t s = 0; s < n_stages; ++s) {
    StagePlan p;
    if (size % 2 == 0) {
      p.pool_first = true;
      p.stride = 1;
      size = size / 2;
    } else {
      p.pool_first = false;
      p.stride = 2;
      size = (size + 1) / 2;
    }
    p.size_out = size;
    plan.push_back(p);
    check(size >= 1, "plan_stages: input too small for 4 downsampling stages");
  }
  return plan;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// group-equivariant classifier
// ---------------------------------------------------------------------------

template <typename T>
class GroupToyNet {
 public:
  GroupToyNet() = default;
  GroupToyNet(const ModelConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    check(cfg.widths.size() == 4, "r2net-toy: widths must list 4 stage widths");
    for (auto w : cfg.widths) check(w >= 2 && w % 2 == 0, "r2net-toy: widths must be even and >= 2");
    plan_ = detail::plan_stages(cfg.image_size, 4);
    lifting_ = LiftingBlock<T>(cfg.in_channels, cfg.widths[0], 3, cfg.sigma, rng, cfg.mode);
    std::int64_t ci = cfg.widths[0];
    for (int s = 0; s < 4; ++s) {
      const std::int64_t co = cfg.widths[std::min<std::size_t>(s + 1, 3)];
      gcba_[s] = GcbaBlock<T>(ci, co, 3, plan_[s].stride, cfg.sigma, rng, cfg.mode);
      block_[s] = R2NetBlock<T>(co, co, 1, cfg.sigma, rng, cfg.mode);
      ci = co;
    }
    transfer_ = TransferBlock<T>(ci, ci, rng);
    head_w_ = kaiming_init<T>({ci, cfg.num_classes}, ci, rng);
    head_w_.set_requires_grad(true);
    head_b_ = Tensor<T>::zeros({cfg.num_classes}, true);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training = false) {
    Tensor<T> f = lifting_.forward(x, training);
    for (int s = 0; s < 4; ++s) {
      if (plan_[s].pool_first) f = group_max_pool(f, 2, 2, 0);
      f = gcba_[s].forward(f, training);
      f = block_[s].forward(f, training);
    }
    auto t = transfer_.forward(f, training);
    auto pooled = global_avg_pool(t);
    return add_bias(matmul(pooled, head_w_), head_b_, 1);
  }

  // Intermediate group feature maps for per-stage equivariance probing.
  std::vector<std::pair<std::string, Tensor<T>>> forward_stages(const Tensor<T>& x,
                                                                bool training = false) {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    Tensor<T> f = lifting_.forward(x, training);
    out.emplace_back("lifting", f);
    for (int s = 0; s < 4; ++s) {
      if (plan_[s].pool_first) f = group_max_pool(f, 2, 2, 0);
      f = gcba_[s].forward(f, training);
      f = block_[s].forward(f, training);
      out.emplace_back("stage" + std::to_string(s + 1), f);
    }
    return out;
  }

  void collect(std::vector<NamedParam<T>>& out) {
    lifting_.collect("lifting", out);
    for (int s = 0; s < 4; ++s) {
      const std::string p = "stage" + std::to_string(s + 1);
      gcba_[s].collect(p + ".gcba", out);
      block_[s].collect(p + ".block", out);
    }
    transfer_.collect("transfer", out);
    out.push_back({"head.weight", &head_w_, true});
    out.push_back({"head.bias", &head_b_, true});
  }

  void collect_states(std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    lifting_.collect_states("lifting", out);
    for (int s = 0; s < 4; ++s) {
      const std::string p = "stage" + std::to_string(s + 1);
      gcba_[s].collect_states(p + ".gcba", out);
      block_[s].collect_states(p + ".block", out);
    }
    transfer_.collect_states("transfer", out);
  }

  void set_delta_scale(T t) {
    lifting_.delta().set_scale(t);
    for (int s = 0; s < 4; ++s) {
      gcba_[s].delta().set_scale(t);
      block_[s].fuse_delta().set_scale(t);
      for (auto& bk : block_[s].bottlenecks()) {
        bk.first().delta().set_scale(t);
        bk.second().delta().set_scale(t);
      }
    }
  }

 private:
  ModelConfig cfg_;
  std::vector<detail::StagePlan> plan_;
  LiftingBlock<T> lifting_;
  GcbaBlock<T> gcba_[4];
  R2NetBlock<T> block_[4];
  TransferBlock<T> transfer_;
  Tensor<T> head_w_, head_b_;
};

// ---------------------------------------------------------------------------
// plain baseline
// ---------------------------------------------------------------------------

template <typename T>
class PlainToyNet {
 public:
  PlainToyNet() = default;
  PlainToyNet(const ModelConfig& cfg, const std::vector<std::int64_t>& widths,
              std::mt19937_64& rng)
      : widths_(widths) {
    plan_ = detail::plan_stages(cfg.image_size, 4);
    stem_ = PlainConvBlock<T>(cfg.in_channels, widths[0], 3, 1, rng);
    std::int64_t ci = widths[0];
    for (int s = 0; s < 4; ++s) {
      const std::int64_t co = widths[std::min<std::size_t>(s + 1, 3)];
      conv_[s] = PlainConvBlock<T>(ci, co, 3, plan_[s].stride, rng);
      split_[s] = PlainSplitBlock<T>(co, co, 1, rng);
      ci = co;
    }
    head_conv_ = PlainHeadConv<T>(ci, ci, rng);
    head_w_ = kaiming_init<T>({ci, cfg.num_classes}, ci, rng);
    head_w_.set_requires_grad(true);
    head_b_ = Tensor<T>::zeros({cfg.num_classes}, true);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training = false) {
    Tensor<T> f = stem_.forward(x, training);
    for (int s = 0; s < 4; ++s) {
      if (plan_[s].pool_first) f = max_pool2d(f, 2, 2, 0);
      f = conv_[s].forward(f, training);
      f = split_[s].forward(f, training);
    }
    auto pooled = global_avg_pool(head_conv_.forward(f, training));
    return add_bias(matmul(pooled, head_w_), head_b_, 1);
  }

  void collect(std::vector<NamedParam<T>>& out) {
    stem_.collect("stem", out);
    for (int s = 0; s < 4; ++s) {
      const std::string p = "stage" + std::to_string(s + 1);
      conv_[s].collect(p + ".conv", out);
      split_[s].collect(p + ".split", out);
    }
    head_conv_.collect("head_conv", out);
    out.push_back({"head.weight", &head_w_, true});
    out.push_back({"head.bias", &head_b_, true});
  }

  void collect_states(std::vector<std::pair<std::string, BatchNormState<T>*>>& out) {
    stem_.collect_states("stem", out);
    for (int s = 0; s < 4; ++s) {
      const std::string p = "stage" + std::to_string(s + 1);
      conv_[s].collect_states(p + ".conv", out);
      split_[s].collect_states(p + ".split", out);
    }
    head_conv_.collect_states("head_conv", out);
  }

  const std::vector<std::int64_t>& widths() const { return widths_; }

 private:
  std::vector<std::int64_t> widths_;
  std::vector<detail::StagePlan> plan_;
  PlainConvBlock<T> stem_;
  PlainConvBlock<T> conv_[4];
  PlainSplitBlock<T> split_[4];
  PlainHeadConv<T> head_conv_;
  Tensor<T> head_w_, head_b_;
};

// ---------------------------------------------------------------------------
// parameter accounting
// ---------------------------------------------------------------------------

// Trainable-scalar count of the group toy net, by closed formula. Must agree
// exactly with the constructed model (tested).
inline std::int64_t group_param_formula(std::int64_t in_ch, const std::vector<std::int64_t>& w,
                                        std::int64_t classes) {
  auto gcba = [](std::int64_t ci, std::int64_t co) {
    return 4 * ci * co + 9 * co + 16 + 2 * co;
  };
  auto pw_gcba_no_delta = [](std::int64_t ci, std::int64_t co) { return 4 * ci * co + 2 * co; };
  auto split_block = [&](std::int64_t c) {
    const std::int64_t half = c / 2;
    return 2 * gcba(half, half) + 16 + pw_gcba_no_delta(3 * half, c);
  };
  std::int64_t total = in_ch * w[0] * 9 + 16 + 2 * w[0];  // lifting + its delta + bn
  std::int64_t ci = w[0];
  for (int s = 0; s < 4; ++s) {
    const std::int64_t co = w[std::min<std::size_t>(s + 1, 3)];
    total += gcba(ci, co) + split_block(co);
    ci = co;
  }
  total += ci * ci + ci + 2 * ci;        // transfer: 1x1 conv + bias + bn
  total += ci * classes + classes;       // linear head
  return total;
}

inline std::int64_t plain_param_formula(std::int64_t in_ch, const std::vector<std::int64_t>& w,
                                        std::int64_t classes) {
  auto conv = [](std::int64_t ci, std::int64_t co, std::int64_t k) {
    return ci * co * k * k + 2 * co;
  };
  auto split_block = [&](std::int64_t c) {
    const std::int64_t half = c / 2;
    return 2 * conv(half, half, 3) + conv(3 * half, c, 1);
  };
  std::int64_t total = conv(in_ch, w[0], 3);
  std::int64_t ci = w[0];
  for (int s = 0; s < 4; ++s) {
    const std::int64_t co = w[std::min<std::size_t>(s + 1, 3)];
    total += conv(ci, co, 3) + split_block(co);
    ci = co;
  }
  total += ci * ci + ci + 2 * ci;
  total += ci * classes + classes;
  return total;
}

// Plain baseline widths whose parameter count lands nearest the group
// model's: coarse scale scan followed by per-stage local search. Widths
// stay even (the split block halves channels).
inline std::vector<std::int64_t> match_plain_widths(const ModelConfig& cfg) {
  const std::int64_t target = group_param_formula(cfg.in_channels, cfg.widths, cfg.num_classes);
  auto quantize = [](double v) {
    auto q = static_cast<std::int64_t>(std::llround(v / 2.0)) * 2;
    return std::max<std::int64_t>(2, q);
  };
  std::vector<std::int64_t> best;
  std::int64_t best_err = -1;
  for (double lam = 0.30; lam <= 1.21; lam += 0.01) {
    std::vector<std::int64_t> w;
    for (auto v : cfg.widths) w.push_back(quantize(lam * static_cast<double>(v)));
    const std::int64_t err =
        std::abs(plain_param_formula(cfg.in_channels, w, cfg.num_classes) - target);
    if (best_err < 0 || err < best_err) {
      best_err = err;
      best = w;
    }
  }
  for (int pass = 0; pass < 4; ++pass) {
    for (std::size_t i = 0; i < best.size(); ++i) {
      for (std::int64_t d : {-2, 2}) {
        auto cand = best;
        cand[i] = std::max<std::int64_t>(2, cand[i] + d);
        const std::int64_t err =
            std::abs(plain_param_formula(cfg.in_channels, cand, cfg.num_classes) - target);
        if (err < best_err) {
          best_err = err;
          best = cand;
        }
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// classifier wrapper
// ---------------------------------------------------------------------------

template <typename T>
class ToyClassifier {
 public:
  ToyClassifier() = default;
  explicit ToyClassifier(const ModelConfig& cfg) : cfg_(cfg) {
    std::mt19937_64 rng(seed_stream(cfg.seed, 0xC0FFEE));
    if (cfg.mode == EqMode::plain) {
      plain_ = std::make_unique<PlainToyNet<T>>(cfg, match_plain_widths(cfg), rng);
    } else {
      group_ = std::make_unique<GroupToyNet<T>>(cfg, rng);
    }
  }

  ToyClassifier(const ToyClassifier&) = delete;
  ToyClassifier& operator=(const ToyClassifier&) = delete;
  ToyClassifier(ToyClassifier&&) = default;
  ToyClassifier& operator=(ToyClassifier&&) = default;

  const ModelConfig& config() const { return cfg_; }
  bool is_group() const { return group_ != nullptr; }

  Tensor<T> forward(const Tensor<T>& x, bool training = false) {
    return group_ ? group_->forward(x, training) : plain_->forward(x, training);
  }

  std::vector<std::pair<std::string, Tensor<T>>> forward_stages(const Tensor<T>& x) {
    check(group_ != nullptr, "forward_stages: plain models have no group stages");
    return group_->forward_stages(x, false);
  }

  std::vector<NamedParam<T>> named_params() {
    std::vector<NamedParam<T>> out;
    if (group_)
      group_->collect(out);
    else
      plain_->collect(out);
    return out;
  }

  std::vector<NamedParam<T>> trainable_params() {
    std::vector<NamedParam<T>> out;
    for (auto& p : named_params())
      if (p.trainable) out.push_back(p);
    return out;
  }

  std::int64_t param_count() {
    std::int64_t n = 0;
    for (auto& p : trainable_params()) n += p.tensor->size();
    return n;
  }

  // Per-block breakdown in declaration order. Stage entries keep their
  // sub-block (gcba vs split block); everything else groups by top name.
  std::vector<std::pair<std::string, std::int64_t>> param_breakdown() {
    std::vector<std::pair<std::string, std::int64_t>> rows;
    for (auto& p : trainable_params()) {
      auto pos = p.name.find('.');
      if (p.name.rfind("stage", 0) == 0 && pos != std::string::npos) {
        const auto second = p.name.find('.', pos + 1);
        pos = second == std::string::npos ? p.name.size() : second;
      } else if (pos == std::string::npos) {
        pos = p.name.size();
      }
      const std::string block = p.name.substr(0, pos);
      if (rows.empty() || rows.back().first != block) rows.emplace_back(block, 0);
      rows.back().second += p.tensor->size();
    }
    return rows;
  }

  std::vector<std::pair<std::string, BatchNormState<T>*>> bn_states() {
    std::vector<std::pair<std::string, BatchNormState<T>*>> out;
    if (group_)
      group_->collect_states(out);
    else
      plain_->collect_states(out);
    return out;
  }

  void set_delta_scale(T t) {
    if (group_) group_->set_delta_scale(t);
  }

  GroupToyNet<T>* group_net() { return group_.get(); }
  PlainToyNet<T>* plain_net() { return plain_.get(); }

 private:
  ModelConfig cfg_;
  std::unique_ptr<GroupToyNet<T>> group_;
  std::unique_ptr<PlainToyNet<T>> plain_;
};

}  // namespace r2

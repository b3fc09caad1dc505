#pragma once

// Deterministic desk-scale training: seeded shuffling and initialization,
// Adam / SGD-momentum, per-epoch metrics records, divergence guard, and
// the sigma ablation sweep.

#include <chrono>

#include "r2/checkpoint.hpp"
#include "r2/metrics.hpp"

namespace r2 {

enum class OptimizerKind { sgd_momentum, adam };

inline const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "sgd-momentum";
}

inline OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd-momentum") return OptimizerKind::sgd_momentum;
  throw ValueError("unknown optimizer '" + s + "' (expected adam|sgd-momentum)");
}

template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, T lr) : kind_(kind), lr_(lr) {}

  void attach(std::vector<NamedParam<T>> params) {
    params_ = std::move(params);
    m_.clear();
    v_.clear();
    for (auto& p : params_) {
      m_.emplace_back(p.tensor->data().size(), T(0));
      v_.emplace_back(p.tensor->data().size(), T(0));
    }
    t_ = 0;
  }

  void step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& data = params_[i].tensor->data();
      const auto& grad = params_[i].tensor->grad();
      if (kind_ == OptimizerKind::adam) {
        const T b1 = T(0.9), b2 = T(0.999), eps = T(1e-8);
        const T bc1 = T(1) - std::pow(b1, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(b2, static_cast<T>(t_));
        for (std::size_t k = 0; k < data.size(); ++k) {
          m_[i][k] = b1 * m_[i][k] + (T(1) - b1) * grad[k];
          v_[i][k] = b2 * v_[i][k] + (T(1) - b2) * grad[k] * grad[k];
          data[k] -= lr_ * (m_[i][k] / bc1) / (std::sqrt(v_[i][k] / bc2) + eps);
        }
      } else {
        const T mu = T(0.9);
        for (std::size_t k = 0; k < data.size(); ++k) {
          m_[i][k] = mu * m_[i][k] + grad[k];
          data[k] -= lr_ * m_[i][k];
        }
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor->zero_grad();
  }

  // Moment tensors for checkpoint persistence.
  std::vector<std::pair<std::string, Tensor<T>>> state_tensors() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.emplace_back("opt.m." + params_[i].name,
                       Tensor<T>::from_data(params_[i].tensor->shape(), m_[i]));
      out.emplace_back("opt.v." + params_[i].name,
                       Tensor<T>::from_data(params_[i].tensor->shape(), v_[i]));
    }
    return out;
  }

  std::int64_t step_count() const { return t_; }

 private:
  OptimizerKind kind_;
  T lr_;
  std::vector<NamedParam<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t t_ = 0;
};

struct TrainConfig {
  int epochs = 3;
  std::int64_t batch_size = 64;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 7;
  double sigma = 0.1;
  EqMode mode = EqMode::relaxed;
  std::vector<std::int64_t> widths{8, 16, 32, 32};
  std::int64_t num_classes = 10;
  std::int64_t subset_train = 0;  // 0 = use all
  std::int64_t subset_test = 0;
  std::string out_path;  // optional checkpoint destination
};

struct MetricsRecord {
  int epoch = 0;
  std::string split;
  double loss = 0;
  double top1_error_percent = 0;
  double empirical_ee = 0;
  double wall_seconds = 0;
};

// Wall time is inherently non-deterministic and excluded from equality.
inline bool records_equal(const MetricsRecord& a, const MetricsRecord& b) {
  return a.epoch == b.epoch && a.split == b.split && a.loss == b.loss &&
         a.top1_error_percent == b.top1_error_percent && a.empirical_ee == b.empirical_ee;
}

inline std::string record_line(const MetricsRecord& r) {
  std::ostringstream os;
  os.precision(10);
  os << "metrics epoch=" << r.epoch << " split=" << r.split << " loss=" << r.loss
     << " top1_error_percent=" << r.top1_error_percent << " empirical_ee=" << r.empirical_ee
     << " wall_seconds=" << r.wall_seconds;
  return os.str();
}

struct EvalResult {
  double loss = 0;
  double top1_error_percent = 0;
};

// Pure full-set evaluation; argmax ties break toward the lowest class index.
template <typename T>
EvalResult evaluate(ToyClassifier<T>& model, const LabeledImageSet& set,
                    std::int64_t batch = 256) {
  NoGradGuard ng;
  const std::int64_t n = set.count();
  check(n >= 1, "evaluate: empty dataset");
  double loss_sum = 0;
  std::int64_t wrong = 0;
  for (std::int64_t start = 0; start < n; start += batch) {
    const std::int64_t take = std::min(batch, n - start);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(take));
    std::iota(idx.begin(), idx.end(), start);
    auto x = gather_images(set, idx).template to<T>();
    std::vector<std::int64_t> labels(set.labels.begin() + start,
                                     set.labels.begin() + start + take);
    auto logits = model.forward(x, false);
    loss_sum += static_cast<double>(softmax_cross_entropy(logits, labels).item()) *
                static_cast<double>(take);
    const std::int64_t classes = logits.dim(1);
    for (std::int64_t i = 0; i < take; ++i) {
      const T* row = logits.data().data() + i * classes;
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < classes; ++j)
        if (row[j] > row[best]) best = j;
      if (best != labels[static_cast<std::size_t>(i)]) ++wrong;
    }
  }
  return {loss_sum / static_cast<double>(n),
          100.0 * static_cast<double>(wrong) / static_cast<double>(n)};
}

template <typename T>
struct TrainResult {
  ToyClassifier<T> model;
  std::vector<MetricsRecord> records;
};

// Seeded end-to-end training. The divergence guard aborts with a structured
// error when the loss goes non-finite or explodes.
template <typename T = float>
TrainResult<T> train(const TrainConfig& cfg, const LabeledImageSet& train_set_full,
                     const LabeledImageSet& test_set_full,
                     const std::function<void(const MetricsRecord&)>& on_record = nullptr) {
  check(cfg.epochs >= 1 && cfg.batch_size >= 1 && cfg.lr > 0, "train: invalid config");
  const LabeledImageSet train_set =
      subset(train_set_full, cfg.subset_train, seed_stream(cfg.seed, 101));
  const LabeledImageSet test_set =
      subset(test_set_full, cfg.subset_test, seed_stream(cfg.seed, 102));
  check(train_set.count() >= 1 && test_set.count() >= 1, "train: empty dataset");

  ModelConfig mc;
  mc.widths = cfg.widths;
  mc.in_channels = train_set.images.dim(1);
  mc.num_classes = cfg.num_classes;
  mc.image_size = train_set.images.dim(2);
  mc.mode = cfg.mode;
  mc.sigma = cfg.sigma;
  mc.seed = cfg.seed;

  TrainResult<T> result{ToyClassifier<T>(mc), {}};
  auto& model = result.model;
  Optimizer<T> opt(cfg.optimizer, static_cast<T>(cfg.lr));
  opt.attach(model.trainable_params());

  // fixed probe subset for the per-epoch equivariance column
  auto nat = dataset_probes<T>(test_set, 4);
  ProbeSet<T> probes;
  probes.seed = cfg.seed;
  probes.inputs = std::move(nat);

  const std::int64_t n = train_set.count();
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 erng(seed_stream(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), erng);

    double loss_sum = 0;
    std::int64_t seen = 0, wrong = 0, step = 0;
    for (std::int64_t start = 0; start < n; start += cfg.batch_size, ++step) {
      const std::int64_t take = std::min(cfg.batch_size, n - start);
      std::vector<std::int64_t> idx(order.begin() + start, order.begin() + start + take);
      auto x = gather_images(train_set, idx).template to<T>();
      std::vector<std::int64_t> labels(static_cast<std::size_t>(take));
      for (std::int64_t i = 0; i < take; ++i) labels[i] = train_set.labels[idx[i]];

      auto logits = model.forward(x, true);
      auto loss = softmax_cross_entropy(logits, labels);
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv) || lv > 1e4)
        throw DivergenceError("train: loss diverged at epoch " + std::to_string(epoch) +
                              " step " + std::to_string(step) + " (value " + std::to_string(lv) +
                              ")");
      loss_sum += lv * static_cast<double>(take);
      const std::int64_t classes = logits.dim(1);
      for (std::int64_t i = 0; i < take; ++i) {
        const T* row = logits.data().data() + i * classes;
        std::int64_t best = 0;
        for (std::int64_t j = 1; j < classes; ++j)
          if (row[j] > row[best]) best = j;
        if (best != labels[static_cast<std::size_t>(i)]) ++wrong;
      }
      seen += take;

      opt.zero_grad();
      loss.backward();
      opt.step();
    }
    const double train_wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    MetricsRecord tr;
    tr.epoch = epoch;
    tr.split = "train";
    tr.loss = loss_sum / static_cast<double>(seen);
    tr.top1_error_percent = 100.0 * static_cast<double>(wrong) / static_cast<double>(seen);
    tr.empirical_ee = 0;
    tr.wall_seconds = train_wall;
    result.records.push_back(tr);
    if (on_record) on_record(tr);

    const auto t1 = std::chrono::steady_clock::now();
    const EvalResult ev = evaluate(model, test_set);
    MetricsRecord te;
    te.epoch = epoch;
    te.split = "test";
    te.loss = ev.loss;
    te.top1_error_percent = ev.top1_error_percent;
    te.empirical_ee = static_cast<double>(equivariance_error(
        [&](const Tensor<T>& p) { return model.forward(p, false); }, probes,
        action_identity<T>));
    te.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    result.records.push_back(te);
    if (on_record) on_record(te);
  }

  if (!cfg.out_path.empty()) {
    if constexpr (std::is_same_v<T, float>) {
      std::map<std::string, std::string> meta;
      meta["epoch"] = std::to_string(cfg.epochs);
      meta["optimizer"] = optimizer_name(cfg.optimizer);
      save_checkpoint(cfg.out_path, model, meta, opt.state_tensors());
    } else {
      throw ValueError("train: checkpoints are stored at f32; train in f32 to save");
    }
  }
  return result;
}

struct SweepRow {
  double sigma = 0;
  double final_test_error = 0;
  double final_ee = 0;
  double init_ee = 0;
};

// Trains one model per sigma with a shared seed and reports the comparison
// table. init_ee is measured before training (freshly initialized deltas).
template <typename T = float>
std::vector<SweepRow> sigma_sweep(const TrainConfig& base, const std::vector<double>& sigmas,
                                  const LabeledImageSet& train_set,
                                  const LabeledImageSet& test_set,
                                  const std::function<void(const SweepRow&)>& on_row = nullptr) {
  check(!sigmas.empty(), "sigma_sweep: need at least one sigma");
  std::vector<SweepRow> rows;
  for (double s : sigmas) {
    TrainConfig cfg = base;
    cfg.sigma = s;
    cfg.out_path.clear();

    // pre-training EE of the freshly initialized model
    ModelConfig mc;
    mc.widths = cfg.widths;
    mc.num_classes = cfg.num_classes;
    mc.mode = cfg.mode;
    mc.sigma = s;
    mc.seed = cfg.seed;
    mc.in_channels = train_set.images.dim(1);
    mc.image_size = train_set.images.dim(2);
    ToyClassifier<T> fresh(mc);
    auto probes = mixed_probes<T>(cfg.seed, 8,
                                  {1, mc.in_channels, mc.image_size, mc.image_size},
                                  dataset_probes<T>(test_set, 4));
    SweepRow row;
    row.sigma = s;
    row.init_ee = static_cast<double>(equivariance_error(
        [&](const Tensor<T>& p) { return fresh.forward(p, false); }, probes,
        action_identity<T>));

    auto res = train<T>(cfg, train_set, test_set);
    for (auto it = res.records.rbegin(); it != res.records.rend(); ++it)
      if (it->split == "test") {
        row.final_test_error = it->top1_error_percent;
        row.final_ee = it->empirical_ee;
        break;
      }
    rows.push_back(row);
    if (on_row) on_row(row);
  }
  return rows;
}

}  // namespace r2

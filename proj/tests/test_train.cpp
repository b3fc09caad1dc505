#include <gtest/gtest.h>

#include "r2/train.hpp"
#include "testing_util.hpp"

using namespace r2;
using r2::testing::expect_grad_matches;
using r2::testing::random_tensor;

namespace {

TrainConfig tiny_config(EqMode mode, int epochs = 1) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.lr = 1e-3;
  cfg.seed = 7;
  cfg.mode = mode;
  cfg.sigma = 0.1;
  cfg.widths = {4, 8, 8, 8};
  cfg.num_classes = 4;
  return cfg;
}

}  // namespace

TEST(Optimizer, SgdStepMatchesClosedForm) {
  // L = 0.5 ||x - a||^2, grad = x - a, single step: x' = x - lr (x - a)
  auto x = Tensor<float>::from_data({3}, {1.0f, -2.0f, 0.5f}, true);
  auto a = Tensor<float>::from_data({3}, {0.2f, 0.4f, -0.6f});
  const float lr = 0.05f;
  Optimizer<float> opt(OptimizerKind::sgd_momentum, lr);
  opt.attach({{"x", &x, true}});
  auto loss = scale(sum_all(mul(sub(x, a), sub(x, a))), 0.5f);
  opt.zero_grad();
  loss.backward();
  opt.step();
  for (int i = 0; i < 3; ++i) {
    const float x0 = (std::vector<float>{1.0f, -2.0f, 0.5f})[i];
    const float expect = x0 - lr * (x0 - a.data()[i]);
    EXPECT_NEAR(x.data()[i], expect, 1e-7);
  }
}

TEST(Optimizer, AdamFirstStepMatchesClosedForm) {
  auto x = Tensor<float>::from_data({2}, {3.0f, -1.0f}, true);
  const float lr = 0.01f;
  Optimizer<float> opt(OptimizerKind::adam, lr);
  opt.attach({{"x", &x, true}});
  auto loss = scale(sum_all(mul(x, x)), 0.5f);  // grad = x
  opt.zero_grad();
  loss.backward();
  opt.step();
  // at t=1 bias corrections cancel: m_hat = g, v_hat = g^2
  for (int i = 0; i < 2; ++i) {
    const float x0 = (std::vector<float>{3.0f, -1.0f})[i];
    const float expect = x0 - lr * x0 / (std::abs(x0) + 1e-8f);
    EXPECT_NEAR(x.data()[i], expect, 1e-6);
  }
}

TEST(Train, LossDecreasesFromUniformRegion) {
  auto train_set = make_symmetry_breaking_set(64, 1.0, 1);
  auto test_set = make_symmetry_breaking_set(32, 1.0, 2);
  TrainConfig cfg = tiny_config(EqMode::relaxed, 2);
  auto res = train<float>(cfg, train_set, test_set);
  ASSERT_EQ(res.records.size(), 4u);
  // 4 classes: untrained cross-entropy starts in the ln(4) region
  EXPECT_LT(res.records[0].loss, std::log(4.0) + 0.4);
  EXPECT_GT(res.records[0].loss, 0.2);
  EXPECT_LT(res.records[2].loss, res.records[0].loss);  // epoch 2 below epoch 1
}

TEST(Train, DeterministicRecordsAcrossRuns) {
  auto train_set = make_symmetry_breaking_set(48, 1.0, 3);
  auto test_set = make_symmetry_breaking_set(24, 1.0, 4);
  TrainConfig cfg = tiny_config(EqMode::relaxed, 2);
  auto a = train<float>(cfg, train_set, test_set);
  auto b = train<float>(cfg, train_set, test_set);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i)
    EXPECT_TRUE(records_equal(a.records[i], b.records[i])) << "record " << i;
}

TEST(Train, ParameterTrajectoriesBitIdenticalStepwise) {
  auto set = make_symmetry_breaking_set(48, 1.0, 5);
  auto run_steps = [&](int n_steps) {
    ModelConfig mc;
    mc.widths = {4, 8, 8, 8};
    mc.num_classes = 4;
    mc.image_size = 28;
    mc.mode = EqMode::relaxed;
    mc.sigma = 0.1;
    mc.seed = 11;
    ToyClassifier<float> model(mc);
    Optimizer<float> opt(OptimizerKind::adam, 1e-3f);
    opt.attach(model.trainable_params());
    std::vector<std::vector<float>> snapshots;
    for (int s = 0; s < n_steps; ++s) {
      std::vector<std::int64_t> idx;
      for (std::int64_t i = 0; i < 16; ++i) idx.push_back((s * 16 + i) % set.count());
      auto x = gather_images(set, idx);
      std::vector<std::int64_t> labels;
      for (auto i : idx) labels.push_back(set.labels[i]);
      auto loss = softmax_cross_entropy(model.forward(x, true), labels);
      opt.zero_grad();
      loss.backward();
      opt.step();
      std::vector<float> snap;
      for (auto& p : model.trainable_params())
        snap.insert(snap.end(), p.tensor->data().begin(), p.tensor->data().end());
      snapshots.push_back(std::move(snap));
    }
    return snapshots;
  };
  auto a = run_steps(3), b = run_steps(3);
  for (int s = 0; s < 3; ++s) EXPECT_EQ(a[s], b[s]) << "step " << s;
}

TEST(Train, StrictModeKeepsDeltaBitwiseZero) {
  auto train_set = make_symmetry_breaking_set(48, 1.0, 6);
  auto test_set = make_symmetry_breaking_set(24, 1.0, 7);
  auto res = train<float>(tiny_config(EqMode::strict), train_set, test_set);
  int deltas = 0;
  for (auto& p : res.model.named_params())
    if (p.name.find("delta") != std::string::npos) {
      ++deltas;
      EXPECT_FALSE(p.trainable);
      for (float v : p.tensor->data()) EXPECT_EQ(v, 0.0f);
    }
  EXPECT_GT(deltas, 5);
}

TEST(Train, DivergenceGuardAborts) {
  auto train_set = make_symmetry_breaking_set(48, 1.0, 8);
  auto test_set = make_symmetry_breaking_set(24, 1.0, 9);
  TrainConfig cfg = tiny_config(EqMode::relaxed);
  cfg.lr = 1e6;  // guaranteed blow-up
  cfg.epochs = 3;
  try {
    train<float>(cfg, train_set, test_set);
    FAIL() << "expected divergence error";
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch"), std::string::npos);
    EXPECT_NE(msg.find("step"), std::string::npos);
  }
}

TEST(Evaluate, PureAndTieBreaking) {
  auto set = make_symmetry_breaking_set(32, 1.0, 10);
  ModelConfig mc;
  mc.widths = {4, 8, 8, 8};
  mc.num_classes = 4;
  mc.image_size = 28;
  mc.mode = EqMode::relaxed;
  mc.seed = 12;
  ToyClassifier<float> model(mc);
  model.forward(gather_images(set, {0, 1, 2, 3}), true);  // populate bn stats
  auto a = evaluate(model, set);
  auto b = evaluate(model, set);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.top1_error_percent, b.top1_error_percent);
}

TEST(Evaluate, RandomModelNearChanceOnBalancedLabels) {
  // fixed model vs independent uniform labels: P(correct) = 1/10 exactly
  std::mt19937_64 rng(13);
  const std::int64_t n = 500;
  auto images = Tensor<float>::randn({n, 1, 12, 12}, rng, 0.5);
  for (auto& v : images.data()) v = std::clamp(v + 0.5f, 0.0f, 1.0f);
  LabeledImageSet set;
  set.images = images;
  std::uniform_int_distribution<std::int64_t> lbl(0, 9);
  for (std::int64_t i = 0; i < n; ++i) set.labels.push_back(lbl(rng));
  set.provenance = "synthetic";
  ModelConfig mc;
  mc.widths = {4, 8, 8, 8};
  mc.num_classes = 10;
  mc.image_size = 12;
  mc.mode = EqMode::plain;
  mc.seed = 14;
  ToyClassifier<float> model(mc);
  model.forward(gather_images(set, {0, 1, 2, 3, 4, 5, 6, 7}), true);
  const auto ev = evaluate(model, set);
  // binomial n=500 p=0.9: 3 sigma ~ 4 percentage points
  EXPECT_GT(ev.top1_error_percent, 86.0);
  EXPECT_LT(ev.top1_error_percent, 94.0);
}

TEST(Train, FullModelSpotGradientCheck) {
  // five randomly selected parameters, at least one delta entry, at 1e-4
  // relative in double
  auto set = make_symmetry_breaking_set(8, 1.0, 15);
  ModelConfig mc;
  mc.widths = {4, 8, 8, 8};
  mc.num_classes = 4;
  mc.image_size = 28;
  mc.mode = EqMode::relaxed;
  mc.sigma = 0.1;
  mc.seed = 16;
  ToyClassifier<double> model(mc);
  auto x = gather_images(set, {0, 1, 2, 3}).to<double>();
  std::vector<std::int64_t> labels(set.labels.begin(), set.labels.begin() + 4);
  auto make_loss = [&] { return softmax_cross_entropy(model.forward(x, true), labels); };

  auto params = model.trainable_params();
  std::mt19937_64 rng(17);
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].name.find("delta") != std::string::npos) {
      chosen.push_back(i);
      break;
    }
  std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
  while (chosen.size() < 5) {
    const std::size_t c = pick(rng);
    if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) chosen.push_back(c);
  }
  for (std::size_t c : chosen) {
    SCOPED_TRACE(params[c].name);
    expect_grad_matches(make_loss, *params[c].tensor, 1e-5, 1e-4, 1e-7, 3,
                        static_cast<std::uint64_t>(c));
  }
}

TEST(SigmaSweep, TableAndInitEEMonotone) {
  auto train_set = make_symmetry_breaking_set(48, 1.0, 18);
  auto test_set = make_symmetry_breaking_set(24, 1.0, 19);
  TrainConfig cfg = tiny_config(EqMode::relaxed, 1);
  // single sigma: one row, no error
  auto one = sigma_sweep<float>(cfg, {0.1}, train_set, test_set);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].sigma, 0.1);
  // pre-training EE column non-decreasing in sigma (same seed: deltas scale)
  auto rows = sigma_sweep<float>(cfg, {0.05, 0.2, 0.8}, train_set, test_set);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_LE(rows[0].init_ee, rows[1].init_ee + 1e-6);
  EXPECT_LE(rows[1].init_ee, rows[2].init_ee + 1e-6);
  EXPECT_THROW(sigma_sweep<float>(cfg, {}, train_set, test_set), ShapeError);
}

TEST(Records, LineFormatStable) {
  MetricsRecord r;
  r.epoch = 2;
  r.split = "test";
  r.loss = 1.25;
  r.top1_error_percent = 10.5;
  r.empirical_ee = 0.001;
  r.wall_seconds = 3.5;
  const std::string line = record_line(r);
  EXPECT_NE(line.find("metrics epoch=2 split=test loss=1.25"), std::string::npos);
  EXPECT_NE(line.find("top1_error_percent=10.5"), std::string::npos);
  EXPECT_NE(line.find("empirical_ee=0.001"), std::string::npos);
}

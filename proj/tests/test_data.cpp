#include <gtest/gtest.h>

#include <fstream>

#include "r2/data.hpp"
#include "r2/train.hpp"
#include "testing_util.hpp"

using namespace r2;

namespace {

std::string temp_path(const std::string& name) {
  return ::testing::TempDir() + "/" + name;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(is)), {});
}

}  // namespace

TEST(Idx, SaveLoadRoundTripByteIdentical) {
  auto set = make_symmetry_breaking_set(17, 0.8, 3);
  const std::string img1 = temp_path("a-images-idx3-ubyte"), lbl1 = temp_path("a-labels-idx1-ubyte");
  save_idx(set, img1, lbl1);
  auto loaded = load_idx(img1, lbl1, "synthetic");
  EXPECT_EQ(loaded.count(), 17);
  EXPECT_EQ(loaded.images.shape(), (Shape{17, 1, 28, 28}));
  EXPECT_EQ(loaded.labels, set.labels);
  for (float v : loaded.images.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  const std::string img2 = temp_path("b-images-idx3-ubyte"), lbl2 = temp_path("b-labels-idx1-ubyte");
  save_idx(loaded, img2, lbl2);
  EXPECT_EQ(slurp(img1), slurp(img2));
  EXPECT_EQ(slurp(lbl1), slurp(lbl2));
}

TEST(Idx, BadMagicIsRejectedWithDetail) {
  auto set = make_symmetry_breaking_set(3, 0.5, 4);
  const std::string img = temp_path("c-images"), lbl = temp_path("c-labels");
  save_idx(set, img, lbl);
  // image file passed as labels: magic 0x803 where 0x801 expected
  try {
    load_idx(img, img);
    FAIL() << "expected bad magic";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("803"), std::string::npos);
  }
  EXPECT_THROW(load_idx(lbl, lbl), IoError);
}

TEST(Idx, TruncationReportsByteCounts) {
  auto set = make_symmetry_breaking_set(5, 0.5, 5);
  const std::string img = temp_path("d-images"), lbl = temp_path("d-labels");
  save_idx(set, img, lbl);
  auto bytes = slurp(img);
  std::ofstream out(img, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 100));
  out.close();
  try {
    load_idx(img, lbl);
    FAIL() << "expected truncation error";
  } catch (const IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::to_string(bytes.size())), std::string::npos);      // expected
    EXPECT_NE(msg.find(std::to_string(bytes.size() - 100)), std::string::npos);  // actual
  }
}

TEST(Idx, CountMismatchRejected) {
  auto a = make_symmetry_breaking_set(4, 0.5, 6);
  auto b = make_symmetry_breaking_set(6, 0.5, 7);
  const std::string img = temp_path("e-images"), lbl_a = temp_path("e-labels-a"),
                    lbl_b = temp_path("e-labels-b");
  save_idx(a, img, lbl_a);
  save_idx(b, temp_path("e-img-b"), lbl_b);
  EXPECT_THROW(load_idx(img, lbl_b), IoError);
}

TEST(RotateAugment, DeterministicAndNormPreserving) {
  auto set = make_symmetry_breaking_set(64, 1.0, 8);
  auto aug1 = rotate_augment(set, 99);
  auto aug2 = rotate_augment(set, 99);
  EXPECT_EQ(aug1.images.data(), aug2.images.data());
  EXPECT_EQ(aug1.labels, set.labels);
  // per-image multiset of pixels preserved exactly (lossless permutation)
  for (std::int64_t i = 0; i < set.count(); ++i) {
    std::vector<float> a(set.images.data().begin() + i * 784,
                         set.images.data().begin() + (i + 1) * 784);
    std::vector<float> b(aug1.images.data().begin() + i * 784,
                         aug1.images.data().begin() + (i + 1) * 784);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
  auto different = rotate_augment(set, 100);
  EXPECT_NE(different.images.data(), aug1.images.data());
}

TEST(RotateAugment, HistogramApproximatelyUniform) {
  // count rotations by matching against the four candidates
  auto set = make_symmetry_breaking_set(2000, 1.0, 9);
  auto aug = rotate_augment(set, 7);
  std::array<int, 4> hist{0, 0, 0, 0};
  std::vector<float> rot(784);
  for (std::int64_t i = 0; i < set.count(); ++i) {
    const float* orig = set.images.data().data() + i * 784;
    const float* got = aug.images.data().data() + i * 784;
    for (int g = 0; g < 4; ++g) {
      detail::rotate_plane(rot.data(), orig, 28, g);
      if (std::equal(rot.begin(), rot.end(), got)) {
        ++hist[g];
        break;
      }
    }
  }
  const double n = 2000, p = 0.25;
  const double sigma3 = 3.0 * std::sqrt(n * p * (1 - p));
  for (int g = 0; g < 4; ++g) {
    EXPECT_GT(hist[g], n * p - sigma3) << "g=" << g;
    EXPECT_LT(hist[g], n * p + sigma3) << "g=" << g;
  }
  int total = hist[0] + hist[1] + hist[2] + hist[3];
  EXPECT_EQ(total, 2000);  // every image matched exactly one rotation
}

TEST(SymmetryBreakingSet, ZeroDefectIsExactlySymmetric) {
  auto set = make_symmetry_breaking_set(16, 0.0, 10);
  for (std::int64_t i = 0; i < set.count(); ++i) {
    std::vector<float> img(set.images.data().begin() + i * 784,
                           set.images.data().begin() + (i + 1) * 784);
    std::vector<float> rot(784);
    for (int g = 1; g < 4; ++g) {
      detail::rotate_plane(rot.data(), img.data(), 28, g);
      EXPECT_EQ(rot, img) << "image " << i << " g=" << g;
    }
  }
}

TEST(SymmetryBreakingSet, DeterministicAndBounded) {
  auto a = make_symmetry_breaking_set(32, 1.0, 11);
  auto b = make_symmetry_breaking_set(32, 1.0, 11);
  EXPECT_EQ(a.images.data(), b.images.data());
  EXPECT_EQ(a.labels, b.labels);
  for (float v : a.images.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  for (auto l : a.labels) {
    EXPECT_GE(l, 0);
    EXPECT_LT(l, 4);
  }
  EXPECT_THROW(make_symmetry_breaking_set(0, 0.5, 1), ShapeError);
  EXPECT_THROW(make_symmetry_breaking_set(4, 1.5, 1), ShapeError);
}

TEST(SymmetryBreakingSet, LinearProbeSeparatesClasses) {
  // multinomial logistic regression on raw pixels reaches >= 90% on its
  // own 400 samples at full defect scale
  auto set = make_symmetry_breaking_set(400, 1.0, 12);
  auto x = reshape(set.images.to<float>(), {400, 784});
  auto w = Tensor<float>::zeros({784, 4}, true);
  auto b = Tensor<float>::zeros({4}, true);
  Optimizer<float> opt(OptimizerKind::adam, 0.05f);
  opt.attach({{"w", &w, true}, {"b", &b, true}});
  for (int step = 0; step < 120; ++step) {
    auto logits = add_bias(matmul(x, w), b, 1);
    auto loss = softmax_cross_entropy(logits, set.labels);
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  NoGradGuard ng;
  auto logits = add_bias(matmul(x, w), b, 1);
  int correct = 0;
  for (std::int64_t i = 0; i < 400; ++i) {
    const float* row = logits.data().data() + i * 4;
    int best = 0;
    for (int j = 1; j < 4; ++j)
      if (row[j] > row[best]) best = j;
    if (best == set.labels[i]) ++correct;
  }
  EXPECT_GE(correct, 360) << "linear probe accuracy " << correct / 4.0 << "%";
}

#pragma once

// Dataset ingestion: the IDX binary container (big-endian header, u8
// payload), exact 90-degree rotation augmentation, and a synthetic
// symmetry-breaking set whose classes are the four quadrant positions of a
// local defect on an exactly C4-symmetric base pattern.

#include <fstream>

#include "r2/group.hpp"

namespace r2 {

struct LabeledImageSet {
  Tensor<float> images;  // (n, 1, h, w), values in [0,1]
  std::vector<std::int64_t> labels;
  std::string provenance;  // train | test | synthetic

  std::int64_t count() const { return images.defined() ? images.dim(0) : 0; }
};

namespace detail {

inline std::uint32_t read_be_u32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void write_be_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("idx: cannot open '" + path + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(is),
                                    std::istreambuf_iterator<char>());
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline LabeledImageSet load_idx(const std::string& images_path, const std::string& labels_path,
                                std::string provenance = "train") {
  const auto img = detail::read_file(images_path);
  const auto lbl = detail::read_file(labels_path);
  if (img.size() < 16)
    throw IoError("idx: image file '" + images_path + "' shorter than its 16-byte header");
  if (lbl.size() < 8)
    throw IoError("idx: label file '" + labels_path + "' shorter than its 8-byte header");

  const std::uint32_t im = detail::read_be_u32(img.data());
  if (im != kIdxImagesMagic) {
    std::ostringstream os;
    os << "idx: bad magic in image file '" << images_path << "': got 0x" << std::hex << im
       << ", expected 0x" << kIdxImagesMagic;
    throw IoError(os.str());
  }
  const std::uint32_t lm = detail::read_be_u32(lbl.data());
  if (lm != kIdxLabelsMagic) {
    std::ostringstream os;
    os << "idx: bad magic in label file '" << labels_path << "': got 0x" << std::hex << lm
       << ", expected 0x" << kIdxLabelsMagic;
    throw IoError(os.str());
  }

  const std::int64_t n = detail::read_be_u32(img.data() + 4);
  const std::int64_t rows = detail::read_be_u32(img.data() + 8);
  const std::int64_t cols = detail::read_be_u32(img.data() + 12);
  const std::int64_t nl = detail::read_be_u32(lbl.data() + 4);
  if (n != nl)
    throw IoError("idx: image count " + std::to_string(n) + " does not match label count " +
                  std::to_string(nl));

  const std::size_t expect_img = 16 + static_cast<std::size_t>(n * rows * cols);
  if (img.size() != expect_img)
    throw IoError("idx: image payload truncated or padded: expected " +
                  std::to_string(expect_img) + " bytes, got " + std::to_string(img.size()));
  const std::size_t expect_lbl = 8 + static_cast<std::size_t>(n);
  if (lbl.size() != expect_lbl)
    throw IoError("idx: label payload truncated or padded: expected " +
                  std::to_string(expect_lbl) + " bytes, got " + std::to_string(lbl.size()));

  std::vector<float> pixels(static_cast<std::size_t>(n * rows * cols));
  for (std::size_t i = 0; i < pixels.size(); ++i)
    pixels[i] = static_cast<float>(img[16 + i]) / 255.0f;
  LabeledImageSet set;
  set.images = Tensor<float>::from_data({n, 1, rows, cols}, std::move(pixels));
  set.labels.assign(lbl.begin() + 8, lbl.end());
  set.provenance = std::move(provenance);
  return set;
}

inline void save_idx(const LabeledImageSet& set, const std::string& images_path,
                     const std::string& labels_path) {
  const std::int64_t n = set.count();
  const std::int64_t rows = set.images.dim(2), cols = set.images.dim(3);
  {
    std::ofstream os(images_path, std::ios::binary);
    if (!os) throw IoError("idx: cannot open '" + images_path + "' for writing");
    detail::write_be_u32(os, kIdxImagesMagic);
    detail::write_be_u32(os, static_cast<std::uint32_t>(n));
    detail::write_be_u32(os, static_cast<std::uint32_t>(rows));
    detail::write_be_u32(os, static_cast<std::uint32_t>(cols));
    for (float v : set.images.data()) {
      const auto b = static_cast<unsigned char>(
          std::clamp<long>(std::lround(v * 255.0f), 0, 255));
      os.put(static_cast<char>(b));
    }
  }
  {
    std::ofstream os(labels_path, std::ios::binary);
    if (!os) throw IoError("idx: cannot open '" + labels_path + "' for writing");
    detail::write_be_u32(os, kIdxLabelsMagic);
    detail::write_be_u32(os, static_cast<std::uint32_t>(n));
    for (auto l : set.labels) os.put(static_cast<char>(static_cast<unsigned char>(l)));
  }
}

namespace detail {

// In-place CCW rotation of one (h=w=n) image plane by g*90 degrees.
inline void rotate_plane(float* dst, const float* src, std::int64_t n, int g) {
  switch (((g % 4) + 4) % 4) {
    case 0:
      std::copy(src, src + n * n, dst);
      break;
    case 1:
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) dst[i * n + j] = src[j * n + (n - 1 - i)];
      break;
    case 2:
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) dst[i * n + j] = src[(n - 1 - i) * n + (n - 1 - j)];
      break;
    default:
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) dst[i * n + j] = src[(n - 1 - j) * n + i];
      break;
  }
}

}  // namespace detail

// Each image independently rotated by a uniformly random element of C4
// (seeded); labels unchanged; the rotation is the lossless pixel
// permutation of act_on_input.
inline LabeledImageSet rotate_augment(const LabeledImageSet& set, std::uint64_t seed) {
  const std::int64_t n = set.count(), c = set.images.dim(1);
  const std::int64_t h = set.images.dim(2), w = set.images.dim(3);
  check(h == w, "rotate_augment: images must be square, got " + shape_str(set.images.shape()));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, 3);
  std::vector<float> out(set.images.data().size());
  for (std::int64_t i = 0; i < n; ++i) {
    const int g = pick(rng);
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t off = (i * c + ch) * h * w;
      detail::rotate_plane(out.data() + off, set.images.data().data() + off, h, g);
    }
  }
  LabeledImageSet res;
  res.images = Tensor<float>::from_data(set.images.shape(), std::move(out));
  res.labels = set.labels;
  res.provenance = set.provenance;
  return res;
}

// Synthetic quadrant-defect set. The base pattern (plus per-sample noise)
// is written quadrant-by-quadrant through the exact rotation maps, so a
// defect_scale of 0 yields images with act_on_input(g, img) == img
// bit-for-bit. At defect_scale > 0 an orientation-carrying wedge is added
// in one quadrant and the whole image is rotated by the class label.
inline LabeledImageSet make_symmetry_breaking_set(std::int64_t n, double defect_scale,
                                                  std::uint64_t seed) {
  check(n >= 1, "make_symmetry_breaking_set: n must be >= 1");
  check(defect_scale >= 0.0 && defect_scale <= 1.0,
        "make_symmetry_breaking_set: defect_scale must lie in [0,1]");
  constexpr std::int64_t size = 28;
  constexpr std::int64_t half = size / 2;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // the four rotated copies of the top-left quadrant tile the image
  auto quadrant_targets = [&](std::int64_t i, std::int64_t j) {
    return std::array<std::int64_t, 4>{
        i * size + j,                                  // g=0
        j * size + (size - 1 - i),                     // g=1 (CCW image rotation)
        (size - 1 - i) * size + (size - 1 - j),        // g=2
        (size - 1 - j) * size + i,                     // g=3
    };
  };

  std::vector<float> images(static_cast<std::size_t>(n * size * size), 0.0f);
  std::vector<std::int64_t> labels(static_cast<std::size_t>(n));
  std::vector<float> canvas(size * size);
  for (std::int64_t s = 0; s < n; ++s) {
    std::fill(canvas.begin(), canvas.end(), 0.0f);
    // symmetric base: two rings around the image center plus noise,
    // replicated by assignment so the symmetry is exact
    for (std::int64_t i = 0; i < half; ++i)
      for (std::int64_t j = 0; j < half; ++j) {
        const double cy = static_cast<double>(i) - 13.5, cx = static_cast<double>(j) - 13.5;
        const double r = std::sqrt(cy * cy + cx * cx);
        double v = 0.40 * std::exp(-(r - 9.5) * (r - 9.5) / 5.0) +
                   0.22 * std::exp(-(r - 4.0) * (r - 4.0) / 3.0);
        v += 0.05 * unit(rng);
        const float fv = static_cast<float>(v);
        for (auto t : quadrant_targets(i, j)) canvas[t] = fv;
      }
    // defect: an L-shaped wedge with an intensity gradient inside the
    // top-left quadrant; position and amplitude jittered per sample
    const std::int64_t ci = 3 + static_cast<std::int64_t>(unit(rng) * 4.999);
    const std::int64_t cj = 2 + static_cast<std::int64_t>(unit(rng) * 3.999);
    const double amp = (0.75 + 0.25 * unit(rng)) * defect_scale;
    if (amp > 0) {
      for (std::int64_t dj = 0; dj < 7; ++dj) {
        const float v = static_cast<float>(amp * (1.0 - 0.10 * dj));
        canvas[ci * size + (cj + dj)] += v;
        canvas[(ci + 1) * size + (cj + dj)] += v;
      }
      for (std::int64_t di = 2; di < 6; ++di) {
        const float v = static_cast<float>(amp * (1.0 - 0.08 * di));
        canvas[(ci + di) * size + cj] += v;
        canvas[(ci + di) * size + (cj + 1)] += v;
      }
    }
    for (auto& v : canvas) v = std::clamp(v, 0.0f, 1.0f);
    const int q = static_cast<int>(unit(rng) * 3.999);
    labels[s] = q;
    detail::rotate_plane(images.data() + s * size * size, canvas.data(), size, q);
  }

  LabeledImageSet set;
  set.images = Tensor<float>::from_data({n, 1, size, size}, std::move(images));
  set.labels = std::move(labels);
  set.provenance = "synthetic";
  return set;
}

// Seeded subset (without replacement) used for desk-scale training.
inline LabeledImageSet subset(const LabeledImageSet& set, std::int64_t count,
                              std::uint64_t seed) {
  const std::int64_t n = set.count();
  if (count <= 0 || count >= n) return set;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(count));
  const std::int64_t c = set.images.dim(1), h = set.images.dim(2), w = set.images.dim(3);
  const std::int64_t plane = c * h * w;
  std::vector<float> out(static_cast<std::size_t>(count * plane));
  std::vector<std::int64_t> labels(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const float* src = set.images.data().data() + idx[i] * plane;
    std::copy(src, src + plane, out.data() + i * plane);
    labels[i] = set.labels[idx[i]];
  }
  LabeledImageSet res;
  res.images = Tensor<float>::from_data({count, c, h, w}, std::move(out));
  res.labels = std::move(labels);
  res.provenance = set.provenance;
  return res;
}

// Batch gather (rows of the dataset by index).
inline Tensor<float> gather_images(const LabeledImageSet& set,
                                   const std::vector<std::int64_t>& idx) {
  const std::int64_t c = set.images.dim(1), h = set.images.dim(2), w = set.images.dim(3);
  const std::int64_t plane = c * h * w;
  std::vector<float> out(idx.size() * static_cast<std::size_t>(plane));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const float* src = set.images.data().data() + idx[i] * plane;
    std::copy(src, src + plane, out.data() + static_cast<std::int64_t>(i) * plane);
  }
  return Tensor<float>::from_data({static_cast<std::int64_t>(idx.size()), c, h, w},
                                  std::move(out));
}

}  // namespace r2

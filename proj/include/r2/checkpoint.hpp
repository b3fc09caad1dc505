#pragma once

// Checkpoint container, bit-exact layout:
//   magic "R2N1" | u32 version | u32 blob length + UTF-8 key=value spec blob
//   u32 tensor count | per tensor: u16 name length + name, u8 rank,
//   rank x u32 dims, raw little-endian f32 payload.
// The tensor-dump format used by build-filters is the same per-tensor
// record stream without the header/spec.

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "r2/model.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace r2 {

inline constexpr char kCheckpointMagic[4] = {'R', '2', 'N', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename V>
void write_pod(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& is, const char* what) {
  V v;
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is)
    throw IoError(std::string("checkpoint: truncated while reading ") + what + " (expected " +
                  std::to_string(sizeof(V)) + " bytes)");
  return v;
}

inline void write_tensor_record(std::ostream& os, const std::string& name, const Shape& shape,
                                const float* data) {
  check(name.size() <= 0xFFFF, "tensor record: name too long");
  write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  os.write(reinterpret_cast<const char*>(data),
           static_cast<std::streamsize>(numel(shape) * sizeof(float)));
}

inline std::pair<std::string, Tensor<float>> read_tensor_record(std::istream& is) {
  const auto nlen = read_pod<std::uint16_t>(is, "tensor name length");
  std::string name(nlen, '\0');
  is.read(name.data(), nlen);
  if (!is) throw IoError("checkpoint: truncated while reading tensor name");
  const auto rank = read_pod<std::uint8_t>(is, "tensor rank");
  Shape shape;
  for (int i = 0; i < rank; ++i)
    shape.push_back(static_cast<std::int64_t>(read_pod<std::uint32_t>(is, "tensor dim")));
  const std::int64_t n = numel(shape);
  std::vector<float> data(static_cast<std::size_t>(n));
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!is)
    throw IoError("checkpoint: truncated payload for tensor '" + name + "' (expected " +
                  std::to_string(n * sizeof(float)) + " bytes, got " +
                  std::to_string(is.gcount()) + ")");
  for (float v : data)
    if (!std::isfinite(v))
      throw ValueError("checkpoint: non-finite value in tensor '" + name + "'");
  return {name, Tensor<float>::from_data(std::move(shape), std::move(data))};
}

}  // namespace detail

struct CheckpointData {
  ModelConfig config;
  std::map<std::string, Tensor<float>> tensors;
  std::map<std::string, std::string> meta;
};

inline std::string encode_config_blob(const ModelConfig& cfg,
                                      const std::map<std::string, std::string>& meta) {
  std::ostringstream os;
  os << "name=" << cfg.name << "\n";
  os << "widths=";
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) os << (i ? "," : "") << cfg.widths[i];
  os << "\n";
  os << "in_channels=" << cfg.in_channels << "\n";
  os << "num_classes=" << cfg.num_classes << "\n";
  os << "image_size=" << cfg.image_size << "\n";
  os << "mode=" << mode_name(cfg.mode) << "\n";
  os << "sigma=" << cfg.sigma << "\n";
  os << "seed=" << cfg.seed << "\n";
  for (const auto& [k, v] : meta) os << k << "=" << v << "\n";
  return os.str();
}

inline CheckpointData decode_config_blob(const std::string& blob) {
  CheckpointData out;
  std::istringstream is(blob);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("checkpoint: malformed spec line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "name") {
      out.config.name = val;
    } else if (key == "widths") {
      out.config.widths.clear();
      std::istringstream ws(val);
      std::string tok;
      while (std::getline(ws, tok, ',')) out.config.widths.push_back(std::stoll(tok));
    } else if (key == "in_channels") {
      out.config.in_channels = std::stoll(val);
    } else if (key == "num_classes") {
      out.config.num_classes = std::stoll(val);
    } else if (key == "image_size") {
      out.config.image_size = std::stoll(val);
    } else if (key == "mode") {
      out.config.mode = mode_from_name(val);
    } else if (key == "sigma") {
      out.config.sigma = std::stod(val);
    } else if (key == "seed") {
      out.config.seed = std::stoull(val);
    } else {
      out.meta[key] = val;
    }
  }
  return out;
}

// Extra tensors (optimizer state etc.) ride along under their own names.
inline void save_checkpoint(const std::string& path, ToyClassifier<float>& model,
                            const std::map<std::string, std::string>& meta = {},
                            const std::vector<std::pair<std::string, Tensor<float>>>& extra = {}) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  os.write(kCheckpointMagic, 4);
  detail::write_pod<std::uint32_t>(os, kCheckpointVersion);
  const std::string blob = encode_config_blob(model.config(), meta);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(blob.size()));
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));

  std::vector<std::pair<std::string, std::pair<Shape, const float*>>> records;
  for (auto& p : model.named_params())
    records.push_back({p.name, {p.tensor->shape(), p.tensor->data().data()}});
  std::vector<std::vector<float>> scratch;  // keeps bn-state copies alive
  for (auto& [name, st] : model.bn_states()) {
    scratch.push_back(st->running_mean);
    records.push_back({name + ".running_mean",
                       {Shape{static_cast<std::int64_t>(scratch.back().size())},
                        scratch.back().data()}});
    scratch.push_back(st->running_var);
    records.push_back({name + ".running_var",
                       {Shape{static_cast<std::int64_t>(scratch.back().size())},
                        scratch.back().data()}});
    scratch.push_back({st->initialized ? 1.0f : 0.0f});
    records.push_back({name + ".ready", {Shape{1}, scratch.back().data()}});
  }
  for (const auto& [name, t] : extra) records.push_back({name, {t.shape(), t.data().data()}});

  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, rec] : records)
    detail::write_tensor_record(os, name, rec.first, rec.second);
  if (!os) throw IoError("checkpoint: write failed for '" + path + "'");
}

inline CheckpointData load_checkpoint_data(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw IoError("checkpoint: bad magic in '" + path + "' (expected R2N1)");
  const auto version = detail::read_pod<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: version mismatch (file " + std::to_string(version) +
                  ", supported " + std::to_string(kCheckpointVersion) + ")");
  const auto blob_len = detail::read_pod<std::uint32_t>(is, "spec blob length");
  std::string blob(blob_len, '\0');
  is.read(blob.data(), blob_len);
  if (!is) throw IoError("checkpoint: truncated spec blob");
  CheckpointData out = decode_config_blob(blob);
  const auto count = detail::read_pod<std::uint32_t>(is, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = detail::read_tensor_record(is);
    out.tensors.emplace(std::move(name), std::move(t));
  }
  return out;
}

// Rebuilds the model from the stored config and overwrites every parameter
// and normalization buffer by name. No partial loads: any missing tensor or
// shape mismatch throws before the model is returned.
inline ToyClassifier<float> model_from_checkpoint(const CheckpointData& data) {
  ToyClassifier<float> model(data.config);
  for (auto& p : model.named_params()) {
    auto it = data.tensors.find(p.name);
    if (it == data.tensors.end())
      throw IoError("checkpoint: missing parameter '" + p.name + "'");
    if (it->second.shape() != p.tensor->shape())
      throw IoError("checkpoint: shape mismatch for parameter '" + p.name + "': file has " +
                    shape_str(it->second.shape()) + ", model expects " +
                    shape_str(p.tensor->shape()));
    p.tensor->data() = it->second.data();
  }
  for (auto& [name, st] : model.bn_states()) {
    auto mean = data.tensors.find(name + ".running_mean");
    auto var = data.tensors.find(name + ".running_var");
    auto ready = data.tensors.find(name + ".ready");
    if (mean == data.tensors.end() || var == data.tensors.end() || ready == data.tensors.end())
      throw IoError("checkpoint: missing normalization state for '" + name + "'");
    st->running_mean = mean->second.data();
    st->running_var = var->second.data();
    st->initialized = ready->second.data()[0] != 0.0f;
  }
  return model;
}

inline ToyClassifier<float> load_checkpoint(const std::string& path) {
  return model_from_checkpoint(load_checkpoint_data(path));
}

// Headerless stream of tensor records (the build-filters dump format).
inline void dump_tensors(const std::string& path,
                         const std::vector<std::pair<std::string, Tensor<float>>>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("tensor dump: cannot open '" + path + "' for writing");
  for (const auto& [name, t] : tensors)
    detail::write_tensor_record(os, name, t.shape(), t.data().data());
  if (!os) throw IoError("tensor dump: write failed for '" + path + "'");
}

inline std::vector<std::pair<std::string, Tensor<float>>> read_tensor_dump(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("tensor dump: cannot open '" + path + "'");
  std::vector<std::pair<std::string, Tensor<float>>> out;
  while (is.peek() != EOF) out.push_back(detail::read_tensor_record(is));
  return out;
}

}  // namespace r2

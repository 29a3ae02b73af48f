#pragma once

// Binary checkpoint container.
//
//   "EW2CKPT"  u16 version=1  u32 metadata length  metadata (UTF-8 JSON)
//   u32 tensor count, then per tensor:
//     u16 name length, name, u8 dtype (0 = f32, 1 = f64), u8 rank,
//     rank × u64 dims, little-endian payload
//
// All integers are little-endian. Model parameters are stored as f32;
// optimizer moments as f64 under "optim.m.*" / "optim.v.*".

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sslse/model.hpp"
#include "sslse/optimizer.hpp"

namespace sslse {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[7] = {'E', 'W', '2', 'C', 'K', 'P', 'T'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  Shape shape;
  std::uint8_t dtype = 0;
  std::vector<float> f32;
  std::vector<double> f64;
};

struct CheckpointData {
  nlohmann::json meta;
  std::vector<StoredTensor> tensors;

  const StoredTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string what) : b_(bytes), what_(std::move(what)) {}
  template <class U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, b_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }
  [[noreturn]] void fail(const std::string& why) const {
    throw std::runtime_error(what_ + ": " + why + " at byte " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) fail("truncated checkpoint");
  }
  const std::string& b_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const CheckpointData& ck) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint16_t>(out, kCheckpointVersion);
  const std::string meta = ck.meta.dump();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    if (t.name.size() > 0xFFFF) throw std::invalid_argument("checkpoint: tensor name too long");
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    detail::put_le<std::uint8_t>(out, t.dtype);
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) detail::put_le<std::uint64_t>(out, d);
    if (t.dtype == 0) out.append(reinterpret_cast<const char*>(t.f32.data()), t.f32.size() * sizeof(float));
    else out.append(reinterpret_cast<const char*>(t.f64.data()), t.f64.size() * sizeof(double));
  }
  return out;
}

inline CheckpointData decode_checkpoint(const std::string& bytes, const std::string& what = "checkpoint") {
  detail::ByteReader r(bytes, what);
  if (bytes.size() < sizeof kCheckpointMagic || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw std::runtime_error(what + ": bad magic (not an EW2CKPT file)");
  r.take(sizeof kCheckpointMagic);
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  CheckpointData ck;
  const auto meta_len = r.get<std::uint32_t>();
  try {
    ck.meta = nlohmann::json::parse(r.take(meta_len));
  } catch (const nlohmann::json::parse_error& e) {
    r.fail(std::string("malformed metadata: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.take(r.get<std::uint16_t>());
    t.dtype = r.get<std::uint8_t>();
    if (t.dtype > 1) r.fail("unknown dtype " + std::to_string(t.dtype) + " for " + t.name);
    const auto rank = r.get<std::uint8_t>();
    for (std::uint8_t k = 0; k < rank; ++k) t.shape.push_back(r.get<std::uint64_t>());
    const std::size_t n = numel(t.shape);
    const std::size_t width = t.dtype == 0 ? sizeof(float) : sizeof(double);
    if (n > bytes.size() / width) r.fail("tensor " + t.name + " larger than the file");
    auto raw = r.take(n * width);
    if (t.dtype == 0) {
      t.f32.resize(n);
      std::memcpy(t.f32.data(), raw.data(), raw.size());
    } else {
      t.f64.resize(n);
      std::memcpy(t.f64.data(), raw.data(), raw.size());
    }
    ck.tensors.push_back(std::move(t));
  }
  if (!r.done()) r.fail("trailing bytes");
  return ck;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void save_checkpoint(const std::filesystem::path& path, const CheckpointData& ck) {
  write_file(path, encode_checkpoint(ck));
}

inline CheckpointData load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

/// Snapshot of a model, its run configuration and (optionally) Adam state.
inline CheckpointData make_checkpoint(const Model<float>& model, const RunConfig& config,
                                      const Adam<float>* optim = nullptr) {
  CheckpointData ck;
  ck.meta["branch"] = to_string(model.cfg.branch);
  ck.meta["step"] = model.quantizer.step;
  ck.meta["tau"] = model.quantizer.tau;
  ck.meta["config"] = config.values();
  ck.meta["optimizer_steps"] = optim ? optim->steps : 0;
  for (const auto& p : model.parameters())
    ck.tensors.push_back({p.name, p.tensor.shape(), 0, p.tensor.values(), {}});
  if (optim)
    for (const auto& p : model.parameters()) {
      auto it = optim->m.find(p.name);
      if (it == optim->m.end()) continue;
      ck.tensors.push_back({"optim.m." + p.name, p.tensor.shape(), 1, {}, it->second});
      ck.tensors.push_back({"optim.v." + p.name, p.tensor.shape(), 1, {}, optim->v.at(p.name)});
    }
  return ck;
}

inline RunConfig checkpoint_config(const CheckpointData& ck) {
  RunConfig rc;
  for (const auto& [k, v] : ck.meta.at("config").items()) rc.set(k, v.get<std::string>());
  return rc;
}

/// Rebuilds the model stored in `ck`. If `expected` is given and differs
/// from the stored branch, loading is refused.
inline Model<float> restore_model(const CheckpointData& ck, std::optional<BranchVariant> expected = std::nullopt) {
  const std::string stored = ck.meta.at("branch").get<std::string>();
  if (expected && to_string(*expected) != stored)
    throw std::runtime_error("checkpoint was trained with branch " + stored + " but " + to_string(*expected) +
                             " was requested; the branch must stay the same between pre-training and fine-tuning");
  auto rc = checkpoint_config(ck);
  rc.set("branch", stored);
  Model<float> model(ModelConfig::from(rc), 0);
  for (auto p : model.parameters()) {
    const auto* t = ck.find(p.name);
    if (!t) throw std::runtime_error("checkpoint is missing tensor " + p.name);
    if (t->shape != p.tensor.shape() || t->dtype != 0)
      throw std::runtime_error("checkpoint tensor " + p.name + " has shape " + shape_str(t->shape) + ", expected " +
                               shape_str(p.tensor.shape()));
    p.tensor.values() = t->f32;
  }
  model.quantizer.step = ck.meta.at("step").get<std::uint64_t>();
  model.quantizer.tau = ck.meta.at("tau").get<double>();
  return model;
}

inline void restore_optimizer(const CheckpointData& ck, Adam<float>& optim) {
  optim.steps = ck.meta.value("optimizer_steps", std::uint64_t{0});
  optim.m.clear();
  optim.v.clear();
  for (const auto& t : ck.tensors) {
    if (t.name.rfind("optim.m.", 0) == 0) optim.m[t.name.substr(8)] = t.f64;
    if (t.name.rfind("optim.v.", 0) == 0) optim.v[t.name.substr(8)] = t.f64;
  }
}

}  // namespace sslse

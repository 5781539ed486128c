#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "locnav/autodiff.hpp"
#include "locnav/tensor.hpp"

namespace locnav {

// Versioned container of named tensors plus run metadata. Values are stored
// as raw little-endian 64-bit floats regardless of the build's Real type, so
// checkpoints round-trip bit-exactly and transfer between float modes.
struct Checkpoint {
  std::string variant;  // architecture descriptor
  uint64_t seed = 0;
  uint64_t iteration = 0;
  uint64_t adam_t = 0;  // optimizer step count, for exact training resume
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'L', 'N', 'A', 'V', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError(path + ": truncated checkpoint");
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const std::string& path) {
  uint32_t len = read_pod<uint32_t>(in, path);
  if (len > (1u << 20)) throw ParseError(path + ": implausible string length in checkpoint");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw ParseError(path + ": truncated checkpoint");
  return s;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::write_pod<uint32_t>(out, detail::kCheckpointVersion);
  detail::write_string(out, ck.variant);
  detail::write_pod<uint64_t>(out, ck.seed);
  detail::write_pod<uint64_t>(out, ck.iteration);
  detail::write_pod<uint64_t>(out, ck.adam_t);
  detail::write_pod<uint32_t>(out, static_cast<uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    detail::write_string(out, name);
    detail::write_pod<uint8_t>(out, 0);  // dtype: f64
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) detail::write_pod<uint32_t>(out, static_cast<uint32_t>(d));
    for (Real v : t.data) detail::write_pod<double>(out, static_cast<double>(v));
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0)
    throw ParseError(path + ": not a checkpoint file");
  uint32_t version = detail::read_pod<uint32_t>(in, path);
  if (version != detail::kCheckpointVersion)
    throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  ck.variant = detail::read_string(in, path);
  ck.seed = detail::read_pod<uint64_t>(in, path);
  ck.iteration = detail::read_pod<uint64_t>(in, path);
  ck.adam_t = detail::read_pod<uint64_t>(in, path);
  uint32_t count = detail::read_pod<uint32_t>(in, path);
  ck.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = detail::read_string(in, path);
    uint8_t dtype = detail::read_pod<uint8_t>(in, path);
    if (dtype != 0) throw ParseError(path + ": unknown tensor dtype");
    uint32_t ndim = detail::read_pod<uint32_t>(in, path);
    if (ndim > 8) throw ParseError(path + ": implausible tensor rank");
    std::vector<int> shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d)
      shape[d] = static_cast<int>(detail::read_pod<uint32_t>(in, path));
    Tensor t(shape);
    for (Real& v : t.data) v = static_cast<Real>(detail::read_pod<double>(in, path));
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

// Snapshot of every parameter plus any allocated optimizer slots
// (".adam_m"/".adam_v" companions).
inline Checkpoint checkpoint_from_params(const std::string& variant, uint64_t seed,
                                         uint64_t iteration, ParamStore& store,
                                         uint64_t adam_t = 0) {
  Checkpoint ck;
  ck.variant = variant;
  ck.seed = seed;
  ck.iteration = iteration;
  ck.adam_t = adam_t;
  for (Param* p : store.all()) {
    ck.tensors.emplace_back(p->name, p->value);
    if (!p->adam_m.empty()) ck.tensors.emplace_back(p->name + ".adam_m", p->adam_m);
    if (!p->adam_v.empty()) ck.tensors.emplace_back(p->name + ".adam_v", p->adam_v);
  }
  return ck;
}

// Materializes checkpoint tensors into a store: plain entries become
// parameters, optimizer companions attach to their base parameter.
inline void apply_checkpoint(const Checkpoint& ck, ParamStore& store) {
  auto slot_suffix = [](const std::string& name) -> int {
    if (name.size() > 7 && name.compare(name.size() - 7, 7, ".adam_m") == 0) return 1;
    if (name.size() > 7 && name.compare(name.size() - 7, 7, ".adam_v") == 0) return 2;
    return 0;
  };
  for (const auto& [name, t] : ck.tensors) {
    if (slot_suffix(name)) continue;
    Param& p = store.create(name, t.shape);
    p.value = t;
  }
  for (const auto& [name, t] : ck.tensors) {
    int slot = slot_suffix(name);
    if (!slot) continue;
    Param& p = store.require(name.substr(0, name.size() - 7));
    if (t.shape != p.value.shape)
      throw ParseError("checkpoint: optimizer slot '" + name + "' shape mismatch");
    (slot == 1 ? p.adam_m : p.adam_v) = t;
  }
}

}  // namespace locnav

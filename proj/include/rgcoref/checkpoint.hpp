#pragma once

// Checkpoint layout, all integers little-endian:
//
//   "RGCP"  u32 version (=1)  u64 step
//   u32 metadata count, then per entry: u32 len, key bytes, u32 len, value bytes
//   u32 parameter count, then the name table, per parameter:
//       u32 len, name bytes, u8 trainable, u32 rank, u32 dims[rank]
//   payload in name-table order, per parameter: value, adam m, adam v,
//       each as float32 little-endian row-major

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgcoref/param_store.hpp"

namespace rgcoref {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[4] = {'R', 'G', 'C', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const char*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    static_assert(std::is_integral_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i)
      bytes_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
  void f32(float f) { le(std::bit_cast<std::uint32_t>(f)); }
  void str(const std::string& s) {
    le(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  void raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  template <typename U>
  U le() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  std::string str() {
    const auto n = le<std::uint32_t>();
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw CheckpointError(source_ + ": truncated at byte " + std::to_string(bytes_.size()) +
                            " (needed " + std::to_string(n) + " bytes at offset " +
                            std::to_string(pos_) + ")");
  }
  const std::vector<char>& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

template <typename T>
std::vector<char> serialize_checkpoint(const ParamStore<T>& store) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.le(kCheckpointVersion);
  w.le(static_cast<std::uint64_t>(store.step()));
  w.le(static_cast<std::uint32_t>(store.metadata().size()));
  for (const auto& [k, v] : store.metadata()) {
    w.str(k);
    w.str(v);
  }
  w.le(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, p] : store) {
    w.str(name);
    w.le(static_cast<std::uint8_t>(p.trainable ? 1 : 0));
    w.le(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.le(static_cast<std::uint32_t>(d));
  }
  for (const auto& [_, p] : store)
    for (const auto* t : {&p.value, &p.m, &p.v})
      for (T x : t->values()) w.f32(static_cast<float>(x));
  return w.bytes();
}

template <typename T>
ParamStore<T> deserialize_checkpoint(const std::vector<char>& bytes, const std::string& source) {
  detail::ByteReader r(bytes, source);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw CheckpointError(source + ": bad magic, expected \"RGCP\"");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(source + ": unsupported checkpoint version " + std::to_string(version));

  ParamStore<T> store;
  store.set_step(r.le<std::uint64_t>());
  const auto n_meta = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto key = r.str();
    store.metadata()[key] = r.str();
  }
  const auto n_params = r.le<std::uint32_t>();
  std::vector<std::string> order;
  for (std::uint32_t i = 0; i < n_params; ++i) {
    auto name = r.str();
    const bool trainable = r.le<std::uint8_t>() != 0;
    const auto rank = r.le<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.le<std::uint32_t>();
    store.add(name, shape, trainable);
    order.push_back(std::move(name));
  }
  for (const auto& name : order) {
    auto& p = store.at(name);
    for (auto* t : {&p.value, &p.m, &p.v})
      for (auto& x : t->values()) x = static_cast<T>(r.f32());
  }
  if (!r.at_end())
    throw CheckpointError(source + ": " + std::to_string(bytes.size() - r.pos()) +
                          " trailing bytes after payload");
  return store;
}

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(store);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("short write to " + path.string());
}

template <typename T>
ParamStore<T> load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint<T>(detail::read_file_bytes(path), path.string());
}

}  // namespace rgcoref

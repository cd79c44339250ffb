#pragma once

// Weight file layout (all integers little-endian):
//   "HCRW" | version u32 | count u32 |
//   count × { name_len u16 | name bytes (UTF-8) | rank u8 | dims u32[rank] |
//             payload f64[prod(dims)] }

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "hcr/numerics/errors.hpp"
#include "hcr/numerics/param.hpp"

namespace hcr {

inline constexpr char kWeightMagic[4] = {'H', 'C', 'R', 'W'};
inline constexpr std::uint32_t kWeightVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

namespace detail {

template <typename T>
void put_le(std::vector<char>& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

class ByteReader {
 public:
  ByteReader(const std::vector<char>& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    char bytes[sizeof(T)];
    std::memcpy(bytes, buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw IoError(what_ + ": truncated file");
  }
  const std::vector<char>& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<char>& bytes) {
  // Write-then-rename so an interrupted run never leaves a torn file.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("rename failed: " + path);
}

}  // namespace detail

inline std::vector<char> encode_weights(const std::vector<NamedTensor>& tensors) {
  std::vector<char> out(kWeightMagic, kWeightMagic + 4);
  detail::put_le<std::uint32_t>(out, kWeightVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF) throw IoError("parameter name too long: " + t.name);
    if (t.shape.size() > 0xFF) throw IoError("rank too large for " + t.name);
    if (shape_numel(t.shape) != t.values.size()) throw DimensionError("payload/shape mismatch for " + t.name);
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (std::size_t d : t.shape) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.values) detail::put_le<double>(out, v);
  }
  return out;
}

inline std::vector<NamedTensor> decode_weights(const std::vector<char>& bytes,
                                               const std::string& what = "weights") {
  detail::ByteReader r(bytes, what);
  if (r.bytes(4) != std::string(kWeightMagic, 4)) throw IoError(what + ": bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kWeightVersion) throw IoError(what + ": unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.bytes(r.get<std::uint16_t>());
    const auto rank = r.get<std::uint8_t>();
    for (std::uint8_t k = 0; k < rank; ++k) t.shape.push_back(r.get<std::uint32_t>());
    t.values.resize(shape_numel(t.shape));
    for (double& v : t.values) v = r.get<double>();
    out.push_back(std::move(t));
  }
  if (!r.at_end()) throw IoError(what + ": trailing bytes");
  return out;
}

inline std::vector<NamedTensor> snapshot(const ParamStore& store) {
  std::vector<NamedTensor> out;
  for (const auto& p : store.params()) out.push_back({p.name, p.tensor.shape(), p.tensor.values()});
  return out;
}

inline void save_weights(const std::string& path, const std::vector<NamedTensor>& tensors) {
  detail::write_file(path, encode_weights(tensors));
}

inline std::vector<NamedTensor> load_weights(const std::string& path) {
  return decode_weights(detail::read_file(path), path);
}

/// Copies values into `store`. Every store parameter must be present with the
/// same shape; extra entries in `tensors` are ignored unless `strict`.
/// Mismatches are reported together, by name.
inline void restore(ParamStore& store, const std::vector<NamedTensor>& tensors, bool strict = false) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  std::string diff;
  for (auto& p : store.params()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      diff += "\n  missing: " + p.name;
    } else if (it->second->shape != p.tensor.shape()) {
      diff += "\n  shape: " + p.name + " model " + shape_str(p.tensor.shape()) + " vs file " +
              shape_str(it->second->shape);
    }
  }
  if (strict) {
    for (const auto& t : tensors)
      if (!store.contains(t.name)) diff += "\n  unexpected: " + t.name;
  }
  if (!diff.empty()) throw ConfigError("checkpoint does not match model:" + diff);
  for (auto& p : store.params()) {
    const auto& src = by_name.at(p.name)->values;
    std::copy(src.begin(), src.end(), p.tensor.mutable_data().begin());
  }
}

}  // namespace hcr

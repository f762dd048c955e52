// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "dhnet/errors.hpp"
#include "dhnet/tensor.hpp"

namespace dhnet {

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian raw bytes");

inline constexpr char kContainerMagic[8] = {'D', 'H', 'N', 'E', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kContainerVersion = 1;

inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr std::uint8_t kDtypeF64 = 1;

/// One named tensor inside a container file.
struct ContainerRecord {
  std::string name;
  std::uint8_t dtype = kDtypeF64;
  std::vector<std::int64_t> dims;
  std::vector<unsigned char> raw;  // numel * dtype_size bytes, little-endian

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (std::int64_t d : dims) n *= d;
    return n;
  }
};

/// Parsed container: 8-byte magic, u32 format version, length-prefixed
/// config text, then named records until end of file.
struct Container {
  std::uint32_t version = kContainerVersion;
  std::string config_text;
  std::vector<ContainerRecord> records;

  const ContainerRecord* find(const std::string& name) const {
    for (const ContainerRecord& r : records)
      if (r.name == name) return &r;
    return nullptr;
  }
};

Container read_container(const std::string& path);

/// Writes atomically (temporary file + rename).  `version` is overridable
/// only so tests can fabricate futures; production callers use the default.
void write_container(const std::string& path, const std::string& config_text,
                     const std::vector<ContainerRecord>& records,
                     std::uint32_t version = kContainerVersion);

template <typename T>
constexpr std::uint8_t dtype_tag() {
  return sizeof(T) == 4 ? kDtypeF32 : kDtypeF64;
}

inline std::size_t dtype_size(std::uint8_t tag) {
  if (tag == kDtypeF32) return 4;
  if (tag == kDtypeF64) return 8;
  throw CheckpointError("unknown dtype tag " + std::to_string(tag));
}

template <typename T>
ContainerRecord tensor_record(const std::string& name, const Tensor<T>& t) {
  ContainerRecord r;
  r.name = name;
  r.dtype = dtype_tag<T>();
  r.dims = {t.shape.n, t.shape.c, t.shape.h, t.shape.w};
  r.raw.resize(t.data.size() * sizeof(T));
  std::memcpy(r.raw.data(), t.data.data(), r.raw.size());
  return r;
}

/// Decodes a record into a tensor of the requested precision, converting
/// between f32 and f64 payloads when necessary.
template <typename T>
Tensor<T> record_tensor(const ContainerRecord& r) {
  if (r.dims.size() != 4) {
    throw ShapeMismatchError("record '" + r.name + "' has rank " +
                             std::to_string(r.dims.size()) + ", expected 4");
  }
  Tensor<T> t(Shape{r.dims[0], r.dims[1], r.dims[2], r.dims[3]});
  const std::size_t n = t.data.size();
  if (r.raw.size() != n * dtype_size(r.dtype)) {
    throw TruncatedFileError("record '" + r.name + "' payload is " +
                             std::to_string(r.raw.size()) + " bytes, expected " +
                             std::to_string(n * dtype_size(r.dtype)));
  }
  if (r.dtype == dtype_tag<T>()) {
    std::memcpy(t.data.data(), r.raw.data(), r.raw.size());
  } else if (r.dtype == kDtypeF32) {
    const float* src = reinterpret_cast<const float*>(r.raw.data());
    for (std::size_t i = 0; i < n; ++i) t.data[i] = static_cast<T>(src[i]);
  } else {
    const double* src = reinterpret_cast<const double*>(r.raw.data());
    for (std::size_t i = 0; i < n; ++i) t.data[i] = static_cast<T>(src[i]);
  }
  return t;
}

}  // namespace dhnet

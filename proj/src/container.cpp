// SPDX-License-Identifier: Apache-2.0
#include "dhnet/container.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

namespace dhnet {

namespace {

void read_exact(std::ifstream& is, void* dst, std::size_t n, const char* what) {
  is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw TruncatedFileError(std::string("container truncated while reading ") + what);
  }
}

std::uint32_t read_u32(std::ifstream& is, const char* what) {
  std::uint32_t v = 0;
  read_exact(is, &v, sizeof(v), what);
  return v;
}

std::uint64_t read_u64(std::ifstream& is, const char* what) {
  std::uint64_t v = 0;
  read_exact(is, &v, sizeof(v), what);
  return v;
}

void write_bytes(std::ofstream& os, const void* src, std::size_t n) {
  os.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(n));
}

void write_u32(std::ofstream& os, std::uint32_t v) { write_bytes(os, &v, sizeof(v)); }
void write_u64(std::ofstream& os, std::uint64_t v) { write_bytes(os, &v, sizeof(v)); }

constexpr std::uint64_t kMaxSane = 1ull << 34;  // 16 GiB guard on declared sizes

}  // namespace

Container read_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);

  char magic[8];
  read_exact(is, magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kContainerMagic, sizeof(magic)) != 0) {
    throw BadMagicError("not a checkpoint container: bad magic in " + path);
  }
  Container c;
  c.version = read_u32(is, "version");
  if (c.version != kContainerVersion) {
    throw VersionMismatchError("container version " + std::to_string(c.version) +
                               ", this build reads version " +
                               std::to_string(kContainerVersion));
  }
  const std::uint64_t cfg_len = read_u64(is, "config length");
  if (cfg_len > kMaxSane) throw TruncatedFileError("implausible config length");
  c.config_text.resize(cfg_len);
  if (cfg_len > 0) read_exact(is, c.config_text.data(), cfg_len, "config text");

  // Records until EOF; any partial record is a truncation.
  while (true) {
    std::uint32_t name_len = 0;
    is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (is.gcount() == 0 && is.eof()) break;  // clean end between records
    if (static_cast<std::size_t>(is.gcount()) != sizeof(name_len)) {
      throw TruncatedFileError("container truncated while reading record name length");
    }
    ContainerRecord r;
    if (name_len > kMaxSane) throw TruncatedFileError("implausible record name length");
    r.name.resize(name_len);
    if (name_len > 0) read_exact(is, r.name.data(), name_len, "record name");
    read_exact(is, &r.dtype, 1, "record dtype");
    std::uint8_t rank = 0;
    read_exact(is, &rank, 1, "record rank");
    std::uint64_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = read_u32(is, "record dim");
      r.dims.push_back(static_cast<std::int64_t>(dim));
      numel *= dim;
    }
    const std::uint64_t bytes = numel * dtype_size(r.dtype);
    if (bytes > kMaxSane) throw TruncatedFileError("implausible record payload size");
    r.raw.resize(bytes);
    if (bytes > 0) read_exact(is, r.raw.data(), bytes, "record payload");
    c.records.push_back(std::move(r));
  }
  return c;
}

void write_container(const std::string& path, const std::string& config_text,
                     const std::vector<ContainerRecord>& records,
                     std::uint32_t version) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot create " + tmp);
    write_bytes(os, kContainerMagic, sizeof(kContainerMagic));
    write_u32(os, version);
    write_u64(os, config_text.size());
    write_bytes(os, config_text.data(), config_text.size());
    for (const ContainerRecord& r : records) {
      if (r.name.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw ConfigError("record name too long");
      }
      if (r.dims.size() > 255) throw ConfigError("record rank too large");
      write_u32(os, static_cast<std::uint32_t>(r.name.size()));
      write_bytes(os, r.name.data(), r.name.size());
      write_bytes(os, &r.dtype, 1);
      const std::uint8_t rank = static_cast<std::uint8_t>(r.dims.size());
      write_bytes(os, &rank, 1);
      std::uint64_t numel = 1;
      for (std::int64_t d : r.dims) {
        if (d < 0 || d > std::numeric_limits<std::uint32_t>::max()) {
          throw ConfigError("record dimension out of range");
        }
        write_u32(os, static_cast<std::uint32_t>(d));
        numel *= static_cast<std::uint64_t>(d);
      }
      if (r.raw.size() != numel * dtype_size(r.dtype)) {
        throw ConfigError("record '" + r.name + "' payload size inconsistent with dims");
      }
      write_bytes(os, r.raw.data(), r.raw.size());
    }
    os.flush();
    if (!os) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace dhnet

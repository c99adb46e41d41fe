#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vidcorr/tensor.hpp"

namespace vidcorr {

// Binary container for named dense arrays. Layout, all little-endian:
//   magic "VCTA" | u32 version | u64 entry count
// then per entry:
//   u32 name length | name bytes (UTF-8) | u32 rank | u64 extents[rank]
//   | u8 dtype tag | raw payload
// dtype tags: 0 = f64, 1 = f32, 2 = i32, 3 = u8.
enum class DType : std::uint8_t { F64 = 0, F32 = 1, I32 = 2, U8 = 3 };

struct ArchiveEntry {
  std::string name;
  Shape shape;
  DType dtype = DType::F64;
  std::vector<double> f64;       // F64/F32 payloads (F32 widened on read)
  std::vector<std::int32_t> i32;
  std::vector<std::uint8_t> u8;
};

class ArchiveWriter {
 public:
  void add(const std::string& name, const Tensor& t, DType storage = DType::F64);
  void add_ints(const std::string& name, Shape shape, const std::vector<std::int32_t>& values);
  void add_bytes(const std::string& name, const std::string& bytes);
  void write(const std::string& path) const;

 private:
  std::vector<ArchiveEntry> entries_;
};

class ArchiveReader {
 public:
  explicit ArchiveReader(const std::string& path);

  bool has(const std::string& name) const;
  std::vector<std::string> names() const;

  const ArchiveEntry& entry(const std::string& name) const;
  Tensor tensor(const std::string& name) const;  // F64/F32 entries
  std::vector<std::int32_t> ints(const std::string& name) const;
  std::string bytes(const std::string& name) const;

 private:
  std::map<std::string, ArchiveEntry> entries_;
};

}  // namespace vidcorr

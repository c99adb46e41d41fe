#include "vidcorr/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "vidcorr/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "archive i/o assumes a little-endian host");

namespace vidcorr {

namespace {

constexpr char kMagic[4] = {'V', 'C', 'T', 'A'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw IoError("archive: truncated file");
  T value;
  std::memcpy(&value, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

std::size_t payload_elems(const ArchiveEntry& e) {
  return static_cast<std::size_t>(shape_numel(e.shape));
}

}  // namespace

void ArchiveWriter::add(const std::string& name, const Tensor& t, DType storage) {
  if (storage != DType::F64 && storage != DType::F32) {
    throw IoError("archive: tensors store as f64 or f32");
  }
  ArchiveEntry e;
  e.name = name;
  e.shape = t.shape();
  e.dtype = storage;
  e.f64.assign(t.data().begin(), t.data().end());
  entries_.push_back(std::move(e));
}

void ArchiveWriter::add_ints(const std::string& name, Shape shape,
                             const std::vector<std::int32_t>& values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw IoError("archive: int payload does not match shape " + shape_str(shape));
  }
  ArchiveEntry e;
  e.name = name;
  e.shape = std::move(shape);
  e.dtype = DType::I32;
  e.i32 = values;
  entries_.push_back(std::move(e));
}

void ArchiveWriter::add_bytes(const std::string& name, const std::string& bytes) {
  ArchiveEntry e;
  e.name = name;
  e.shape = {static_cast<std::int64_t>(bytes.size())};
  e.dtype = DType::U8;
  e.u8.assign(bytes.begin(), bytes.end());
  entries_.push_back(std::move(e));
}

void ArchiveWriter::write(const std::string& path) const {
  std::string buf;
  buf.append(kMagic, 4);
  put<std::uint32_t>(buf, kVersion);
  put<std::uint64_t>(buf, entries_.size());
  for (const ArchiveEntry& e : entries_) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(e.name.size()));
    buf.append(e.name);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint64_t>(buf, static_cast<std::uint64_t>(d));
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(e.dtype));
    switch (e.dtype) {
      case DType::F64:
        for (double v : e.f64) put<double>(buf, v);
        break;
      case DType::F32:
        for (double v : e.f64) put<float>(buf, static_cast<float>(v));
        break;
      case DType::I32:
        for (std::int32_t v : e.i32) put<std::int32_t>(buf, v);
        break;
      case DType::U8:
        buf.append(reinterpret_cast<const char*>(e.u8.data()), e.u8.size());
        break;
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("archive: cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("archive: write failed: " + path);
}

ArchiveReader::ArchiveReader(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("archive: cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw IoError("archive: bad magic in " + path);
  }
  pos = 4;
  const auto version = take<std::uint32_t>(buf, pos);
  if (version != kVersion) {
    throw IoError("archive: unsupported format version " + std::to_string(version));
  }
  const auto count = take<std::uint64_t>(buf, pos);
  for (std::uint64_t i = 0; i < count; ++i) {
    ArchiveEntry e;
    const auto name_len = take<std::uint32_t>(buf, pos);
    if (pos + name_len > buf.size()) throw IoError("archive: truncated name");
    e.name.assign(buf.data() + pos, name_len);
    pos += name_len;
    const auto rank = take<std::uint32_t>(buf, pos);
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.shape.push_back(static_cast<std::int64_t>(take<std::uint64_t>(buf, pos)));
    }
    e.dtype = static_cast<DType>(take<std::uint8_t>(buf, pos));
    const std::size_t n = payload_elems(e);
    switch (e.dtype) {
      case DType::F64:
        e.f64.resize(n);
        for (std::size_t j = 0; j < n; ++j) e.f64[j] = take<double>(buf, pos);
        break;
      case DType::F32:
        e.f64.resize(n);
        for (std::size_t j = 0; j < n; ++j) e.f64[j] = static_cast<double>(take<float>(buf, pos));
        break;
      case DType::I32:
        e.i32.resize(n);
        for (std::size_t j = 0; j < n; ++j) e.i32[j] = take<std::int32_t>(buf, pos);
        break;
      case DType::U8:
        e.u8.resize(n);
        for (std::size_t j = 0; j < n; ++j) e.u8[j] = take<std::uint8_t>(buf, pos);
        break;
      default:
        throw IoError("archive: unknown dtype tag");
    }
    const std::string key = e.name;
    entries_.emplace(key, std::move(e));
  }
}

bool ArchiveReader::has(const std::string& name) const { return entries_.count(name) > 0; }

std::vector<std::string> ArchiveReader::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

const ArchiveEntry& ArchiveReader::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw IoError("archive: missing entry: " + name);
  return it->second;
}

Tensor ArchiveReader::tensor(const std::string& name) const {
  const ArchiveEntry& e = entry(name);
  if (e.dtype != DType::F64 && e.dtype != DType::F32) {
    throw IoError("archive: entry is not a float tensor: " + name);
  }
  return Tensor::from_data(e.shape, e.f64);
}

std::vector<std::int32_t> ArchiveReader::ints(const std::string& name) const {
  const ArchiveEntry& e = entry(name);
  if (e.dtype != DType::I32) throw IoError("archive: entry is not i32: " + name);
  return e.i32;
}

std::string ArchiveReader::bytes(const std::string& name) const {
  const ArchiveEntry& e = entry(name);
  if (e.dtype != DType::U8) throw IoError("archive: entry is not bytes: " + name);
  return std::string(e.u8.begin(), e.u8.end());
}

}  // namespace vidcorr

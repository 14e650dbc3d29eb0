#include "mimic/binary_io.hpp"
#include "mimic/common.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mimic {

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::f64s(std::span<const double> values) {
  for (const double v : values) f64(v);
}

void BinaryWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.append(s);
}

std::string_view BinaryReader::take(std::size_t n) {
  if (data_.size() - pos_ < n) {
    throw IoError("truncated binary data at byte " + std::to_string(pos_));
  }
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t BinaryReader::u8() { return static_cast<std::uint8_t>(take(1)[0]); }

std::uint32_t BinaryReader::u32() {
  const auto b = take(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(b[i])} << (8 * i);
  return v;
}

std::uint64_t BinaryReader::u64() {
  const auto b = take(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(b[i])} << (8 * i);
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::vector<double> BinaryReader::f64s(std::size_t count) {
  if ((data_.size() - pos_) / 8 < count) {
    throw IoError("truncated array of " + std::to_string(count) + " doubles");
  }
  std::vector<double> out(count);
  for (auto& v : out) v = f64();
  return out;
}

std::string BinaryReader::str() {
  const auto n = u32();
  return std::string(take(n));
}

void BinaryReader::expect(std::string_view tag, std::string_view what) {
  if (take(tag.size()) != tag) {
    throw IoError("not a " + std::string(what) + " (bad magic tag)");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace mimic

#pragma once

/** \file binary_io.hpp
 *  \brief Little-endian byte encoding used by index and checkpoint files.
 *
 * Doubles are written as their IEEE-754 bit pattern, so a write/read round
 * trip is bit-exact.
 */

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mimic {

class BinaryWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> values);
  void str(std::string_view s);
  void raw(std::string_view bytes) { buf_.append(bytes); }

  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

/// Reads what BinaryWriter wrote; throws IoError on truncation.
class BinaryReader {
 public:
  explicit BinaryReader(std::string_view bytes) : data_(bytes) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::vector<double> f64s(std::size_t count);
  std::string str();
  /// Consumes exactly `tag.size()` bytes and throws unless they equal `tag`.
  void expect(std::string_view tag, std::string_view what);

  bool at_end() const { return pos_ == data_.size(); }
  std::size_t position() const { return pos_; }

 private:
  std::string_view take(std::size_t n);

  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace mimic

#pragma once

// Little-endian binary encoding helpers shared by every on-disk format.
//
// Every file is laid out as: 4-byte magic, u16 version, format-specific
// header and body, then an 8-byte little-endian FNV-1a 64 checksum over all
// preceding bytes. Readers verify the checksum before parsing anything.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spvp::io {

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

class ByteWriter {
 public:
  explicit ByteWriter(std::string_view magic, std::uint16_t version);

  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f32s(std::span<const float> v);
  void bytes(std::string_view s);

  // Appends the checksum and returns the finished buffer.
  std::vector<std::uint8_t> finish() &&;

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader over a verified buffer. Any overrun throws DataError.
class ByteReader {
 public:
  // Verifies size, checksum, magic; on success positioned after the version.
  ByteReader(std::vector<std::uint8_t> buffer, std::string_view magic, std::string_view what);

  std::uint16_t version() const { return version_; }

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  void f32s(std::span<float> out);
  std::string bytes(std::size_t n);

  std::size_t remaining() const { return end_ - pos_; }
  // Throws unless the body has been consumed exactly.
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;  // start of checksum
  std::uint16_t version_ = 0;
  std::string what_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file then renames over the target, so a
/// failed write never leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace spvp::io

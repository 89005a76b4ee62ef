#include "spvp/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "spvp/core.hpp"

namespace spvp::io {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {

constexpr std::size_t kChecksumBytes = 8;

template <typename T>
void append_le(std::vector<std::uint8_t>& buf, T v) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.insert(buf.end(), raw, raw + sizeof(T));
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ByteWriter::ByteWriter(std::string_view magic, std::uint16_t version) {
  buf_.insert(buf_.end(), magic.begin(), magic.end());
  u16(version);
}

void ByteWriter::u8(std::uint8_t v) { buf_.push_back(v); }
void ByteWriter::u16(std::uint16_t v) { append_le(buf_, v); }
void ByteWriter::u32(std::uint32_t v) { append_le(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { append_le(buf_, v); }
void ByteWriter::f32(float v) { append_le(buf_, v); }

void ByteWriter::f32s(std::span<const float> v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
  buf_.insert(buf_.end(), p, p + v.size_bytes());
}

void ByteWriter::bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

std::vector<std::uint8_t> ByteWriter::finish() && {
  append_le(buf_, fnv1a64(buf_));
  return std::move(buf_);
}

ByteReader::ByteReader(std::vector<std::uint8_t> buffer, std::string_view magic,
                       std::string_view what)
    : buf_(std::move(buffer)), what_(what) {
  const std::size_t min_size = magic.size() + 2 + kChecksumBytes;
  if (buf_.size() < min_size) {
    throw DataError(what_ + ": file truncated (" + std::to_string(buf_.size()) + " bytes)");
  }
  end_ = buf_.size() - kChecksumBytes;
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf_.data() + end_, kChecksumBytes);
  if (stored != fnv1a64({buf_.data(), end_})) {
    throw DataError(what_ + ": checksum mismatch (file corrupted or truncated)");
  }
  if (std::memcmp(buf_.data(), magic.data(), magic.size()) != 0) {
    throw DataError(what_ + ": bad magic, expected '" + std::string(magic) + "'");
  }
  pos_ = magic.size();
  version_ = u16();
}

void ByteReader::need(std::size_t n) const {
  if (n > end_ - pos_) throw DataError(what_ + ": unexpected end of data");
}

template <typename T>
static T take(const std::vector<std::uint8_t>& buf, std::size_t& pos) {
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::uint8_t ByteReader::u8() { need(1); return take<std::uint8_t>(buf_, pos_); }
std::uint16_t ByteReader::u16() { need(2); return take<std::uint16_t>(buf_, pos_); }
std::uint32_t ByteReader::u32() { need(4); return take<std::uint32_t>(buf_, pos_); }
std::uint64_t ByteReader::u64() { need(8); return take<std::uint64_t>(buf_, pos_); }
float ByteReader::f32() { need(4); return take<float>(buf_, pos_); }

void ByteReader::f32s(std::span<float> out) {
  need(out.size_bytes());
  std::memcpy(out.data(), buf_.data() + pos_, out.size_bytes());
  pos_ += out.size_bytes();
}

std::string ByteReader::bytes(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
  pos_ += n;
  return s;
}

void ByteReader::expect_end() const {
  if (pos_ != end_) {
    throw DataError(what_ + ": " + std::to_string(end_ - pos_) + " trailing bytes after body");
  }
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError("read error on '" + path.string() + "'");
  return buf;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw DataError("write failed for '" + path.string() + "'");
    }
  }
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, std::string_view text) {
  write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace spvp::io

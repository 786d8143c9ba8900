#pragma once
// Shared file plumbing: little-endian binary records, FNV-1a checksums, and
// atomic (write-temp-then-rename) output.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "kern/error.hpp"

namespace kern::io {

class Writer {
public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void f64s(const std::vector<double>& vs) {
    for (double v : vs) f64(v);
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  const std::vector<std::uint8_t>& bytes() const { return buf_; }

private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
public:
  Reader(const std::uint8_t* p, std::size_t n, std::string name)
      : p_(p), n_(n), name_(std::move(name)) {}

  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    if (n > remaining()) truncated();
    std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
    pos_ += n;
    return s;
  }
  void f64s(std::vector<double>& out, std::size_t count) {
    out.resize(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = f64();
  }
  void raw(void* dst, std::size_t n) {
    if (n > remaining()) truncated();
    std::memcpy(dst, p_ + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return n_ - pos_; }
  std::size_t pos() const { return pos_; }

  [[noreturn]] void truncated() const {
    throw parse_error(name_ + ": truncated file");
  }

private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
  std::string name_;
};

inline std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open " + path);
  in.seekg(0, std::ios::end);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw parse_error("cannot read " + path);
  return buf;
}

inline void write_file_atomic(const std::string& path, const void* data, std::size_t n) {
  namespace fs = std::filesystem;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw parse_error("cannot open " + tmp + " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw parse_error("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

inline void write_file_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

// Emits payload followed by its FNV-1a checksum, atomically.
inline void write_checksummed(const std::string& path, const Writer& payload) {
  Writer full;
  full.raw(payload.bytes().data(), payload.bytes().size());
  full.u64(fnv1a(payload.bytes().data(), payload.bytes().size()));
  write_file_atomic(path, full.bytes().data(), full.bytes().size());
}

// Verifies the trailing checksum and returns a reader over the payload.
inline Reader open_checksummed(const std::vector<std::uint8_t>& buf, const std::string& name) {
  if (buf.size() < 8) throw parse_error(name + ": truncated file");
  const std::size_t payload = buf.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + payload, 8);
  if (stored != fnv1a(buf.data(), payload))
    throw parse_error(name + ": checksum mismatch");
  return Reader(buf.data(), payload, name);
}

}  // namespace kern::io

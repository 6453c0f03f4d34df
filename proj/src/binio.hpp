#pragma once

// Little-endian binary helpers for model and corpus files.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>

#include "curate/error.hpp"

namespace curate::detail {

class BinWriter {
 public:
  explicit BinWriter(std::ostream& out) : out_(out) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }

  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void put_magic(std::string_view magic, std::uint32_t version) {
    out_.write(magic.data(), static_cast<std::streamsize>(magic.size()));
    put(version);
  }

 private:
  std::ostream& out_;
};

class BinReader {
 public:
  BinReader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) fail("truncated");
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) fail("truncated string");
    return s;
  }

  void expect_magic(std::string_view magic, std::uint32_t version) {
    std::string got(magic.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(magic.size()));
    if (!in_ || got != magic) fail("bad magic");
    const auto v = get<std::uint32_t>();
    if (v != version) fail("unsupported version " + std::to_string(v));
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorKind::bad_model_file, what_ + ": " + why);
  }

 private:
  std::istream& in_;
  std::string what_;
};

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io_error, "cannot open " + path + " for writing");
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io_error, "cannot open " + path);
  return in;
}

}  // namespace curate::detail

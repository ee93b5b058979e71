#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "casekit/error.hpp"

namespace casekit {

/// Output file that is written under a temporary name and renamed into
/// place by commit(). If the object is destroyed without commit(), the
/// temporary is removed and the destination is left untouched.
class AtomicFile {
 public:
  explicit AtomicFile(std::filesystem::path target, bool binary = false);
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;
  ~AtomicFile();

  std::ostream& stream() { return out_; }
  void commit();

  const std::filesystem::path& target() const { return target_; }

 private:
  std::filesystem::path target_;
  std::filesystem::path temp_;
  std::ofstream out_;
  bool committed_ = false;
};

void write_file_atomically(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double value);

/// Little-endian fixed-width binary encoder used by the index and checkpoint formats.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  template <typename T>
    requires std::is_integral_v<T>
  void put(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xff);
    out_.write(bytes, sizeof(T));
  }
  void put_double(double value);
  void put_string(std::string_view s);
  void put_doubles(const std::vector<double>& values);
  void put_raw(std::string_view bytes) { out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  template <typename T>
    requires std::is_integral_v<T>
  T get() {
    char bytes[sizeof(T)];
    read(bytes, sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    return static_cast<T>(u);
  }
  double get_double();
  std::string get_string();
  std::vector<double> get_doubles();
  std::string get_raw(std::size_t n);

 private:
  void read(char* dst, std::size_t n);
  std::istream& in_;
};

}  // namespace casekit

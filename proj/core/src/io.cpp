#include "casekit/io.hpp"

#include <bit>
#include <charconv>
#include <sstream>
#include <system_error>

namespace casekit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::UnknownDoc: return "UnknownDoc";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::EmptyVocabulary: return "EmptyVocabulary";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::OutOfVocab: return "OutOfVocab";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::AllMasked: return "AllMasked";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

AtomicFile::AtomicFile(std::filesystem::path target, bool binary) : target_(std::move(target)) {
  temp_ = target_;
  temp_ += ".partial";
  if (target_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(target_.parent_path(), ec);
  }
  out_.open(temp_, binary ? std::ios::out | std::ios::trunc | std::ios::binary
                          : std::ios::out | std::ios::trunc);
  if (!out_) throw Error(ErrorCode::IoError, "cannot open " + temp_.string() + " for writing");
}

AtomicFile::~AtomicFile() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(temp_, ec);
  }
}

void AtomicFile::commit() {
  out_.flush();
  if (!out_) throw Error(ErrorCode::IoError, "write failed for " + temp_.string());
  out_.close();
  std::error_code ec;
  std::filesystem::rename(temp_, target_, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename into " + target_.string() + ": " + ec.message());
  committed_ = true;
}

void write_file_atomically(const std::filesystem::path& path, std::string_view contents) {
  AtomicFile file(path, true);
  file.stream().write(contents.data(), static_cast<std::streamsize>(contents.size()));
  file.commit();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return std::to_string(value);
  return std::string(buf, ptr);
}

void BinaryWriter::put_double(double value) { put(std::bit_cast<std::uint64_t>(value)); }

void BinaryWriter::put_string(std::string_view s) {
  put<std::uint64_t>(s.size());
  put_raw(s);
}

void BinaryWriter::put_doubles(const std::vector<double>& values) {
  put<std::uint64_t>(values.size());
  for (double v : values) put_double(v);
}

void BinaryReader::read(char* dst, std::size_t n) {
  in_.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) throw Error(ErrorCode::IoError, "unexpected end of file");
}

double BinaryReader::get_double() { return std::bit_cast<double>(get<std::uint64_t>()); }

std::string BinaryReader::get_raw(std::size_t n) {
  std::string s(n, '\0');
  if (n > 0) read(s.data(), n);
  return s;
}

std::string BinaryReader::get_string() {
  auto n = get<std::uint64_t>();
  if (n > (1ULL << 32)) throw Error(ErrorCode::IoError, "implausible string length");
  return get_raw(n);
}

std::vector<double> BinaryReader::get_doubles() {
  auto n = get<std::uint64_t>();
  if (n > (1ULL << 34)) throw Error(ErrorCode::IoError, "implausible array length");
  std::vector<double> values(n);
  for (auto& v : values) v = get_double();
  return values;
}

}  // namespace casekit

#include "casekit/corpus.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/uscript.h>
#include <unicode/unistr.h>

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <thread>

#include "casekit/error.hpp"
#include "casekit/io.hpp"

namespace casekit {

namespace {

bool is_latin(UChar32 c) {
  UErrorCode status = U_ZERO_ERROR;
  return uscript_getScript(c, &status) == USCRIPT_LATIN && U_SUCCESS(status);
}

std::optional<std::string> optional_string(const nlohmann::json& record, const char* key) {
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorCode::MissingField, std::string(key) + " is not a string");
  return it->get<std::string>();
}

std::set<std::string> label_set(const nlohmann::json& record, const char* key) {
  std::set<std::string> labels;
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) return labels;
  if (!it->is_array()) throw Error(ErrorCode::MissingField, std::string(key) + " is not an array");
  for (const auto& raw : *it) {
    if (!raw.is_string()) continue;
    auto label = normalize_label(raw.get<std::string>());
    if (!label.empty()) labels.insert(std::move(label));
  }
  return labels;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

std::string normalize_label(std::string_view raw) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc = icu::Normalizer2::getNFKCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorCode::InvalidConfig, "ICU NFKC normalizer unavailable");

  auto source = icu::UnicodeString::fromUTF8(icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  icu::UnicodeString normalized = nfkc->normalize(source, status);
  if (U_FAILURE(status)) return {};

  icu::UnicodeString out;
  bool pending_space = false;
  for (int32_t i = 0; i < normalized.length();) {
    UChar32 c = normalized.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = !out.isEmpty();
      continue;
    }
    if (pending_space) {
      out.append(static_cast<UChar>(u' '));
      pending_space = false;
    }
    out.append(is_latin(c) ? u_foldCase(c, U_FOLD_CASE_DEFAULT) : c);
  }
  std::string result;
  out.toUTF8String(result);
  return result;
}

LegalCaseDocument parse_case(const nlohmann::json& record) {
  if (!record.is_object()) throw Error(ErrorCode::MissingField, "record is not an object");
  LegalCaseDocument doc;
  auto id = optional_string(record, "id");
  if (!id || blank(*id)) throw Error(ErrorCode::MissingField, "id");
  auto fact = optional_string(record, "fact");
  if (!fact || blank(*fact)) throw Error(ErrorCode::MissingField, "fact");
  doc.id = std::move(*id);
  doc.fact = std::move(*fact);
  doc.crimes = label_set(record, "crimes");
  doc.provisions = label_set(record, "provisions");
  doc.court = optional_string(record, "court");
  doc.defendant = optional_string(record, "defendant");
  doc.full_text = optional_string(record, "full_text");
  return doc;
}

nlohmann::json to_json(const LegalCaseDocument& doc) {
  nlohmann::json j;
  j["id"] = doc.id;
  j["fact"] = doc.fact;
  j["crimes"] = doc.crimes;
  j["provisions"] = doc.provisions;
  if (doc.court) j["court"] = *doc.court;
  if (doc.defendant) j["defendant"] = *doc.defendant;
  if (doc.full_text) j["full_text"] = *doc.full_text;
  return j;
}

std::string serialize_case(const LegalCaseDocument& doc) { return to_json(doc).dump(); }

Corpus::Corpus(std::vector<LegalCaseDocument> documents, std::string source, std::size_t skipped_lines)
    : documents_(std::move(documents)), source_(std::move(source)), skipped_lines_(skipped_lines) {
  by_id_.reserve(documents_.size());
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    auto [it, inserted] = by_id_.emplace(documents_[i].id, i);
    if (!inserted) throw Error(ErrorCode::DuplicateId, documents_[i].id);
  }
}

const LegalCaseDocument* Corpus::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &documents_[it->second];
}

std::optional<std::size_t> Corpus::index_of(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

Corpus load_corpus(const std::filesystem::path& path, unsigned threads) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open corpus " + path.string());

  std::vector<std::string> lines;
  std::vector<std::size_t> line_numbers;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    lines.push_back(std::move(line));
    line_numbers.push_back(n);
  }
  if (in.bad()) throw Error(ErrorCode::IoError, "read failed for " + path.string());

  // Lines are parsed into fixed slots so the output order is the file order
  // regardless of how the work is split.
  std::vector<std::optional<LegalCaseDocument>> parsed(lines.size());
  auto parse_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        parsed[i] = parse_case(nlohmann::json::parse(lines[i]));
      } catch (const nlohmann::json::exception&) {
      } catch (const Error& e) {
        if (e.code() != ErrorCode::MissingField) throw;
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(lines.size() / 256 + 1)));
  if (threads == 1) {
    parse_range(0, lines.size());
  } else {
    std::vector<std::jthread> workers;
    std::size_t chunk = (lines.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      std::size_t begin = t * chunk, end = std::min(lines.size(), begin + chunk);
      if (begin < end) workers.emplace_back(parse_range, begin, end);
    }
  }

  std::vector<LegalCaseDocument> documents;
  documents.reserve(parsed.size());
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (parsed[i]) {
      documents.push_back(std::move(*parsed[i]));
    } else {
      ++skipped;
      spdlog::warn("{}:{}: skipping malformed record", path.string(), line_numbers[i]);
    }
  }
  return Corpus(std::move(documents), path.string(), skipped);
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  AtomicFile file(path);
  for (const auto& doc : corpus) file.stream() << serialize_case(doc) << '\n';
  file.commit();
}

}  // namespace casekit

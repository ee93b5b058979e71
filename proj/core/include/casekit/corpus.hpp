#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace casekit {

/// One case document: the fact description plus the judgment signals
/// (crimes and cited provisions). Labels are stored normalized.
struct LegalCaseDocument {
  std::string id;
  std::string fact;
  std::set<std::string> crimes;
  std::set<std::string> provisions;
  std::optional<std::string> court;
  std::optional<std::string> defendant;
  std::optional<std::string> full_text;

  bool operator==(const LegalCaseDocument&) const = default;
};

/// NFKC, trim, collapse internal whitespace, case-fold Latin letters.
/// Idempotent. May return an empty string.
std::string normalize_label(std::string_view raw);

/// Builds a document from a JSON object with keys id, fact, crimes,
/// provisions, court, defendant, full_text. Unknown keys are ignored.
/// Throws Error(MissingField) if id or fact is absent or blank.
LegalCaseDocument parse_case(const nlohmann::json& record);

nlohmann::json to_json(const LegalCaseDocument& doc);

/// Canonical single-line JSON (sorted keys, no trailing newline).
std::string serialize_case(const LegalCaseDocument& doc);

/// Ordered, immutable collection of documents with exact id lookup.
class Corpus {
 public:
  Corpus() = default;

  /// Throws Error(DuplicateId) on repeated ids.
  explicit Corpus(std::vector<LegalCaseDocument> documents, std::string source = {},
                  std::size_t skipped_lines = 0);

  std::size_t size() const { return documents_.size(); }
  bool empty() const { return documents_.empty(); }
  const LegalCaseDocument& operator[](std::size_t i) const { return documents_[i]; }
  const std::vector<LegalCaseDocument>& documents() const { return documents_; }
  auto begin() const { return documents_.begin(); }
  auto end() const { return documents_.end(); }

  const LegalCaseDocument* find(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;

  const std::string& source() const { return source_; }
  std::size_t skipped_lines() const { return skipped_lines_; }

 private:
  std::vector<LegalCaseDocument> documents_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::string source_;
  std::size_t skipped_lines_ = 0;
};

/// Reads a JSONL corpus. Malformed lines (bad JSON, non-object, missing
/// id/fact) are skipped and counted; blank lines are ignored. Duplicate ids
/// are fatal.
Corpus load_corpus(const std::filesystem::path& path, unsigned threads = 1);

/// Writes one canonical record per line, atomically.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

}  // namespace casekit

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "casekit/corpus.hpp"
#include "casekit/tokenize.hpp"

namespace casekit {

struct BM25Params {
  double k1 = 3.8;
  double b = 0.87;

  /// Tuned values used by the samplers.
  static BM25Params tuned() { return {3.8, 0.87}; }
  /// Common toolkit defaults (Anserini/pyserini).
  static BM25Params toolkit_default() { return {0.9, 0.4}; }
  /// Throws Error(InvalidConfig) unless k1 >= 0 and b in [0, 1].
  void validate() const;
};

inline constexpr double kDefaultDirichletMu = 1000.0;

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const ScoredDoc&) const = default;
};

/// Sort by descending score, ascending doc id on ties.
void sort_ranked(std::vector<ScoredDoc>& ranked);

/// Token statistics over the fact field of every document, plus the
/// judgment tables used by the LP-ICF similarity.
class InvertedIndex {
 public:
  struct Posting {
    std::uint32_t doc;  ///< insertion-order document number
    std::uint32_t tf;
    bool operator==(const Posting&) const = default;
  };

  static InvertedIndex build(const Corpus& corpus, TokenScheme scheme);

  TokenScheme scheme() const { return scheme_; }
  std::size_t n_docs() const { return doc_ids_.size(); }
  double avg_doc_len() const { return avg_doc_len_; }
  std::uint64_t total_tokens() const { return total_tokens_; }
  std::size_t vocabulary_size() const { return terms_.size(); }

  const std::string& doc_id(std::uint32_t doc) const { return doc_ids_[doc]; }
  std::optional<std::uint32_t> doc_number(std::string_view doc_id) const;
  std::uint32_t doc_length(std::uint32_t doc) const { return doc_lengths_[doc]; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }

  std::optional<std::uint32_t> term_id(std::string_view token) const;
  const std::string& term(std::uint32_t id) const { return terms_[id]; }
  const std::vector<Posting>& postings(std::uint32_t term) const { return postings_[term]; }
  std::uint32_t document_frequency(std::uint32_t term) const {
    return static_cast<std::uint32_t>(postings_[term].size());
  }
  std::uint64_t collection_frequency(std::uint32_t term) const { return collection_tf_[term]; }
  std::uint32_t term_frequency(std::uint32_t term, std::uint32_t doc) const;

  const std::map<std::string, std::uint32_t>& provision_df() const { return provision_df_; }
  const std::map<std::string, std::vector<std::string>>& crime_index() const { return crime_index_; }

  void save(const std::filesystem::path& path) const;
  static InvertedIndex load(const std::filesystem::path& path);

  bool operator==(const InvertedIndex&) const;

 private:
  void finalize();

  TokenScheme scheme_ = TokenScheme::Mixed;
  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, std::uint32_t> doc_lookup_;
  std::vector<std::uint32_t> doc_lengths_;
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::uint32_t> term_lookup_;
  std::vector<std::vector<Posting>> postings_;
  std::vector<std::uint64_t> collection_tf_;
  std::uint64_t total_tokens_ = 0;
  double avg_doc_len_ = 0.0;
  std::map<std::string, std::uint32_t> provision_df_;
  std::map<std::string, std::vector<std::string>> crime_index_;
};

/// Throws Error(EmptyCorpus) for an empty corpus.
inline InvertedIndex build_index(const Corpus& corpus, TokenScheme scheme) {
  return InvertedIndex::build(corpus, scheme);
}

/// Non-negative idf: ln(1 + (N - df + 0.5) / (df + 0.5)).
double bm25_idf(std::size_t n_docs, std::size_t df);

/// Sum over query tokens (repeats included) of idf * tf(k1+1) / (tf + k1(1 - b + b dl/avgdl)).
/// Throws Error(UnknownDoc).
double bm25_score(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                  std::string_view doc_id, const BM25Params& params = {});

/// Top-k documents sharing at least one query token. Ties by ascending doc id.
std::vector<ScoredDoc> search_bm25(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                                   std::size_t k, const BM25Params& params = {},
                                   std::optional<std::string_view> exclude = std::nullopt);

/// Dirichlet-smoothed query likelihood. Tokens unseen in the whole
/// collection are skipped. Throws Error(UnknownDoc).
double ql_score(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                std::string_view doc_id, double mu = kDefaultDirichletMu);

/// Scores every document with ql_score and returns the top k.
std::vector<ScoredDoc> search_ql(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                                 std::size_t k, double mu = kDefaultDirichletMu,
                                 std::optional<std::string_view> exclude = std::nullopt);

inline void persist_index(const InvertedIndex& index, const std::filesystem::path& path) { index.save(path); }
inline InvertedIndex load_index(const std::filesystem::path& path) { return InvertedIndex::load(path); }

}  // namespace casekit

#include "casekit/textindex.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "casekit/error.hpp"
#include "casekit/io.hpp"

namespace casekit {

namespace {

constexpr char kIndexMagic[8] = {'C', 'K', 'I', 'D', 'X', '\0', '\0', '\1'};
constexpr std::uint32_t kIndexVersion = 1;

bool ranked_before(const ScoredDoc& a, const ScoredDoc& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

std::vector<ScoredDoc> top_k(std::vector<ScoredDoc> candidates, std::size_t k) {
  if (candidates.size() > k) {
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                      ranked_before);
    candidates.resize(k);
  } else {
    std::sort(candidates.begin(), candidates.end(), ranked_before);
  }
  return candidates;
}

double bm25_term(double idf, double tf, double doc_len, double avg_len, const BM25Params& p) {
  return idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * doc_len / avg_len));
}

std::uint32_t require_doc(const InvertedIndex& index, std::string_view doc_id) {
  auto doc = index.doc_number(doc_id);
  if (!doc) throw Error(ErrorCode::UnknownDoc, std::string(doc_id));
  return *doc;
}

}  // namespace

void BM25Params::validate() const {
  if (!(k1 >= 0.0) || !std::isfinite(k1)) throw Error(ErrorCode::InvalidConfig, "bm25 k1 must be >= 0");
  if (!(b >= 0.0 && b <= 1.0)) throw Error(ErrorCode::InvalidConfig, "bm25 b must lie in [0, 1]");
}

void sort_ranked(std::vector<ScoredDoc>& ranked) { std::sort(ranked.begin(), ranked.end(), ranked_before); }

InvertedIndex InvertedIndex::build(const Corpus& corpus, TokenScheme scheme) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot index an empty corpus");
  InvertedIndex index;
  index.scheme_ = scheme;
  std::unordered_map<std::uint32_t, std::uint32_t> counts;
  std::vector<std::uint32_t> order;
  for (const auto& doc : corpus) {
    const auto number = static_cast<std::uint32_t>(index.doc_ids_.size());
    index.doc_ids_.push_back(doc.id);
    auto tokens = tokenize(doc.fact, scheme);
    index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));

    counts.clear();
    order.clear();
    for (auto& token : tokens) {
      auto [it, inserted] = index.term_lookup_.try_emplace(token, static_cast<std::uint32_t>(index.terms_.size()));
      if (inserted) {
        index.terms_.push_back(token);
        index.postings_.emplace_back();
        index.collection_tf_.push_back(0);
      }
      if (counts[it->second]++ == 0) order.push_back(it->second);
    }
    for (auto term : order) {
      index.postings_[term].push_back({number, counts[term]});
      index.collection_tf_[term] += counts[term];
    }
    for (const auto& p : doc.provisions) ++index.provision_df_[p];
    for (const auto& c : doc.crimes) index.crime_index_[c].push_back(doc.id);
  }
  index.finalize();
  return index;
}

void InvertedIndex::finalize() {
  doc_lookup_.clear();
  for (std::uint32_t i = 0; i < doc_ids_.size(); ++i) doc_lookup_.emplace(doc_ids_[i], i);
  term_lookup_.clear();
  for (std::uint32_t i = 0; i < terms_.size(); ++i) term_lookup_.emplace(terms_[i], i);
  total_tokens_ = 0;
  for (auto len : doc_lengths_) total_tokens_ += len;
  avg_doc_len_ = doc_ids_.empty() ? 0.0 : static_cast<double>(total_tokens_) / static_cast<double>(doc_ids_.size());
}

std::optional<std::uint32_t> InvertedIndex::doc_number(std::string_view doc_id) const {
  auto it = doc_lookup_.find(std::string(doc_id));
  if (it == doc_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> InvertedIndex::term_id(std::string_view token) const {
  auto it = term_lookup_.find(std::string(token));
  if (it == term_lookup_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t InvertedIndex::term_frequency(std::uint32_t term, std::uint32_t doc) const {
  const auto& list = postings_[term];
  auto it = std::lower_bound(list.begin(), list.end(), doc,
                             [](const Posting& p, std::uint32_t d) { return p.doc < d; });
  return (it != list.end() && it->doc == doc) ? it->tf : 0;
}

bool InvertedIndex::operator==(const InvertedIndex& other) const {
  return scheme_ == other.scheme_ && doc_ids_ == other.doc_ids_ && doc_lengths_ == other.doc_lengths_ &&
         terms_ == other.terms_ && postings_ == other.postings_ && collection_tf_ == other.collection_tf_ &&
         provision_df_ == other.provision_df_ && crime_index_ == other.crime_index_;
}

void InvertedIndex::save(const std::filesystem::path& path) const {
  AtomicFile file(path, true);
  BinaryWriter w(file.stream());
  w.put_raw(std::string_view(kIndexMagic, sizeof(kIndexMagic)));
  w.put<std::uint32_t>(kIndexVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(scheme_));
  w.put<std::uint64_t>(doc_ids_.size());
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    w.put_string(doc_ids_[i]);
    w.put<std::uint32_t>(doc_lengths_[i]);
  }
  w.put<std::uint64_t>(terms_.size());
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    w.put_string(terms_[t]);
    w.put<std::uint64_t>(collection_tf_[t]);
    w.put<std::uint64_t>(postings_[t].size());
    for (const auto& p : postings_[t]) {
      w.put<std::uint32_t>(p.doc);
      w.put<std::uint32_t>(p.tf);
    }
  }
  w.put<std::uint64_t>(provision_df_.size());
  for (const auto& [p, df] : provision_df_) {
    w.put_string(p);
    w.put<std::uint32_t>(df);
  }
  w.put<std::uint64_t>(crime_index_.size());
  for (const auto& [c, ids] : crime_index_) {
    w.put_string(c);
    w.put<std::uint64_t>(ids.size());
    for (const auto& id : ids) w.put_string(id);
  }
  file.commit();
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open index " + path.string());
  BinaryReader r(in);
  std::string magic;
  try {
    magic = r.get_raw(sizeof(kIndexMagic));
  } catch (const Error&) {
    throw Error(ErrorCode::VersionMismatch, "not a casekit index: " + path.string());
  }
  if (magic != std::string_view(kIndexMagic, sizeof(kIndexMagic)))
    throw Error(ErrorCode::VersionMismatch, "bad magic in " + path.string());
  auto version = r.get<std::uint32_t>();
  if (version != kIndexVersion)
    throw Error(ErrorCode::VersionMismatch, "index version " + std::to_string(version) + " unsupported");

  InvertedIndex index;
  auto scheme = r.get<std::uint8_t>();
  if (scheme > static_cast<std::uint8_t>(TokenScheme::Mixed)) throw Error(ErrorCode::IoError, "bad scheme tag");
  index.scheme_ = static_cast<TokenScheme>(scheme);
  auto n_docs = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_docs; ++i) {
    index.doc_ids_.push_back(r.get_string());
    index.doc_lengths_.push_back(r.get<std::uint32_t>());
  }
  auto n_terms = r.get<std::uint64_t>();
  index.postings_.resize(n_terms);
  for (std::uint64_t t = 0; t < n_terms; ++t) {
    index.terms_.push_back(r.get_string());
    index.collection_tf_.push_back(r.get<std::uint64_t>());
    auto n = r.get<std::uint64_t>();
    if (n > n_docs) throw Error(ErrorCode::IoError, "corrupt posting list");
    index.postings_[t].resize(n);
    for (auto& p : index.postings_[t]) {
      p.doc = r.get<std::uint32_t>();
      p.tf = r.get<std::uint32_t>();
      if (p.doc >= n_docs) throw Error(ErrorCode::IoError, "posting refers to unknown document");
    }
  }
  auto n_prov = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_prov; ++i) {
    auto p = r.get_string();
    index.provision_df_[p] = r.get<std::uint32_t>();
  }
  auto n_crimes = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_crimes; ++i) {
    auto c = r.get_string();
    auto n = r.get<std::uint64_t>();
    auto& ids = index.crime_index_[c];
    for (std::uint64_t j = 0; j < n; ++j) ids.push_back(r.get_string());
  }
  index.finalize();
  return index;
}

double bm25_idf(std::size_t n_docs, std::size_t df) {
  const auto n = static_cast<double>(n_docs);
  const auto d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double bm25_score(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                  std::string_view doc_id, const BM25Params& params) {
  const auto doc = require_doc(index, doc_id);
  const double doc_len = index.doc_length(doc);
  double score = 0.0;
  for (const auto& token : query_tokens) {
    auto term = index.term_id(token);
    if (!term) continue;
    auto tf = index.term_frequency(*term, doc);
    if (tf == 0) continue;
    score += bm25_term(bm25_idf(index.n_docs(), index.document_frequency(*term)), tf, doc_len,
                       index.avg_doc_len(), params);
  }
  return score;
}

std::vector<ScoredDoc> search_bm25(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                                   std::size_t k, const BM25Params& params,
                                   std::optional<std::string_view> exclude) {
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  // Term-at-a-time accumulation in query order gives exactly the same
  // floating-point sums as bm25_score.
  std::vector<double> acc(index.n_docs(), 0.0);
  std::vector<std::uint32_t> touched;
  std::vector<char> seen(index.n_docs(), 0);
  for (const auto& token : query_tokens) {
    auto term = index.term_id(token);
    if (!term) continue;
    const double idf = bm25_idf(index.n_docs(), index.document_frequency(*term));
    for (const auto& p : index.postings(*term)) {
      acc[p.doc] += bm25_term(idf, p.tf, index.doc_length(p.doc), index.avg_doc_len(), params);
      if (!seen[p.doc]) {
        seen[p.doc] = 1;
        touched.push_back(p.doc);
      }
    }
  }
  std::optional<std::uint32_t> skip;
  if (exclude) skip = index.doc_number(*exclude);
  std::vector<ScoredDoc> candidates;
  candidates.reserve(touched.size());
  for (auto doc : touched) {
    if (skip && doc == *skip) continue;
    candidates.push_back({index.doc_id(doc), acc[doc]});
  }
  return top_k(std::move(candidates), k);
}

double ql_score(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                std::string_view doc_id, double mu) {
  if (!(mu > 0.0)) throw Error(ErrorCode::InvalidConfig, "Dirichlet mu must be positive");
  const auto doc = require_doc(index, doc_id);
  const double doc_len = index.doc_length(doc);
  const double total = static_cast<double>(index.total_tokens());
  double score = 0.0;
  for (const auto& token : query_tokens) {
    auto term = index.term_id(token);
    if (!term) {
      spdlog::debug("query likelihood: token '{}' unseen in collection, skipped", token);
      continue;
    }
    const double p_collection = static_cast<double>(index.collection_frequency(*term)) / total;
    const double tf = index.term_frequency(*term, doc);
    score += std::log((tf + mu * p_collection) / (doc_len + mu));
  }
  return score;
}

std::vector<ScoredDoc> search_ql(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                                 std::size_t k, double mu, std::optional<std::string_view> exclude) {
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  std::vector<ScoredDoc> candidates;
  candidates.reserve(index.n_docs());
  for (std::uint32_t doc = 0; doc < index.n_docs(); ++doc) {
    const auto& id = index.doc_id(doc);
    if (exclude && id == *exclude) continue;
    candidates.push_back({id, ql_score(index, query_tokens, id, mu)});
  }
  return top_k(std::move(candidates), k);
}

}  // namespace casekit

#include "casekit/lpicf.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "casekit/error.hpp"

namespace casekit {

namespace {

template <typename Set>
bool intersects(const Set& a, const Set& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      return true;
    }
  }
  return false;
}

}  // namespace

JudgmentStats JudgmentStats::from_corpus(const Corpus& corpus) {
  JudgmentStats stats;
  stats.n_docs = corpus.size();
  for (const auto& doc : corpus) {
    for (const auto& p : doc.provisions) ++stats.provision_df[p];
    for (const auto& c : doc.crimes) stats.crime_index[c].push_back(doc.id);
  }
  return stats;
}

JudgmentStats JudgmentStats::from_index(const InvertedIndex& index) {
  return {index.n_docs(), index.provision_df(), index.crime_index()};
}

double JudgmentStats::icf(const std::string& provision) const {
  auto it = provision_df.find(provision);
  if (it == provision_df.end() || it->second == 0) {
    spdlog::debug("provision '{}' missing from judgment stats; contributes 0", provision);
    return 0.0;
  }
  return std::log(static_cast<double>(n_docs) / static_cast<double>(it->second));
}

double lp_icf_score(const LegalCaseDocument& a, const LegalCaseDocument& b, const JudgmentStats& stats) {
  if (!intersects(a.crimes, b.crimes)) return 0.0;
  // Walk both sorted sets; the shared provisions are visited in sorted
  // order whichever argument comes first, so the sum is symmetric bit-for-bit.
  double score = 0.0;
  auto i = a.provisions.begin();
  auto j = b.provisions.begin();
  while (i != a.provisions.end() && j != b.provisions.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      score += stats.icf(*i);
      ++i;
      ++j;
    }
  }
  return score;
}

std::vector<ScoredDoc> search_lpicf(const LegalCaseDocument& query, const Corpus& corpus,
                                    const JudgmentStats& stats, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  // Only cases sharing a crime can score above zero.
  std::vector<const std::string*> candidates;
  for (const auto& crime : query.crimes) {
    auto it = stats.crime_index.find(crime);
    if (it == stats.crime_index.end()) continue;
    for (const auto& id : it->second) candidates.push_back(&id);
  }
  std::sort(candidates.begin(), candidates.end(), [](auto* a, auto* b) { return *a < *b; });
  candidates.erase(std::unique(candidates.begin(), candidates.end(), [](auto* a, auto* b) { return *a == *b; }),
                   candidates.end());

  std::vector<ScoredDoc> ranked;
  for (const auto* id : candidates) {
    if (*id == query.id) continue;
    const auto* doc = corpus.find(*id);
    if (doc == nullptr) continue;
    double score = lp_icf_score(query, *doc, stats);
    if (score > 0.0) ranked.push_back({*id, score});
  }
  sort_ranked(ranked);
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

}  // namespace casekit

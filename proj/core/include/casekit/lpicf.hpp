#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "casekit/corpus.hpp"
#include "casekit/textindex.hpp"

namespace casekit {

/// Collection statistics for judgment similarity: collection size, the
/// number of cases citing each provision, and the cases per crime.
struct JudgmentStats {
  std::size_t n_docs = 0;
  std::map<std::string, std::uint32_t> provision_df;
  std::map<std::string, std::vector<std::string>> crime_index;

  static JudgmentStats from_corpus(const Corpus& corpus);
  static JudgmentStats from_index(const InvertedIndex& index);

  /// Inverse case frequency ln(|D| / df). Unknown provisions count as
  /// df = |D| and contribute 0.
  double icf(const std::string& provision) const;
};

/// Crime-gated sum of inverse case frequencies over the shared provisions.
/// Zero when the crime sets are disjoint.
double lp_icf_score(const LegalCaseDocument& a, const LegalCaseDocument& b, const JudgmentStats& stats);

/// Top-k cases by LP-ICF against `query`. The query itself and zero-score
/// cases never appear; ties break by ascending doc id.
std::vector<ScoredDoc> search_lpicf(const LegalCaseDocument& query, const Corpus& corpus,
                                    const JudgmentStats& stats, std::size_t k);

}  // namespace casekit

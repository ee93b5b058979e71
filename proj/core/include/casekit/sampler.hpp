#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "casekit/corpus.hpp"
#include "casekit/lpicf.hpp"
#include "casekit/random.hpp"
#include "casekit/textindex.hpp"
#include "casekit/vocabulary.hpp"

namespace casekit {

enum class Task { LAM, LJP, FDM };

std::string_view to_string(Task task);
std::optional<Task> parse_task(std::string_view name);

/// A query with one positive and its negatives, ready for a softmax
/// cross-entropy loss.
struct ContrastiveGroup {
  std::string query_id;
  std::string positive_id;
  std::vector<std::string> negative_ids;
  Task task = Task::LJP;

  bool operator==(const ContrastiveGroup&) const = default;
  /// Positive and query distinct from every negative; at least one negative.
  bool valid() const;
};

nlohmann::json to_json(const ContrastiveGroup& group);
ContrastiveGroup group_from_json(const nlohmann::json& j);

/// Token ids after masking, the masked positions, and the ids they replaced.
struct MaskedSequence {
  std::vector<std::uint32_t> token_ids;
  std::vector<std::uint32_t> masked_positions;
  std::vector<std::uint32_t> original_tokens;

  bool operator==(const MaskedSequence&) const = default;
  bool valid(std::size_t max_len) const;
  /// The sequence with every masked position restored.
  std::vector<std::uint32_t> unmasked() const;
};

nlohmann::json to_json(const MaskedSequence& seq);
MaskedSequence sequence_from_json(const nlohmann::json& j);

struct SamplerConfig {
  std::size_t pool_size = 200;
  std::size_t fdm_positive_window = 5;
  std::size_t lambda = 16;
  double mask_ratio = 0.15;
  std::size_t max_len = 510;
  std::uint64_t seed = 0;
  std::size_t negatives_cap = 0;  ///< 0 keeps every negative
  std::size_t positives_cap = 0;  ///< 0 emits one group per positive

  void validate() const;
  nlohmann::json to_json() const;
  static SamplerConfig from_json(const nlohmann::json& j);
};

/// Masks each position independently with probability `ratio`, drawing
/// from a stream keyed by (seed, epoch, sequence_index).
MaskedSequence mask_sequence(const std::vector<std::uint32_t>& tokens, double ratio, std::uint64_t seed,
                             std::uint64_t epoch, std::uint64_t sequence_index);

/// Judgment-based groups: BM25 pool over facts, positives share the exact
/// crime and provision sets with the query. Absent when the pool has no
/// positive or no negative.
std::optional<std::vector<ContrastiveGroup>> sample_ljp(const LegalCaseDocument& query, const Corpus& corpus,
                                                        const InvertedIndex& index, const SamplerConfig& cfg,
                                                        const BM25Params& bm25 = {});

/// Fact-based group: LP-ICF pool re-ranked by BM25; positive drawn from
/// the head window, negatives are the tail.
std::optional<ContrastiveGroup> sample_fdm(const LegalCaseDocument& query, const Corpus& corpus,
                                           const JudgmentStats& stats, const InvertedIndex& index,
                                           const SamplerConfig& cfg, Rng& rng, const BM25Params& bm25 = {});

/// The LP-ICF pool of `query` ordered by BM25 fact similarity (descending,
/// ties by doc id).
std::vector<ScoredDoc> fdm_ranked_pool(const LegalCaseDocument& query, const Corpus& corpus,
                                       const JudgmentStats& stats, const InvertedIndex& index,
                                       const SamplerConfig& cfg, const BM25Params& bm25 = {});

/// Per-query random stream used by the FDM sampler.
Rng fdm_rng(std::uint64_t seed, std::string_view query_id);

/// Tokenizes fact (and full text) of each document, chunks into max_len
/// pieces and masks each piece. Throws Error(EmptyVocabulary).
void generate_lam(const Corpus& corpus, const Vocabulary& vocab, const SamplerConfig& cfg, std::uint64_t epoch,
                  const std::function<void(const MaskedSequence&)>& sink);
std::vector<MaskedSequence> generate_lam(const Corpus& corpus, const Vocabulary& vocab, const SamplerConfig& cfg,
                                         std::uint64_t epoch = 0);

struct TaskSummary {
  std::size_t items = 0;    ///< groups (LJP/FDM) or sequences (LAM)
  std::size_t queries = 0;  ///< queries that produced output
  std::size_t skipped = 0;  ///< queries that produced nothing
  std::string file;
};

struct DatasetManifest {
  std::map<Task, TaskSummary> tasks;
  SamplerConfig config;
  BM25Params bm25;
  TokenScheme scheme = TokenScheme::Mixed;
  std::string corpus_source;
  std::size_t corpus_size = 0;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
  static DatasetManifest load(const std::filesystem::path& dir);
};

inline constexpr const char* kManifestFile = "manifest.json";
std::string task_file_name(Task task);

struct DatasetOptions {
  BM25Params bm25;
  TokenScheme scheme = TokenScheme::Mixed;
  unsigned threads = 1;
};

/// Uses every document as a query for each selected task and streams the
/// results to `out_dir` (one JSONL per task plus manifest.json). With no
/// tasks selected nothing is written.
DatasetManifest build_dataset(const Corpus& corpus, const std::set<Task>& tasks, const SamplerConfig& cfg,
                              const std::filesystem::path& out_dir, const DatasetOptions& options = {});

std::vector<ContrastiveGroup> read_groups(const std::filesystem::path& path);
std::vector<MaskedSequence> read_sequences(const std::filesystem::path& path);

}  // namespace casekit

#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "casekit/corpus.hpp"
#include "casekit/encoder.hpp"
#include "casekit/eval.hpp"
#include "casekit/sampler.hpp"
#include "casekit/textindex.hpp"

namespace casekit {

/// Grade 3 for every other case whose crime and provision sets equal the
/// query's; everything else is unjudged (grade 0).
Qrels judgment_qrels(const Corpus& corpus, const std::vector<std::string>& query_ids);

/// The first `n` case ids (all when n == 0 or n >= corpus size).
std::vector<std::string> leading_ids(const Corpus& corpus, std::size_t n);

/// Encodes every case once and ranks the corpus by inner product for each
/// query (self excluded).
RunFile dense_run(const DualModel& model, const Vocabulary& vocab, const Corpus& corpus,
                  const std::vector<std::string>& query_ids, std::size_t k, std::size_t max_len = 510,
                  const std::string& tag = "dense");

RunFile bm25_run(const InvertedIndex& index, const Corpus& corpus, const std::vector<std::string>& query_ids,
                 std::size_t k, const BM25Params& params = {}, const std::string& tag = "bm25");

struct AblationConfig {
  SamplerConfig sampler;
  TrainConfig train;
  DatasetOptions dataset;
  std::size_t eval_queries = 0;  ///< 0 evaluates every case as a query
  std::size_t recall_k = 100;
  std::size_t sig_iterations = 100000;
  std::uint64_t sig_seed = 7;
};

struct AblationRow {
  std::string name;      ///< "untrained", "LAM", "LJP+FDM", ...
  std::set<Task> tasks;  ///< empty for the untrained baseline
  MetricResult recall;   ///< Recall@recall_k
  MetricResult ndcg;     ///< NDCG@10
  MetricResult mrr;      ///< MRR@10
  double p_vs_full = 1.0;  ///< randomization p-value of recall against LAM+LJP+FDM
  std::vector<LossRecord> loss_curve;
  DualModel model;  ///< the evaluated encoder
};

struct AblationReport {
  std::vector<AblationRow> rows;
  DatasetManifest manifest;

  const AblationRow& row(const std::string& name) const;
  std::string to_tsv(std::size_t recall_k) const;
};

std::string task_set_name(const std::set<Task>& tasks);

/// Builds the LAM/LJP/FDM dataset once under work_dir, trains a dual
/// encoder for every non-empty task subset, and evaluates each (plus the
/// untrained initialization) on same-judgment retrieval.
AblationReport run_ablation(const Corpus& corpus, const AblationConfig& cfg, const std::filesystem::path& work_dir);

}  // namespace casekit

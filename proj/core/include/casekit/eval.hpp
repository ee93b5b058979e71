#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace casekit {

struct RunEntry {
  std::string doc_id;
  double score = 0.0;
  std::size_t rank = 0;

  bool operator==(const RunEntry&) const = default;
};

/// Ranked output of one system: per query, entries ordered by rank 1..n.
struct RunFile {
  std::string tag = "casekit";
  std::map<std::string, std::vector<RunEntry>> queries;

  bool operator==(const RunFile&) const = default;
};

/// Graded judgments, (query, doc) -> grade in [0, 3].
struct Qrels {
  std::map<std::string, std::map<std::string, int>> judgments;

  void set(const std::string& query, const std::string& doc, int grade);
  int grade(const std::string& query, const std::string& doc) const;
};

inline constexpr int kMaxGrade = 3;

/// Which grades count as relevant for binary metrics. Default {2, 3}.
class GradeSet {
 public:
  GradeSet() : GradeSet({2, 3}) {}
  GradeSet(std::initializer_list<int> grades);
  static GradeSet at_least(int grade);
  /// Throws Error(InvalidConfig) for grades outside [0, 3].
  static GradeSet of(const std::vector<int>& grades);

  bool contains(int grade) const { return grade >= 0 && grade <= kMaxGrade && ((mask_ >> grade) & 1U) != 0; }

 private:
  unsigned mask_ = 0;
};

/// Per-query values plus their mean over the evaluated queries. Queries
/// without any relevant document are skipped and counted.
struct MetricResult {
  std::map<std::string, double> per_query;
  double mean = 0.0;
  std::size_t skipped = 0;
};

/// Evaluated queries are those in the qrels with at least one relevant
/// document; a query absent from the run scores 0.
MetricResult recall_at_k(const RunFile& run, const Qrels& qrels, std::size_t k, const GradeSet& relevant = {});
MetricResult precision_at_k(const RunFile& run, const Qrels& qrels, std::size_t k, const GradeSet& relevant = {});
MetricResult mrr_at_k(const RunFile& run, const Qrels& qrels, std::size_t k, const GradeSet& relevant = {});

enum class Gain { Linear, Exponential };

/// DCG@k / IDCG@k with gain = grade (or 2^grade - 1) and discount
/// 1/log2(rank + 1). Queries with no positive grade are skipped.
MetricResult ndcg_at_k(const RunFile& run, const Qrels& qrels, std::size_t k, Gain gain = Gain::Linear);

enum class Preferred { A, B };

struct PairwiseJudgment {
  double score_a = 0.0;
  double score_b = 0.0;
  Preferred gold = Preferred::A;
};

/// Fraction of pairs where the higher-scored candidate is the gold one;
/// exact ties count one half. Empty input gives 0.
double pairwise_accuracy(const std::vector<PairwiseJudgment>& judgments);

/// Two-sided paired randomization test on the difference of means.
/// Enumerates all 2^n sign assignments when 2^n <= iterations, otherwise
/// samples `iterations` of them and returns (hits + 1) / (iterations + 1).
/// Throws Error(LengthMismatch) for unequal or empty inputs.
double fisher_randomization(const std::vector<double>& a, const std::vector<double>& b, std::size_t iterations,
                            std::uint64_t seed);

/// Values of the queries present in both results, in query order.
void paired_values(const MetricResult& a, const MetricResult& b, std::vector<double>& out_a,
                   std::vector<double>& out_b);

/// "qid Q0 docid rank score tag". Throws ParseError (with line) on bad
/// columns, rank gaps or rising scores.
RunFile read_run(const std::filesystem::path& path);
void write_run(const RunFile& run, const std::filesystem::path& path);
/// "qid 0 docid grade", grade in [0, 3].
Qrels read_qrels(const std::filesystem::path& path);
void write_qrels(const Qrels& qrels, const std::filesystem::path& path);

struct MetricSpec {
  std::string name;  ///< recall, ndcg, mrr, precision
  std::size_t k = 10;

  std::string label() const { return name + "@" + std::to_string(k); }
};

/// Parses "recall@100,ndcg@10". Throws Error(InvalidConfig).
std::vector<MetricSpec> parse_metric_list(const std::string& list);
MetricResult evaluate_metric(const MetricSpec& spec, const RunFile& run, const Qrels& qrels,
                             const GradeSet& relevant = {}, Gain gain = Gain::Linear);

}  // namespace casekit

#include "casekit/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "casekit/error.hpp"
#include "casekit/io.hpp"
#include "casekit/random.hpp"

namespace casekit {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string f; ss >> f;) out.push_back(std::move(f));
  return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

const std::vector<RunEntry>& ranking_of(const RunFile& run, const std::string& query) {
  static const std::vector<RunEntry> empty;
  auto it = run.queries.find(query);
  return it == run.queries.end() ? empty : it->second;
}

std::size_t count_relevant(const std::map<std::string, int>& judged, const GradeSet& relevant) {
  return static_cast<std::size_t>(
      std::count_if(judged.begin(), judged.end(), [&](const auto& kv) { return relevant.contains(kv.second); }));
}

int grade_in(const std::map<std::string, int>& judged, const std::string& doc) {
  auto it = judged.find(doc);
  return it == judged.end() ? 0 : it->second;
}

/// Applies `per_query` to every query with at least one relevant document.
template <typename Fn>
MetricResult over_queries(const Qrels& qrels, const GradeSet& relevant, Fn&& per_query) {
  MetricResult result;
  double sum = 0.0;
  for (const auto& [query, judged] : qrels.judgments) {
    const std::size_t n_relevant = count_relevant(judged, relevant);
    if (n_relevant == 0) {
      ++result.skipped;
      continue;
    }
    double v = per_query(query, judged, n_relevant);
    result.per_query[query] = v;
    sum += v;
  }
  if (!result.per_query.empty()) result.mean = sum / static_cast<double>(result.per_query.size());
  return result;
}

double gain_of(int grade, Gain gain) {
  return gain == Gain::Linear ? static_cast<double>(grade) : std::exp2(static_cast<double>(grade)) - 1.0;
}

}  // namespace

void Qrels::set(const std::string& query, const std::string& doc, int grade) {
  if (grade < 0 || grade > kMaxGrade) throw Error(ErrorCode::InvalidConfig, "grade out of range");
  judgments[query][doc] = grade;
}

int Qrels::grade(const std::string& query, const std::string& doc) const {
  auto it = judgments.find(query);
  return it == judgments.end() ? 0 : grade_in(it->second, doc);
}

GradeSet::GradeSet(std::initializer_list<int> grades) {
  for (int g : grades)
    if (g >= 0 && g <= kMaxGrade) mask_ |= 1U << g;
}

GradeSet GradeSet::at_least(int grade) {
  GradeSet s({});
  for (int g = std::max(grade, 0); g <= kMaxGrade; ++g) s.mask_ |= 1U << g;
  return s;
}

GradeSet GradeSet::of(const std::vector<int>& grades) {
  GradeSet s({});
  for (int g : grades) {
    if (g < 0 || g > kMaxGrade) throw Error(ErrorCode::InvalidConfig, "grade out of range: " + std::to_string(g));
    s.mask_ |= 1U << g;
  }
  return s;
}

MetricResult recall_at_k(const RunFile& run, const Qrels& qrels, std::size_t k, const GradeSet& relevant) {
  return over_queries(qrels, relevant, [&](const std::string& q, const auto& judged, std::size_t n_relevant) {
    const auto& ranking = ranking_of(run, q);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i)
      if (relevant.contains(grade_in(judged, ranking[i].doc_id))) ++hits;
    return static_cast<double>(hits) / static_cast<double>(n_relevant);
  });
}

MetricResult precision_at_k(const RunFile& run, const Qrels& qrels, std::size_t k, const GradeSet& relevant) {
  return over_queries(qrels, relevant, [&](const std::string& q, const auto& judged, std::size_t) {
    const auto& ranking = ranking_of(run, q);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i)
      if (relevant.contains(grade_in(judged, ranking[i].doc_id))) ++hits;
    return static_cast<double>(hits) / static_cast<double>(k);
  });
}

MetricResult mrr_at_k(const RunFile& run, const Qrels& qrels, std::size_t k, const GradeSet& relevant) {
  return over_queries(qrels, relevant, [&](const std::string& q, const auto& judged, std::size_t) {
    const auto& ranking = ranking_of(run, q);
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i)
      if (relevant.contains(grade_in(judged, ranking[i].doc_id))) return 1.0 / static_cast<double>(i + 1);
    return 0.0;
  });
}

MetricResult ndcg_at_k(const RunFile& run, const Qrels& qrels, std::size_t k, Gain gain) {
  return over_queries(qrels, GradeSet::at_least(1), [&](const std::string& q, const auto& judged, std::size_t) {
    const auto& ranking = ranking_of(run, q);
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i)
      dcg += gain_of(grade_in(judged, ranking[i].doc_id), gain) / std::log2(static_cast<double>(i + 2));

    std::vector<int> grades;
    for (const auto& [doc, g] : judged) grades.push_back(g);
    std::sort(grades.begin(), grades.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, grades.size()); ++i)
      idcg += gain_of(grades[i], gain) / std::log2(static_cast<double>(i + 2));
    return idcg > 0.0 ? dcg / idcg : 0.0;
  });
}

double pairwise_accuracy(const std::vector<PairwiseJudgment>& judgments) {
  if (judgments.empty()) return 0.0;
  double correct = 0.0;
  for (const auto& j : judgments) {
    if (j.score_a == j.score_b)
      correct += 0.5;
    else if ((j.score_a > j.score_b) == (j.gold == Preferred::A))
      correct += 1.0;
  }
  return correct / static_cast<double>(judgments.size());
}

double fisher_randomization(const std::vector<double>& a, const std::vector<double>& b, std::size_t iterations,
                            std::uint64_t seed) {
  if (a.size() != b.size() || a.empty())
    throw Error(ErrorCode::LengthMismatch, "paired samples must have equal, non-zero length");
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  double observed = 0.0;
  double magnitude = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = a[i] - b[i];
    observed += diff[i];
    magnitude += std::abs(diff[i]);
  }
  // Sums that are mathematically equal to the observed one may differ in
  // the last bits depending on the summation pattern.
  const double threshold = std::abs(observed) - 1e-12 * magnitude;

  auto permuted = [&](auto&& sign_of) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += sign_of(i) ? -diff[i] : diff[i];
    return s;
  };

  if (n < 63 && (std::uint64_t{1} << n) <= iterations) {
    const std::uint64_t total = std::uint64_t{1} << n;
    std::uint64_t hits = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      double s = permuted([&](std::size_t i) { return ((mask >> i) & 1U) != 0; });
      if (std::abs(s) >= threshold) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
  }

  std::uint64_t hits = 0;
  std::vector<std::uint64_t> bits((n + 63) / 64);
  for (std::size_t it = 0; it < iterations; ++it) {
    // Each iteration has its own stream, so the result does not depend on
    // how iterations are scheduled.
    std::uint64_t state = derive_seed(seed, static_cast<std::uint64_t>(it));
    for (auto& word : bits) {
      state += 0x9e3779b97f4a7c15ULL;
      word = mix64(state);
    }
    double s = permuted([&](std::size_t i) { return ((bits[i / 64] >> (i % 64)) & 1U) != 0; });
    if (std::abs(s) >= threshold) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(iterations + 1);
}

void paired_values(const MetricResult& a, const MetricResult& b, std::vector<double>& out_a,
                   std::vector<double>& out_b) {
  out_a.clear();
  out_b.clear();
  for (const auto& [q, v] : a.per_query) {
    auto it = b.per_query.find(q);
    if (it == b.per_query.end()) continue;
    out_a.push_back(v);
    out_b.push_back(it->second);
  }
}

RunFile read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open run " + path.string());
  RunFile run;
  bool tagged = false;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    auto f = split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 6) throw ParseError(n, "expected 6 columns, found " + std::to_string(f.size()));
    RunEntry e;
    e.doc_id = f[2];
    if (!parse_number(f[3], e.rank) || e.rank == 0) throw ParseError(n, "bad rank '" + f[3] + "'");
    if (!parse_number(f[4], e.score) || !std::isfinite(e.score)) throw ParseError(n, "bad score '" + f[4] + "'");
    auto& ranking = run.queries[f[0]];
    if (e.rank != ranking.size() + 1)
      throw ParseError(n, "rank " + f[3] + " breaks the contiguous sequence for query " + f[0]);
    if (!ranking.empty() && e.score > ranking.back().score)
      throw ParseError(n, "score increases with rank for query " + f[0]);
    if (!tagged) {
      run.tag = f[5];
      tagged = true;
    }
    ranking.push_back(std::move(e));
  }
  return run;
}

void write_run(const RunFile& run, const std::filesystem::path& path) {
  AtomicFile file(path);
  for (const auto& [query, ranking] : run.queries)
    for (const auto& e : ranking)
      file.stream() << query << " Q0 " << e.doc_id << ' ' << e.rank << ' ' << format_double(e.score) << ' '
                    << run.tag << '\n';
  file.commit();
}

Qrels read_qrels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open qrels " + path.string());
  Qrels qrels;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    auto f = split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 4) throw ParseError(n, "expected 4 columns, found " + std::to_string(f.size()));
    int grade = 0;
    if (!parse_number(f[3], grade)) throw ParseError(n, "bad grade '" + f[3] + "'");
    if (grade < 0 || grade > kMaxGrade) throw ParseError(n, "grade " + f[3] + " outside [0, 3]");
    qrels.judgments[f[0]][f[2]] = grade;
  }
  return qrels;
}

void write_qrels(const Qrels& qrels, const std::filesystem::path& path) {
  AtomicFile file(path);
  for (const auto& [query, judged] : qrels.judgments)
    for (const auto& [doc, grade] : judged) file.stream() << query << " 0 " << doc << ' ' << grade << '\n';
  file.commit();
}

std::vector<MetricSpec> parse_metric_list(const std::string& list) {
  std::vector<MetricSpec> specs;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    auto at = item.find('@');
    MetricSpec spec;
    spec.name = item.substr(0, at);
    if (spec.name != "recall" && spec.name != "ndcg" && spec.name != "mrr" && spec.name != "precision")
      throw Error(ErrorCode::InvalidConfig, "unknown metric '" + spec.name + "'");
    if (at == std::string::npos || !parse_number(item.substr(at + 1), spec.k) || spec.k == 0)
      throw Error(ErrorCode::InvalidConfig, "metric '" + item + "' needs a cutoff like @10");
    specs.push_back(spec);
  }
  if (specs.empty()) throw Error(ErrorCode::InvalidConfig, "no metrics requested");
  return specs;
}

MetricResult evaluate_metric(const MetricSpec& spec, const RunFile& run, const Qrels& qrels, const GradeSet& relevant,
                             Gain gain) {
  if (spec.name == "recall") return recall_at_k(run, qrels, spec.k, relevant);
  if (spec.name == "precision") return precision_at_k(run, qrels, spec.k, relevant);
  if (spec.name == "mrr") return mrr_at_k(run, qrels, spec.k, relevant);
  if (spec.name == "ndcg") return ndcg_at_k(run, qrels, spec.k, gain);
  throw Error(ErrorCode::InvalidConfig, "unknown metric '" + spec.name + "'");
}

}  // namespace casekit

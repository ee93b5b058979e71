#include "casekit/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <sstream>

#include "casekit/error.hpp"
#include "casekit/io.hpp"

namespace casekit {

Qrels judgment_qrels(const Corpus& corpus, const std::vector<std::string>& query_ids) {
  // Group cases by judgment once instead of comparing all pairs.
  std::map<std::pair<std::set<std::string>, std::set<std::string>>, std::vector<std::string>> by_judgment;
  for (const auto& doc : corpus) by_judgment[{doc.crimes, doc.provisions}].push_back(doc.id);
  Qrels qrels;
  for (const auto& id : query_ids) {
    const auto* query = corpus.find(id);
    if (query == nullptr) throw Error(ErrorCode::UnknownDoc, id);
    auto& judged = qrels.judgments[id];
    for (const auto& other : by_judgment.at({query->crimes, query->provisions}))
      if (other != id) judged[other] = kMaxGrade;
  }
  return qrels;
}

std::vector<std::string> leading_ids(const Corpus& corpus, std::size_t n) {
  if (n == 0 || n > corpus.size()) n = corpus.size();
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(corpus[i].id);
  return ids;
}

RunFile dense_run(const DualModel& model, const Vocabulary& vocab, const Corpus& corpus,
                  const std::vector<std::string>& query_ids, std::size_t k, std::size_t max_len,
                  const std::string& tag) {
  std::vector<Vector> vectors;
  vectors.reserve(corpus.size());
  for (const auto& doc : corpus) vectors.push_back(encode(model, vocab.encode(doc.fact, max_len)));

  RunFile run;
  run.tag = tag;
  for (const auto& id : query_ids) {
    auto qi = corpus.index_of(id);
    if (!qi) throw Error(ErrorCode::UnknownDoc, id);
    const auto& q = vectors[*qi];
    std::vector<ScoredDoc> scored;
    scored.reserve(corpus.size());
    for (std::size_t d = 0; d < corpus.size(); ++d) {
      if (d == *qi) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < q.size(); ++c) s += q[c] * vectors[d][c];
      scored.push_back({corpus[d].id, s});
    }
    sort_ranked(scored);
    if (scored.size() > k) scored.resize(k);
    auto& ranking = run.queries[id];
    for (std::size_t r = 0; r < scored.size(); ++r) ranking.push_back({scored[r].doc_id, scored[r].score, r + 1});
  }
  return run;
}

RunFile bm25_run(const InvertedIndex& index, const Corpus& corpus, const std::vector<std::string>& query_ids,
                 std::size_t k, const BM25Params& params, const std::string& tag) {
  RunFile run;
  run.tag = tag;
  for (const auto& id : query_ids) {
    const auto* query = corpus.find(id);
    if (query == nullptr) throw Error(ErrorCode::UnknownDoc, id);
    auto hits = search_bm25(index, tokenize(query->fact, index.scheme()), k, params, id);
    auto& ranking = run.queries[id];
    for (std::size_t r = 0; r < hits.size(); ++r) ranking.push_back({hits[r].doc_id, hits[r].score, r + 1});
  }
  return run;
}

std::string task_set_name(const std::set<Task>& tasks) {
  if (tasks.empty()) return "untrained";
  std::string name;
  for (Task t : {Task::LAM, Task::LJP, Task::FDM}) {
    if (!tasks.contains(t)) continue;
    if (!name.empty()) name += "+";
    name += to_string(t);
  }
  return name;
}

const AblationRow& AblationReport::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return r;
  throw Error(ErrorCode::InvalidConfig, "no ablation row named " + name);
}

std::string AblationReport::to_tsv(std::size_t recall_k) const {
  std::ostringstream out;
  out << "config\trecall@" << recall_k << "\tndcg@10\tmrr@10\tqueries\tp_vs_full\n";
  for (const auto& r : rows) {
    out << r.name << '\t' << format_double(r.recall.mean) << '\t' << format_double(r.ndcg.mean) << '\t'
        << format_double(r.mrr.mean) << '\t' << r.recall.per_query.size() << '\t' << format_double(r.p_vs_full)
        << '\n';
  }
  return out.str();
}

AblationReport run_ablation(const Corpus& corpus, const AblationConfig& cfg, const std::filesystem::path& work_dir) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot run ablation on an empty corpus");
  AblationReport report;
  const auto data_dir = work_dir / "data";
  report.manifest = build_dataset(corpus, {Task::LAM, Task::LJP, Task::FDM}, cfg.sampler, data_dir, cfg.dataset);

  TrainConfig all_tasks = cfg.train;
  all_tasks.task_weights = {1.0, 1.0, 1.0};
  all_tasks.architecture = Architecture::Dual;
  const auto vocab = Vocabulary::build(corpus, cfg.dataset.scheme);
  const auto data = load_training_data(corpus, vocab, data_dir, all_tasks);

  const auto queries = leading_ids(corpus, cfg.eval_queries);
  const auto qrels = judgment_qrels(corpus, queries);

  auto evaluate = [&](const DualModel& model, AblationRow& row) {
    auto run = dense_run(model, vocab, corpus, queries, std::max<std::size_t>(cfg.recall_k, 10),
                         cfg.train.max_len, row.name);
    row.recall = recall_at_k(run, qrels, cfg.recall_k);
    row.ndcg = ndcg_at_k(run, qrels, 10);
    row.mrr = mrr_at_k(run, qrels, 10);
  };

  {
    AblationRow row;
    row.name = "untrained";
    row.model = DualModel::init(vocab.size(), cfg.train.dim, cfg.train.init_scale, cfg.train.seed);
    evaluate(row.model, row);
    report.rows.push_back(std::move(row));
  }
  const std::vector<std::set<Task>> subsets = {
      {Task::LAM}, {Task::LJP}, {Task::FDM}, {Task::LAM, Task::LJP}, {Task::LAM, Task::FDM},
      {Task::LJP, Task::FDM}, {Task::LAM, Task::LJP, Task::FDM}};
  for (const auto& tasks : subsets) {
    AblationRow row;
    row.tasks = tasks;
    row.name = task_set_name(tasks);
    TrainConfig tc = all_tasks;
    tc.task_weights = {tasks.contains(Task::LAM) ? 1.0 : 0.0, tasks.contains(Task::LJP) ? 1.0 : 0.0,
                       tasks.contains(Task::FDM) ? 1.0 : 0.0};
    spdlog::info("ablation: training {}", row.name);
    auto result = train(data, vocab, tc);
    row.loss_curve = result.loss_curve;
    row.model = std::move(std::get<DualModel>(result.checkpoint.model));
    evaluate(row.model, row);
    report.rows.push_back(std::move(row));
  }

  const auto& full = report.rows.back();
  std::vector<double> a, b;
  for (auto& row : report.rows) {
    if (&row == &full) continue;
    paired_values(full.recall, row.recall, a, b);
    if (!a.empty()) row.p_vs_full = fisher_randomization(a, b, cfg.sig_iterations, cfg.sig_seed);
  }
  return report;
}

}  // namespace casekit

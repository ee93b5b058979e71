#include <gtest/gtest.h>

#include "casekit/pipeline.hpp"
#include "casekit/synth.hpp"
#include "oracles.hpp"

using namespace casekit;

namespace {

Corpus synthetic(std::size_t n) {
  auto cfg = SynthConfig::standard();
  cfg.n_cases = n;
  return generate_corpus(cfg);
}

}  // namespace

TEST(JudgmentQrels, SameJudgmentOnlyAndNoSelf) {
  auto corpus = synthetic(200);
  auto ids = leading_ids(corpus, 20);
  ASSERT_EQ(ids.size(), 20u);
  EXPECT_EQ(ids[3], corpus[3].id);
  EXPECT_EQ(leading_ids(corpus, 0).size(), 200u);
  auto qrels = judgment_qrels(corpus, ids);
  for (const auto& q : ids) {
    const auto* qd = corpus.find(q);
    std::size_t expected = 0;
    for (const auto& d : corpus) expected += d.id != q && d.crimes == qd->crimes && d.provisions == qd->provisions;
    auto it = qrels.judgments.find(q);
    const std::size_t got = it == qrels.judgments.end() ? 0 : it->second.size();
    EXPECT_EQ(got, expected);
    if (it == qrels.judgments.end()) continue;
    EXPECT_EQ(it->second.count(q), 0u);
    for (const auto& [d, g] : it->second) EXPECT_EQ(g, 3);
  }
}

TEST(DenseRun, ExcludesSelfAndSortsByInnerProduct) {
  auto corpus = synthetic(60);
  auto vocab = Vocabulary::build(corpus, TokenScheme::Mixed);
  auto model = DualModel::init(vocab.size(), 8, 0.3, 2);
  auto run = dense_run(model, vocab, corpus, leading_ids(corpus, 5), 10);
  ASSERT_EQ(run.queries.size(), 5u);
  for (const auto& [q, ranking] : run.queries) {
    ASSERT_EQ(ranking.size(), 10u);
    const auto qt = vocab.encode(corpus.find(q)->fact, 510);
    for (std::size_t r = 0; r < ranking.size(); ++r) {
      EXPECT_NE(ranking[r].doc_id, q);
      EXPECT_EQ(ranking[r].rank, r + 1);
      EXPECT_NEAR(ranking[r].score, score_dual(model, qt, vocab.encode(corpus.find(ranking[r].doc_id)->fact, 510)),
                  1e-12);
      if (r) EXPECT_GE(ranking[r - 1].score, ranking[r].score);
    }
  }
}

TEST(Bm25Run, MatchesSearch) {
  auto corpus = synthetic(100);
  auto index = build_index(corpus, TokenScheme::Mixed);
  auto run = bm25_run(index, corpus, leading_ids(corpus, 3), 20);
  for (const auto& [q, ranking] : run.queries) {
    auto hits = search_bm25(index, tokenize(corpus.find(q)->fact, TokenScheme::Mixed), 20, {}, q);
    ASSERT_EQ(ranking.size(), hits.size());
    for (std::size_t r = 0; r < hits.size(); ++r) EXPECT_EQ(ranking[r].doc_id, hits[r].doc_id);
  }
}

TEST(TaskSetName, Canonical) {
  EXPECT_EQ(task_set_name({}), "untrained");
  EXPECT_EQ(task_set_name({Task::FDM, Task::LJP}), "LJP+FDM");
  EXPECT_EQ(task_set_name({Task::FDM, Task::LAM, Task::LJP}), "LAM+LJP+FDM");
}

TEST(Ablation, SevenSubsetsPlusBaseline) {
  oracle::TempDir dir("ablate");
  AblationConfig cfg;
  cfg.sampler.negatives_cap = 8;
  cfg.sampler.positives_cap = 1;
  cfg.train.epochs = 1;
  cfg.train.dim = 8;
  cfg.eval_queries = 30;
  cfg.sig_iterations = 200;
  auto report = run_ablation(synthetic(150), cfg, dir.path());
  ASSERT_EQ(report.rows.size(), 8u);
  std::set<std::string> names;
  for (const auto& r : report.rows) {
    names.insert(r.name);
    EXPECT_LE(r.recall.per_query.size(), 30u);
    EXPECT_GE(r.p_vs_full, 0.0);
    EXPECT_LE(r.p_vs_full, 1.0);
    EXPECT_EQ(r.tasks.empty(), r.loss_curve.empty());
  }
  EXPECT_EQ(names.size(), 8u);
  EXPECT_EQ(report.row("untrained").tasks.size(), 0u);
  EXPECT_EQ(report.row("LAM+LJP+FDM").p_vs_full, 1.0);
  EXPECT_THROW(report.row("nope"), std::exception);
  auto tsv = report.to_tsv(100);
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 9);
}

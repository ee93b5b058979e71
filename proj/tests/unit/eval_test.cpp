#include <gtest/gtest.h>

#include <cmath>

#include "casekit/error.hpp"
#include "casekit/eval.hpp"
#include "casekit/io.hpp"
#include "oracles.hpp"

using namespace casekit;

namespace {

RunFile one_query(const std::vector<std::string>& docs) {
  RunFile run;
  auto& r = run.queries["q"];
  for (std::size_t i = 0; i < docs.size(); ++i) r.push_back({docs[i], 10.0 - static_cast<double>(i), i + 1});
  return run;
}

Qrels judged(const std::map<std::string, int>& grades) {
  Qrels q;
  for (const auto& [d, g] : grades) q.set("q", d, g);
  return q;
}

std::vector<std::string> ids_of(const std::vector<RunEntry>& ranking) {
  std::vector<std::string> ids;
  for (const auto& e : ranking) ids.push_back(e.doc_id);
  return ids;
}

}  // namespace

TEST(Recall, Examples) {
  auto qrels = judged({{"a", 2}, {"b", 3}});
  EXPECT_EQ(recall_at_k(one_query({"a", "b", "c"}), qrels, 2).mean, 1.0);
  EXPECT_EQ(recall_at_k(one_query({"c", "d"}), qrels, 2).mean, 0.0);
  EXPECT_EQ(recall_at_k(one_query({"a", "c", "b"}), qrels, 2).mean, 0.5);
}

TEST(Recall, GradeOneIsNotRelevantByDefault) {
  auto qrels = judged({{"a", 1}, {"b", 2}});
  EXPECT_EQ(recall_at_k(one_query({"a"}), qrels, 1).mean, 0.0);
  EXPECT_EQ(recall_at_k(one_query({"a"}), qrels, 1, GradeSet::at_least(1)).mean, 0.5);
  EXPECT_EQ(recall_at_k(one_query({"a"}), qrels, 1, GradeSet::of({1})).mean, 1.0);
  EXPECT_THROW(GradeSet::of({7}), Error);
}

TEST(Recall, QueriesWithoutRelevantAreSkipped) {
  Qrels qrels;
  qrels.set("q", "a", 3);
  qrels.set("empty", "a", 0);
  auto r = recall_at_k(one_query({"a"}), qrels, 5);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.per_query.size(), 1u);
  EXPECT_EQ(r.mean, 1.0);
}

TEST(Recall, MissingRunScoresZero) {
  Qrels qrels;
  qrels.set("q", "a", 3);
  qrels.set("other", "a", 3);
  auto r = recall_at_k(one_query({"a"}), qrels, 5);
  EXPECT_EQ(r.per_query.at("other"), 0.0);
  EXPECT_EQ(r.mean, 0.5);
}

TEST(Ndcg, Examples) {
  auto qrels = judged({{"a", 3}, {"b", 2}, {"c", 1}});
  EXPECT_NEAR(ndcg_at_k(one_query({"a", "b", "c"}), qrels, 3).mean, 1.0, 1e-15);
  EXPECT_EQ(ndcg_at_k(one_query({"x", "y"}), qrels, 2).mean, 0.0);
}

TEST(Ndcg, WorkedExample) {
  auto qrels = judged({{"a", 3}, {"b", 0}, {"c", 2}});
  // DCG = 3/1 + 0/log2(3) + 2/log2(4) = 4; IDCG = 3 + 2/log2(3).
  const double want = 4.0 / (3.0 + 2.0 / std::log2(3.0));
  const double got = ndcg_at_k(one_query({"a", "b", "c"}), qrels, 3).mean;
  EXPECT_NEAR(got, want, 1e-15);
  EXPECT_NEAR(got, 0.93856, 1e-5);
}

TEST(Ndcg, ExponentialGain) {
  auto qrels = judged({{"a", 3}, {"b", 0}, {"c", 2}});
  const double want = (7.0 + 3.0 / 2.0) / (7.0 + 3.0 / std::log2(3.0));
  EXPECT_NEAR(ndcg_at_k(one_query({"a", "b", "c"}), qrels, 3, Gain::Exponential).mean, want, 1e-15);
}

TEST(Mrr, Examples) {
  auto qrels = judged({{"r", 2}});
  EXPECT_EQ(mrr_at_k(one_query({"r", "x"}), qrels, 10).mean, 1.0);
  EXPECT_EQ(mrr_at_k(one_query({"x", "y", "z", "r"}), qrels, 10).mean, 0.25);
  EXPECT_EQ(mrr_at_k(one_query({"x", "y", "z", "r"}), qrels, 3).mean, 0.0);
}

TEST(Precision, Examples) {
  auto qrels = judged({{"a", 2}, {"b", 3}, {"c", 3}});
  EXPECT_EQ(precision_at_k(one_query({"a", "x", "b", "y", "z"}), qrels, 5).mean, 0.4);
  EXPECT_EQ(precision_at_k(one_query({"a", "b"}), qrels, 2).mean, 1.0);
  EXPECT_EQ(precision_at_k(one_query({}), qrels, 5).mean, 0.0);
}

TEST(Metrics, MatchBruteForceOnRandomInstances) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    RunFile run;
    Qrels qrels;
    oracle::random_run_qrels(rng, 1 + rng.index(20), 1 + rng.index(50), run, qrels);
    const std::size_t k = 1 + rng.index(30);
    auto r = recall_at_k(run, qrels, k);
    auto p = precision_at_k(run, qrels, k);
    auto m = mrr_at_k(run, qrels, k);
    auto n = ndcg_at_k(run, qrels, k);
    for (const auto& [qid, grades] : qrels.judgments) {
      if (oracle::n_relevant(grades) == 0) {
        EXPECT_EQ(r.per_query.count(qid), 0u);
        continue;
      }
      auto it = run.queries.find(qid);
      const auto ranked = it == run.queries.end() ? std::vector<std::string>{} : ids_of(it->second);
      EXPECT_NEAR(r.per_query.at(qid), oracle::recall(ranked, grades, k), 1e-12);
      EXPECT_NEAR(p.per_query.at(qid), oracle::precision(ranked, grades, k), 1e-12);
      EXPECT_NEAR(m.per_query.at(qid), oracle::mrr(ranked, grades, k), 1e-12);
      EXPECT_NEAR(n.per_query.at(qid), oracle::ndcg(ranked, grades, k), 1e-12);
    }
  }
}

TEST(Metrics, BoundedInUnitInterval) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    RunFile run;
    Qrels qrels;
    oracle::random_run_qrels(rng, 10, 30, run, qrels);
    for (auto* fn : {&recall_at_k, &precision_at_k, &mrr_at_k})
      for (const auto& [q, v] : fn(run, qrels, 10, {}).per_query) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    for (const auto& [q, v] : ndcg_at_k(run, qrels, 10).per_query) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0 + 1e-15);
    }
  }
}

TEST(PairwiseAccuracy, Examples) {
  using P = PairwiseJudgment;
  EXPECT_EQ(pairwise_accuracy({{2, 1, Preferred::A}, {0, 3, Preferred::B}}), 1.0);
  EXPECT_EQ(pairwise_accuracy({{1, 1, Preferred::A}, {2, 2, Preferred::B}}), 0.5);
  EXPECT_EQ(pairwise_accuracy({P{2, 1, Preferred::A}, P{2, 1, Preferred::A}, P{0, 1, Preferred::B},
                               P{0, 1, Preferred::A}}),
            0.75);
}

TEST(Fisher, IdenticalInputsGiveOne) {
  std::vector<double> a{0.1, 0.5, 0.3, 0.9};
  EXPECT_EQ(fisher_randomization(a, a, 1000, 1), 1.0);
  std::vector<double> big(50, 0.4);
  EXPECT_EQ(fisher_randomization(big, big, 1000, 1), 1.0);
}

TEST(Fisher, TwoQueryEnumeration) {
  EXPECT_EQ(fisher_randomization({1, 1}, {0, 0}, 100000, 1), 0.5);
  EXPECT_EQ(oracle::fisher_exact({1, 1}, {0, 0}), 0.5);
}

TEST(Fisher, ExactMatchesIndependentEnumeration) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(12);
    std::vector<double> a(n);
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = std::round(rng.uniform() * 4) / 4;
      b[i] = std::round(rng.uniform() * 4) / 4;
    }
    EXPECT_EQ(fisher_randomization(a, b, 1u << 12, 5), oracle::fisher_exact(a, b));
  }
}

TEST(Fisher, SymmetricInArguments) {
  Rng rng(4);
  std::vector<double> a(40);
  std::vector<double> b(40);
  for (std::size_t i = 0; i < 40; ++i) {
    a[i] = rng.uniform();
    b[i] = rng.uniform() + 0.05;
  }
  EXPECT_EQ(fisher_randomization(a, b, 5000, 9), fisher_randomization(b, a, 5000, 9));
  EXPECT_EQ(fisher_randomization(a, b, 5000, 9), fisher_randomization(a, b, 5000, 9));
}

TEST(Fisher, SampledApproximatesExact) {
  Rng rng(8);
  std::vector<double> a(16);
  std::vector<double> b(16);
  for (std::size_t i = 0; i < 16; ++i) {
    a[i] = rng.uniform();
    b[i] = rng.uniform() + 0.1;
  }
  const double exact = oracle::fisher_exact(a, b);
  const double sampled = fisher_randomization(a, b, 20000, 3);
  EXPECT_NEAR(sampled, exact, 0.02);
}

TEST(Fisher, PlantedImprovementIsSignificant) {
  Rng rng(23);
  std::vector<double> a(50);
  std::vector<double> b(50);
  for (std::size_t i = 0; i < 50; ++i) {
    b[i] = rng.uniform(0.0, 0.8);
    a[i] = b[i] + 0.2;
  }
  EXPECT_LT(fisher_randomization(a, b, 100000, 7), 0.01);
}

TEST(Fisher, LengthMismatch) {
  EXPECT_THROW(fisher_randomization({1, 2}, {1}, 10, 1), Error);
  EXPECT_THROW(fisher_randomization({}, {}, 10, 1), Error);
}

TEST(RunFiles, RoundTrip) {
  oracle::TempDir dir("eval");
  Rng rng(3);
  RunFile run;
  Qrels qrels;
  oracle::random_run_qrels(rng, 10, 20, run, qrels);
  std::size_t lines = 0;
  for (const auto& [q, r] : run.queries) lines += r.size();
  ASSERT_GE(lines, 50u);
  run.tag = "sys";
  write_run(run, dir / "a.run");
  auto back = read_run(dir / "a.run");
  EXPECT_EQ(back.tag, "sys");
  EXPECT_EQ(back.queries.size(), std::count_if(run.queries.begin(), run.queries.end(),
                                               [](const auto& kv) { return !kv.second.empty(); }));
  for (const auto& [q, r] : back.queries) {
    ASSERT_EQ(r.size(), run.queries.at(q).size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_EQ(r[i].doc_id, run.queries.at(q)[i].doc_id);
      EXPECT_EQ(r[i].score, run.queries.at(q)[i].score);
      EXPECT_EQ(r[i].rank, i + 1);
    }
  }
  write_run(back, dir / "b.run");
  EXPECT_EQ(read_file(dir / "a.run"), read_file(dir / "b.run"));
  write_qrels(qrels, dir / "q.txt");
  EXPECT_EQ(read_qrels(dir / "q.txt").judgments, qrels.judgments);
}

TEST(RunFiles, RankGapIsParseError) {
  oracle::TempDir dir("eval");
  write_file_atomically(dir / "r.run", "q Q0 a 1 2.0 t\nq Q0 b 3 1.0 t\n");
  try {
    read_run(dir / "r.run");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(RunFiles, RisingScoreAndBadColumnsAreParseErrors) {
  oracle::TempDir dir("eval");
  write_file_atomically(dir / "r.run", "q Q0 a 1 1.0 t\nq Q0 b 2 2.0 t\n");
  EXPECT_THROW(read_run(dir / "r.run"), ParseError);
  write_file_atomically(dir / "s.run", "q Q0 a 1\n");
  EXPECT_THROW(read_run(dir / "s.run"), ParseError);
}

TEST(RunFiles, GradeOutOfRangeIsParseError) {
  oracle::TempDir dir("eval");
  write_file_atomically(dir / "q.txt", "q 0 a 2\nq 0 b 7\n");
  try {
    read_qrels(dir / "q.txt");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(MetricList, ParsesAndRejects) {
  auto specs = parse_metric_list("recall@100,ndcg@10,mrr@5,precision@3");
  ASSERT_EQ(specs.size(), 4u);
  EXPECT_EQ(specs[0].label(), "recall@100");
  EXPECT_EQ(specs[3].k, 3u);
  EXPECT_THROW(parse_metric_list("map@10"), Error);
  EXPECT_THROW(parse_metric_list("recall@0"), Error);
  EXPECT_THROW(parse_metric_list("recall"), Error);
}

TEST(Metrics, GradeOneQueriesCountForNdcgOnly) {
  RunFile run;
  run.queries["weak"] = {{"a", 2.0, 1}, {"b", 1.0, 2}};
  run.queries["strong"] = {{"c", 1.0, 1}};
  Qrels qrels;
  qrels.set("weak", "a", 0);
  qrels.set("weak", "b", 1);
  qrels.set("strong", "c", 3);
  EXPECT_EQ(recall_at_k(run, qrels, 10).per_query.count("weak"), 0u);
  const auto n = ndcg_at_k(run, qrels, 10);
  ASSERT_EQ(n.per_query.count("weak"), 1u);
  EXPECT_NEAR(n.per_query.at("weak"), (1.0 / std::log2(3.0)) / 1.0, 1e-12);
  EXPECT_NEAR(n.mean, (1.0 + 1.0 / std::log2(3.0)) / 2.0, 1e-12);
}

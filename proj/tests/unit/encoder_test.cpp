#include <gtest/gtest.h>

#include <cmath>

#include "casekit/encoder.hpp"
#include "casekit/error.hpp"
#include "casekit/io.hpp"
#include "casekit/synth.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace casekit;

namespace {

Vector mean_then_project(const DualModel& m, const TokenIds& t) {
  Vector mean(m.dim, 0.0);
  for (auto id : t)
    for (std::size_t c = 0; c < m.dim; ++c) mean[c] += m.embeddings(id, c) / static_cast<double>(t.size());
  Vector out(m.dim, 0.0);
  for (std::size_t r = 0; r < m.dim; ++r)
    for (std::size_t c = 0; c < m.dim; ++c) out[r] += m.projection(r, c) * mean[c];
  return out;
}

double cross_by_hand(const CrossModel& m, const TokenIds& q, const TokenIds& d) {
  Vector x(m.dim, 0.0);
  const double n = static_cast<double>(q.size() + d.size());
  for (auto id : q)
    for (std::size_t c = 0; c < m.dim; ++c) x[c] += (m.embeddings(id, c) + m.segments(0, c)) / n;
  for (auto id : d)
    for (std::size_t c = 0; c < m.dim; ++c) x[c] += (m.embeddings(id, c) + m.segments(1, c)) / n;
  double s = m.output_bias;
  for (std::size_t h = 0; h < m.hidden; ++h) {
    double z = m.hidden_bias[h];
    for (std::size_t c = 0; c < m.dim; ++c) z += m.hidden_weights(h, c) * x[c];
    s += m.output_weights[h] * std::tanh(z);
  }
  return s;
}

DualModel random_dual(std::uint64_t seed, std::uint32_t vocab = 12, std::size_t dim = 4) {
  auto m = DualModel::init(vocab, dim, 0.5, seed);
  Rng rng(seed + 1000);
  for (auto& x : m.projection.data) x = rng.uniform(-1.0, 1.0);
  return m;
}

CrossModel random_cross(std::uint64_t seed, std::uint32_t vocab = 12) {
  auto m = CrossModel::init(vocab, 4, 3, 0.5, seed);
  Rng rng(seed + 2000);
  for (auto& x : m.hidden_bias) x = rng.uniform(-0.5, 0.5);
  m.output_bias = rng.uniform(-0.5, 0.5);
  return m;
}

Corpus synthetic(std::size_t n) {
  auto cfg = SynthConfig::standard();
  cfg.n_cases = n;
  return generate_corpus(cfg);
}

}  // namespace

TEST(Encode, SingleTokenIsEmbeddingRow) {
  auto m = DualModel::init(10, 4, 0.05, 3);
  auto v = encode(m, TokenIds{7});
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(v[c], m.embeddings(7, c));
}

TEST(Encode, RepeatedTokenSameAsSingle) {
  auto m = random_dual(5);
  auto a = encode(m, TokenIds{3});
  auto b = encode(m, TokenIds{3, 3});
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(a[c], b[c], 1e-15);
}

TEST(Encode, MatchesStraightLineRecomputation) {
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    auto m = random_dual(static_cast<std::uint64_t>(i));
    auto t = oracle::random_tokens(rng, 12, 8, 8);
    auto got = encode(m, t);
    auto want = mean_then_project(m, t);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(got[c], want[c], 1e-12);
  }
}

TEST(Encode, RejectsEmptyAndOutOfVocab) {
  auto m = DualModel::init(5, 4, 0.05, 1);
  EXPECT_THROW(encode(m, TokenIds{}), Error);
  EXPECT_THROW(encode(m, TokenIds{5}), Error);
}

TEST(ScoreDual, SelfScoreIsSquaredNorm) {
  auto m = random_dual(2);
  TokenIds t{1, 4, 9};
  auto v = encode(m, t);
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  EXPECT_NEAR(score_dual(m, t, t), norm2, 1e-12);
  EXPECT_GE(score_dual(m, t, t), 0.0);
}

TEST(ScoreDual, SymmetricExactly) {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    auto m = random_dual(static_cast<std::uint64_t>(i));
    auto a = oracle::random_tokens(rng, 12, 1, 7);
    auto b = oracle::random_tokens(rng, 12, 1, 7);
    EXPECT_EQ(score_dual(m, a, b), score_dual(m, b, a));
  }
}

TEST(ScoreDual, ZeroModelScoresZero) {
  auto m = DualModel::zeros(6, 4);
  EXPECT_EQ(score_dual(m, TokenIds{1, 2}, TokenIds{3}), 0.0);
}

TEST(ScoreCross, OnlyOutputBias) {
  auto m = CrossModel::zeros(6, 4, 3);
  m.output_bias = 0.37;
  EXPECT_EQ(score_cross(m, TokenIds{1, 2}, TokenIds{3}), 0.37);
  EXPECT_EQ(score_cross(m, TokenIds{5}, TokenIds{0, 0, 4}), 0.37);
}

TEST(ScoreCross, MatchesStraightLineRecomputation) {
  Rng rng(6);
  for (int i = 0; i < 30; ++i) {
    auto m = random_cross(static_cast<std::uint64_t>(i));
    auto q = oracle::random_tokens(rng, 12, 1, 6);
    auto d = oracle::random_tokens(rng, 12, 1, 6);
    EXPECT_NEAR(score_cross(m, q, d), cross_by_hand(m, q, d), 1e-12);
  }
}

TEST(ContrastiveLoss, SymmetricCases) {
  EXPECT_NEAR(contrastive_loss(0.3, std::vector<double>{0.3}), std::log(2.0), 1e-12);
  for (int n : {1, 2, 5, 50}) EXPECT_NEAR(contrastive_loss(-1.7, std::vector<double>(n, -1.7)), std::log1p(n), 1e-9);
}

TEST(ContrastiveLoss, MonotoneAndVanishing) {
  const std::vector<double> negs{0.1, -0.4, 0.9};
  double prev = contrastive_loss(-5.0, negs);
  for (double s = -4.5; s < 60.0; s += 0.5) {
    const double cur = contrastive_loss(s, negs);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
  EXPECT_LT(prev, 1e-20);
  auto bumped = negs;
  bumped[1] += 0.25;
  EXPECT_GT(contrastive_loss(0.2, bumped), contrastive_loss(0.2, negs));
}

TEST(ContrastiveLoss, ShiftInvariantAndStable) {
  Rng rng(10);
  for (int i = 0; i < 200; ++i) {
    const double pos = rng.uniform(-5, 5);
    std::vector<double> negs(1 + rng.index(8));
    for (auto& n : negs) n = rng.uniform(-5, 5);
    const double base = contrastive_loss(pos, negs);
    const double c = rng.uniform(-50, 50);
    auto shifted = negs;
    for (auto& n : shifted) n += c;
    EXPECT_NEAR(contrastive_loss(pos + c, shifted), base, 1e-9);
  }
  EXPECT_TRUE(std::isfinite(contrastive_loss(800.0, std::vector<double>{-800.0, 790.0})));
}

TEST(ContrastiveLoss, Errors) {
  EXPECT_THROW(contrastive_loss(0.0, std::vector<double>{}), Error);
  EXPECT_THROW(contrastive_loss(NAN, std::vector<double>{0.0}), Error);
  EXPECT_THROW(contrastive_loss(0.0, std::vector<double>{INFINITY}), Error);
}

TEST(LamLoss, SingletonVocabularyIsZero) {
  auto m = DualModel::init(1, 4, 0.3, 1);
  MaskedSequence s{{Vocabulary::kMask, 0}, {0}, {0}};
  EXPECT_NEAR(lam_loss(m, s), 0.0, 1e-15);
}

TEST(LamLoss, UniformPredictionIsLogV) {
  auto m = DualModel::zeros(9, 4);
  MaskedSequence s{{3, Vocabulary::kMask, 5, Vocabulary::kMask}, {1, 3}, {2, 8}};
  EXPECT_NEAR(lam_loss(m, s), std::log(9.0), 1e-12);
  auto c = CrossModel::zeros(9, 4, 3);
  EXPECT_NEAR(lam_loss(c, s), std::log(9.0), 1e-12);
}

TEST(LamLoss, MatchesRecomputation) {
  Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    auto m = random_dual(static_cast<std::uint64_t>(i), 10);
    auto s = oracle::random_masked(rng, 10);
    TokenIds context;
    for (std::size_t p = 0, next = 0; p < s.token_ids.size(); ++p) {
      if (next < s.masked_positions.size() && s.masked_positions[next] == p) {
        ++next;
        continue;
      }
      context.push_back(s.token_ids[p]);
    }
    auto h = mean_then_project(m, context);
    std::vector<double> logits(10);
    for (std::uint32_t v = 0; v < 10; ++v)
      for (std::size_t c = 0; c < 4; ++c) logits[v] += h[c] * m.embeddings(v, c);
    double z = 0.0;
    for (double l : logits) z += std::exp(l);
    double want = 0.0;
    for (auto o : s.original_tokens) want += std::log(z) - logits[o];
    want /= static_cast<double>(s.original_tokens.size());
    EXPECT_NEAR(lam_loss(m, s), want, 1e-12);
  }
}

TEST(LamLoss, DegenerateSequences) {
  auto m = DualModel::init(5, 4, 0.1, 1);
  try {
    lam_loss(m, MaskedSequence{{Vocabulary::kMask, Vocabulary::kMask}, {0, 1}, {2, 3}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllMasked);
  }
  EXPECT_THROW(lam_loss(m, MaskedSequence{{2, 3}, {}, {}}), Error);
}

TEST(Gradients, DualAllTasksMatchFiniteDifferences) {
  Rng rng(21);
  for (int i = 0; i < 25; ++i) {
    auto m = random_dual(static_cast<std::uint64_t>(i));
    Batch batch;
    batch.lam.push_back(oracle::random_masked(rng, 12));
    batch.ljp.push_back(oracle::random_group(rng, 12));
    batch.fdm.push_back(oracle::random_group(rng, 12));
    auto r = oracle::check_gradient(m, batch, {0.7, 1.3, 0.9});
    EXPECT_LT(r.max_rel, 1e-4) << r.worst;
  }
}

TEST(Gradients, CrossAllTasksMatchFiniteDifferences) {
  Rng rng(22);
  for (int i = 0; i < 25; ++i) {
    auto m = random_cross(static_cast<std::uint64_t>(i));
    Batch batch;
    batch.lam.push_back(oracle::random_masked(rng, 12));
    batch.ljp.push_back(oracle::random_group(rng, 12));
    batch.ljp.push_back(oracle::random_group(rng, 12));
    batch.fdm.push_back(oracle::random_group(rng, 12));
    auto r = oracle::check_gradient(m, batch, {1.0, 1.0, 1.0});
    EXPECT_LT(r.max_rel, 1e-4) << r.worst;
  }
}

TEST(Gradients, BatchGradientIsWeightedMean) {
  Rng rng(5);
  auto m = random_dual(1);
  Batch one;
  one.ljp.push_back(oracle::random_group(rng, 12));
  Batch two = one;
  two.ljp.push_back(one.ljp[0]);
  EXPECT_NEAR(batch_loss(m, two, {1, 1, 1}), batch_loss(m, one, {1, 1, 1}), 1e-14);
  EXPECT_NEAR(batch_loss(m, one, {1, 3, 1}), 3 * batch_loss(m, one, {1, 1, 1}), 1e-12);
}

TEST(GradStep, ZeroLearningRateIsFixedPoint) {
  Rng rng(3);
  auto m = random_cross(4);
  const auto before = m;
  Batch batch;
  batch.ljp.push_back(oracle::random_group(rng, 12));
  batch.lam.push_back(oracle::random_masked(rng, 12));
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  grad_step(m, batch, cfg);
  EXPECT_TRUE(m == before);
}

TEST(GradStep, SmallStepDoesNotIncreaseLoss) {
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    auto m = random_dual(static_cast<std::uint64_t>(i));
    Batch batch;
    batch.ljp.push_back(oracle::random_group(rng, 12));
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    const double before = grad_step(m, batch, cfg).loss;
    EXPECT_LE(batch_loss(m, batch, cfg.task_weights), before);
  }
}

TEST(GradStep, NonFiniteGradientLeavesModelUntouched) {
  auto m = DualModel::init(6, 4, 0.1, 1);
  m.embeddings(2, 1) = NAN;
  const auto before = m;
  Batch batch;
  batch.ljp.push_back({{2}, {3}, {{4}}});
  TrainConfig cfg;
  EXPECT_THROW(grad_step(m, batch, cfg), Error);
  EXPECT_EQ(m.projection, before.projection);
}

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.task_weights = {0, 0, 0};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.task_weights = {0, 2, 0.5};
  cfg.schedule = Schedule::Mixed;
  cfg.architecture = Architecture::Cross;
  EXPECT_EQ(TrainConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
  cfg.learning_rate = -1;
  EXPECT_THROW(cfg.validate(), Error);
}

class TrainingFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new oracle::TempDir("train");
    corpus_ = new Corpus(synthetic(400));
    SamplerConfig cfg;
    cfg.seed = 5;
    cfg.negatives_cap = 8;
    cfg.positives_cap = 1;
    build_dataset(*corpus_, {Task::LAM, Task::LJP, Task::FDM}, cfg, dir_->path());
  }
  static void TearDownTestSuite() {
    delete corpus_;
    delete dir_;
  }
  static TrainConfig small() {
    TrainConfig cfg;
    cfg.dim = 8;
    cfg.hidden = 4;
    cfg.epochs = 2;
    cfg.seed = 3;
    return cfg;
  }
  static oracle::TempDir* dir_;
  static Corpus* corpus_;
};
oracle::TempDir* TrainingFixture::dir_ = nullptr;
Corpus* TrainingFixture::corpus_ = nullptr;

TEST_F(TrainingFixture, ZeroEpochsReturnsInitialization) {
  auto cfg = small();
  cfg.epochs = 0;
  auto r = train(*corpus_, dir_->path(), cfg);
  const auto& vocab = r.checkpoint.vocab;
  EXPECT_TRUE(std::get<DualModel>(r.checkpoint.model) == DualModel::init(vocab.size(), 8, cfg.init_scale, 3));
  for (const auto& rec : r.loss_curve) EXPECT_EQ(rec.epoch, 0u);
}

TEST_F(TrainingFixture, LjpLossDecreases) {
  auto cfg = small();
  cfg.epochs = 20;
  cfg.task_weights = {0, 1, 0};
  auto vocab = Vocabulary::build(*corpus_, TokenScheme::Mixed);
  auto data = load_training_data(*corpus_, vocab, dir_->path(), cfg);
  data.ljp.resize(std::min<std::size_t>(200, data.ljp.size()));
  ASSERT_EQ(data.ljp.size(), 200u);
  auto r = train(data, vocab, cfg);
  ASSERT_FALSE(r.loss_curve.empty());
  EXPECT_EQ(r.loss_curve.front().epoch, 0u);
  EXPECT_EQ(r.loss_curve.back().epoch, 20u);
  EXPECT_LT(r.loss_curve.back().mean_loss, r.loss_curve.front().mean_loss);
}

TEST_F(TrainingFixture, SameSeedGivesBitIdenticalCheckpoints) {
  for (auto arch : {Architecture::Dual, Architecture::Cross}) {
    auto cfg = small();
    cfg.architecture = arch;
    auto a = train(*corpus_, dir_->path(), cfg);
    auto b = train(*corpus_, dir_->path(), cfg);
    a.checkpoint.save(dir_->path() / "a.bin");
    b.checkpoint.save(dir_->path() / "b.bin");
    EXPECT_EQ(read_file(dir_->path() / "a.bin"), read_file(dir_->path() / "b.bin"));
    auto loaded = Checkpoint::load(dir_->path() / "a.bin");
    EXPECT_EQ(loaded.model, a.checkpoint.model);
    EXPECT_EQ(loaded.vocab, a.checkpoint.vocab);
    EXPECT_EQ(loaded.config.to_json(), cfg.to_json());
  }
}

TEST_F(TrainingFixture, MixedScheduleAndStaticMaskingRun) {
  auto cfg = small();
  cfg.schedule = Schedule::Mixed;
  cfg.dynamic_masking = false;
  auto r = train(*corpus_, dir_->path(), cfg);
  EXPECT_TRUE(all_finite(std::get<DualModel>(r.checkpoint.model)));
  write_loss_curve(r.loss_curve, dir_->path() / "loss.csv");
  auto csv = read_file(dir_->path() / "loss.csv");
  EXPECT_EQ(csv.rfind("epoch,task,mean_loss\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), r.loss_curve.size() + 1);
}

TEST_F(TrainingFixture, HeldOutPositivesOutscoreNegatives) {
  auto cfg = small();
  cfg.dim = 16;
  cfg.epochs = 10;
  cfg.task_weights = {0, 1, 0};
  auto vocab = Vocabulary::build(*corpus_, TokenScheme::Mixed);
  auto data = load_training_data(*corpus_, vocab, dir_->path(), cfg);
  ASSERT_GT(data.ljp.size(), 100u);
  const std::size_t split = data.ljp.size() * 3 / 4;
  std::vector<TokenizedGroup> held(data.ljp.begin() + static_cast<long>(split), data.ljp.end());
  data.ljp.resize(split);
  auto r = train(data, vocab, cfg);
  const auto& m = std::get<DualModel>(r.checkpoint.model);
  double pos = 0.0;
  double neg = 0.0;
  std::size_t n_neg = 0;
  for (const auto& g : held) {
    pos += score_dual(m, g.query, g.positive);
    for (const auto& n : g.negatives) {
      neg += score_dual(m, g.query, n);
      ++n_neg;
    }
  }
  EXPECT_GT(pos / static_cast<double>(held.size()), neg / static_cast<double>(n_neg));
}

TEST_F(TrainingFixture, ExportEmbeddings) {
  auto r = train(*corpus_, dir_->path(), small());
  const auto& m = std::get<DualModel>(r.checkpoint.model);
  const auto& vocab = r.checkpoint.vocab;
  export_embeddings(m, vocab, Corpus{}, dir_->path() / "empty.tsv");
  EXPECT_EQ(read_file(dir_->path() / "empty.tsv"), "");
  Corpus one({(*corpus_)[0]});
  export_embeddings(m, vocab, one, dir_->path() / "one.tsv");
  std::string want = (*corpus_)[0].id;
  for (double x : encode(m, vocab.encode((*corpus_)[0].fact, 510))) want += "\t" + format_double(x);
  EXPECT_EQ(read_file(dir_->path() / "one.tsv"), want + "\n");
  export_embeddings(m, vocab, *corpus_, dir_->path() / "a.tsv");
  export_embeddings(m, vocab, *corpus_, dir_->path() / "b.tsv");
  EXPECT_EQ(read_file(dir_->path() / "a.tsv"), read_file(dir_->path() / "b.tsv"));
}

TEST_F(TrainingFixture, MissingDataIsEmptyDataset) {
  auto cfg = small();
  auto vocab = Vocabulary::build(*corpus_, TokenScheme::Mixed);
  try {
    train(TrainingData{}, vocab, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
  }
}

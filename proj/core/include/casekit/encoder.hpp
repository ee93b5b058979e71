#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "casekit/corpus.hpp"
#include "casekit/sampler.hpp"
#include "casekit/vocabulary.hpp"

namespace casekit {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  static Matrix identity(std::size_t n);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

using Vector = std::vector<double>;
using TokenIds = std::vector<std::uint32_t>;

/// Bi-encoder: mean-pooled token embeddings followed by a linear projection;
/// relevance is the inner product of the two case vectors.
struct DualModel {
  std::uint32_t vocab_size = 0;
  std::size_t dim = 0;
  Matrix embeddings;  ///< vocab_size x dim
  Matrix projection;  ///< dim x dim

  static DualModel zeros(std::uint32_t vocab_size, std::size_t dim);
  /// Embeddings uniform in (-init_scale, init_scale), projection = identity.
  static DualModel init(std::uint32_t vocab_size, std::size_t dim, double init_scale, std::uint64_t seed);

  /// Parameter blocks in a fixed order, for gradient checks and updates.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  static std::vector<std::string> parameter_names() { return {"embeddings", "projection"}; }

  bool operator==(const DualModel&) const = default;
};

/// Cross-encoder: the query (segment 0) and document (segment 1) tokens are
/// embedded together, mean-pooled, and scored by a one-hidden-layer tanh MLP.
struct CrossModel {
  std::uint32_t vocab_size = 0;
  std::size_t dim = 0;
  std::size_t hidden = 0;
  Matrix embeddings;     ///< vocab_size x dim
  Matrix segments;       ///< 2 x dim
  Matrix hidden_weights; ///< hidden x dim
  Vector hidden_bias;    ///< hidden
  Vector output_weights; ///< hidden
  double output_bias = 0.0;

  static CrossModel zeros(std::uint32_t vocab_size, std::size_t dim, std::size_t hidden);
  /// Embedding tables uniform in (-init_scale, init_scale); MLP weights
  /// uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
  static CrossModel init(std::uint32_t vocab_size, std::size_t dim, std::size_t hidden, double init_scale,
                         std::uint64_t seed);

  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  static std::vector<std::string> parameter_names() {
    return {"embeddings", "segments", "hidden_weights", "hidden_bias", "output_weights", "output_bias"};
  }

  bool operator==(const CrossModel&) const = default;
};

bool all_finite(const DualModel& model);
bool all_finite(const CrossModel& model);

/// projection * mean(embedding rows). Throws EmptyInput / OutOfVocab.
Vector encode(const DualModel& model, std::span<const std::uint32_t> tokens);
double score_dual(const DualModel& model, std::span<const std::uint32_t> query, std::span<const std::uint32_t> doc);
double score_cross(const CrossModel& model, std::span<const std::uint32_t> query, std::span<const std::uint32_t> doc);

/// -ln(exp(s_pos) / (exp(s_pos) + sum exp(s_neg))), max-shifted.
/// Throws NonFinite, EmptyInput for an empty negative list.
double contrastive_loss(double positive, std::span<const double> negatives);

struct ContrastiveLossGrad {
  double loss = 0.0;
  double d_positive = 0.0;
  Vector d_negatives;
};
ContrastiveLossGrad contrastive_loss_grad(double positive, std::span<const double> negatives);

/// Mean negative log-likelihood of the masked originals given the context
/// of the unmasked tokens. Throws AllMasked, EmptyInput (nothing masked).
double lam_loss(const DualModel& model, const MaskedSequence& seq);
/// Same objective on the cross-encoder's token table (no projection).
double lam_loss(const CrossModel& model, const MaskedSequence& seq);

/// A contrastive group with every case already mapped to token ids.
struct TokenizedGroup {
  TokenIds query;
  TokenIds positive;
  std::vector<TokenIds> negatives;
};

double group_loss(const DualModel& model, const TokenizedGroup& group);
double group_loss(const CrossModel& model, const TokenizedGroup& group);

/// Losses accumulate `weight * d loss / d param` into `grad`, which must be
/// shaped like the model. Each returns the unweighted loss.
double accumulate_group(const DualModel& model, const TokenizedGroup& group, double weight, DualModel& grad);
double accumulate_group(const CrossModel& model, const TokenizedGroup& group, double weight, CrossModel& grad);
double accumulate_lam(const DualModel& model, const MaskedSequence& seq, double weight, DualModel& grad);
double accumulate_lam(const CrossModel& model, const MaskedSequence& seq, double weight, CrossModel& grad);

enum class Architecture { Dual, Cross };
std::string_view to_string(Architecture arch);

enum class Schedule {
  RoundRobin,  ///< single-task batches, alternating LAM, LJP, FDM
  Mixed,       ///< every step draws one batch from each task
};

struct TaskWeights {
  double lam = 1.0;
  double ljp = 1.0;
  double fdm = 1.0;

  double of(Task task) const;
  bool operator==(const TaskWeights&) const = default;
};

struct TrainConfig {
  double learning_rate = 1.0;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  TaskWeights task_weights;
  double init_scale = 0.05;
  std::size_t dim = 64;
  std::size_t hidden = 32;
  std::size_t max_len = 510;
  Architecture architecture = Architecture::Dual;
  Schedule schedule = Schedule::RoundRobin;
  bool dynamic_masking = true;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// One training batch; each task's loss is averaged over its own items.
struct Batch {
  std::vector<MaskedSequence> lam;
  std::vector<TokenizedGroup> ljp;
  std::vector<TokenizedGroup> fdm;

  bool empty() const { return lam.empty() && ljp.empty() && fdm.empty(); }
};

struct StepResult {
  double loss = 0.0;                    ///< weighted objective before the update
  std::map<Task, double> task_loss_sum; ///< unweighted per-item loss sums
  std::map<Task, std::size_t> task_items;
};

/// Weighted objective sum_t w_t * mean_t(loss) over the batch. LAM
/// sequences with nothing or everything masked are ignored.
template <typename Model>
double batch_loss(const Model& model, const Batch& batch, const TaskWeights& weights);

/// One step of plain gradient descent. Returns the pre-step loss. Throws
/// Error(NonFinite) without touching the model if any gradient is not finite.
template <typename Model>
StepResult grad_step(Model& model, const Batch& batch, const TrainConfig& cfg);

/// Gradient of batch_loss, shaped like the model.
template <typename Model>
Model batch_gradient(const Model& model, const Batch& batch, const TaskWeights& weights, double* loss = nullptr);

struct LossRecord {
  std::size_t epoch = 0;  ///< 0 = evaluation of the initial model
  Task task = Task::LJP;
  double mean_loss = 0.0;
};

/// Self-contained trained model: architecture, parameters, vocabulary and
/// the configuration it was trained with.
struct Checkpoint {
  TrainConfig config;
  Vocabulary vocab;
  std::variant<DualModel, CrossModel> model;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> loss_curve;
};

/// Training data assembled from a dataset directory.
struct TrainingData {
  std::vector<MaskedSequence> lam;
  std::vector<TokenizedGroup> ljp;
  std::vector<TokenizedGroup> fdm;
  double mask_ratio = 0.15;
  std::uint64_t mask_seed = 0;

  std::size_t size() const { return lam.size() + ljp.size() + fdm.size(); }
};

/// Loads every task file listed in the manifest whose weight is positive.
TrainingData load_training_data(const Corpus& corpus, const Vocabulary& vocab,
                                const std::filesystem::path& dataset_dir, const TrainConfig& cfg);

/// Deterministic given cfg.seed. Throws EmptyDataset when no task with a
/// positive weight has data.
TrainResult train(const Corpus& corpus, const std::filesystem::path& dataset_dir, const TrainConfig& cfg);
TrainResult train(const TrainingData& data, const Vocabulary& vocab, const TrainConfig& cfg);

void write_loss_curve(const std::vector<LossRecord>& curve, const std::filesystem::path& path);

/// TSV rows "doc_id<TAB>v1 ... vdim", one per document in corpus order.
void export_embeddings(const DualModel& model, const Vocabulary& vocab, const Corpus& corpus,
                       const std::filesystem::path& path, std::size_t max_len = 510);

}  // namespace casekit

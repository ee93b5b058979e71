#include "casekit/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "casekit/error.hpp"
#include "casekit/io.hpp"
#include "casekit/random.hpp"

namespace casekit {

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'K', 'M', 'O', 'D', 'E', 'L', '\1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void check_tokens(std::span<const std::uint32_t> tokens, std::uint32_t vocab_size) {
  if (tokens.empty()) throw Error(ErrorCode::EmptyInput, "empty token list");
  for (auto t : tokens)
    if (t >= vocab_size) throw Error(ErrorCode::OutOfVocab, "token id " + std::to_string(t));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Vector mean_rows(const Matrix& table, std::span<const std::uint32_t> tokens) {
  Vector m(table.cols, 0.0);
  for (auto t : tokens) {
    auto row = table.row(t);
    for (std::size_t c = 0; c < m.size(); ++c) m[c] += row[c];
  }
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (auto& v : m) v *= inv;
  return m;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  Vector y(a.rows, 0.0);
  for (std::size_t r = 0; r < a.rows; ++r) y[r] = dot(a.row(r), x);
  return y;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
  Vector y(a.cols, 0.0);
  for (std::size_t r = 0; r < a.rows; ++r) {
    auto row = a.row(r);
    for (std::size_t c = 0; c < a.cols; ++c) y[c] += row[c] * x[r];
  }
  return y;
}

void add_outer(Matrix& out, std::span<const double> left, std::span<const double> right, double scale) {
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto row = out.row(r);
    const double l = left[r] * scale;
    for (std::size_t c = 0; c < out.cols; ++c) row[c] += l * right[c];
  }
}

void add_to_rows(Matrix& table, std::span<const std::uint32_t> tokens, std::span<const double> g, double scale) {
  for (auto t : tokens) {
    auto row = table.row(t);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += scale * g[c];
  }
}

void fill_uniform(std::span<double> values, double scale, Rng& rng) {
  for (auto& v : values) v = rng.uniform(-scale, scale);
}

bool finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

// ---- dual encoder ---------------------------------------------------------

struct DualEncoding {
  Vector pooled;  // mean of embedding rows
  Vector output;  // projection * pooled
};

DualEncoding dual_forward(const DualModel& model, std::span<const std::uint32_t> tokens) {
  check_tokens(tokens, model.vocab_size);
  DualEncoding e;
  e.pooled = mean_rows(model.embeddings, tokens);
  e.output = matvec(model.projection, e.pooled);
  return e;
}

void dual_backward(const DualModel& model, std::span<const std::uint32_t> tokens, const DualEncoding& e,
                   std::span<const double> d_output, double weight, DualModel& grad) {
  add_outer(grad.projection, d_output, e.pooled, weight);
  Vector d_pooled = matvec_transposed(model.projection, d_output);
  add_to_rows(grad.embeddings, tokens, d_pooled, weight / static_cast<double>(tokens.size()));
}

// ---- cross encoder --------------------------------------------------------

struct CrossActivation {
  Vector pooled;   // mean of token + segment embeddings
  Vector hidden;   // tanh activations
  double score = 0.0;
};

CrossActivation cross_forward(const CrossModel& model, std::span<const std::uint32_t> query,
                              std::span<const std::uint32_t> doc) {
  check_tokens(query, model.vocab_size);
  check_tokens(doc, model.vocab_size);
  CrossActivation a;
  a.pooled.assign(model.dim, 0.0);
  for (auto t : query) {
    auto row = model.embeddings.row(t);
    for (std::size_t c = 0; c < model.dim; ++c) a.pooled[c] += row[c] + model.segments(0, c);
  }
  for (auto t : doc) {
    auto row = model.embeddings.row(t);
    for (std::size_t c = 0; c < model.dim; ++c) a.pooled[c] += row[c] + model.segments(1, c);
  }
  const double inv = 1.0 / static_cast<double>(query.size() + doc.size());
  for (auto& v : a.pooled) v *= inv;

  a.hidden = matvec(model.hidden_weights, a.pooled);
  for (std::size_t h = 0; h < model.hidden; ++h) a.hidden[h] = std::tanh(a.hidden[h] + model.hidden_bias[h]);
  a.score = dot(model.output_weights, a.hidden) + model.output_bias;
  return a;
}

void cross_backward(const CrossModel& model, std::span<const std::uint32_t> query, std::span<const std::uint32_t> doc,
                    const CrossActivation& a, double d_score, CrossModel& grad) {
  grad.output_bias += d_score;
  Vector d_pre(model.hidden);
  for (std::size_t h = 0; h < model.hidden; ++h) {
    grad.output_weights[h] += d_score * a.hidden[h];
    d_pre[h] = d_score * model.output_weights[h] * (1.0 - a.hidden[h] * a.hidden[h]);
    grad.hidden_bias[h] += d_pre[h];
  }
  add_outer(grad.hidden_weights, d_pre, a.pooled, 1.0);
  Vector d_pooled = matvec_transposed(model.hidden_weights, d_pre);
  const double n = static_cast<double>(query.size() + doc.size());
  add_to_rows(grad.embeddings, query, d_pooled, 1.0 / n);
  add_to_rows(grad.embeddings, doc, d_pooled, 1.0 / n);
  const double q_share = static_cast<double>(query.size()) / n;
  const double d_share = static_cast<double>(doc.size()) / n;
  for (std::size_t c = 0; c < model.dim; ++c) {
    grad.segments(0, c) += q_share * d_pooled[c];
    grad.segments(1, c) += d_share * d_pooled[c];
  }
}

// ---- masked language modelling -------------------------------------------

struct LamParts {
  std::vector<std::uint32_t> context;  // unmasked token ids
};

LamParts lam_split(const MaskedSequence& seq, std::uint32_t vocab_size) {
  if (seq.masked_positions.empty()) throw Error(ErrorCode::EmptyInput, "sequence has no masked positions");
  if (seq.masked_positions.size() != seq.original_tokens.size())
    throw Error(ErrorCode::InvalidConfig, "masked positions and originals differ in length");
  LamParts parts;
  std::size_t next = 0;
  for (std::size_t i = 0; i < seq.token_ids.size(); ++i) {
    if (next < seq.masked_positions.size() && seq.masked_positions[next] == i) {
      ++next;
      continue;
    }
    parts.context.push_back(seq.token_ids[i]);
  }
  if (parts.context.empty()) throw Error(ErrorCode::AllMasked, "no unmasked context");
  check_tokens(parts.context, vocab_size);
  check_tokens(seq.original_tokens, vocab_size);
  return parts;
}

/// Shared by both architectures; `projection` is null for the cross encoder.
double lam_objective(const Matrix& embeddings, const Matrix* projection, const MaskedSequence& seq,
                     std::uint32_t vocab_size, double weight, Matrix* grad_embeddings, Matrix* grad_projection) {
  auto parts = lam_split(seq, vocab_size);
  Vector pooled = mean_rows(embeddings, parts.context);
  Vector context = projection ? matvec(*projection, pooled) : pooled;

  Vector logits(vocab_size);
  for (std::uint32_t v = 0; v < vocab_size; ++v) logits[v] = dot(context, embeddings.row(v));
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - max_logit);
  const double log_norm = max_logit + std::log(sum);

  const double m = static_cast<double>(seq.original_tokens.size());
  double loss = 0.0;
  for (auto o : seq.original_tokens) loss += log_norm - logits[o];
  loss /= m;

  if (grad_embeddings == nullptr) return loss;

  // d loss / d logit_v = softmax_v - (occurrences of v among originals) / m
  Vector d_logits(vocab_size);
  for (std::uint32_t v = 0; v < vocab_size; ++v) d_logits[v] = std::exp(logits[v] - log_norm);
  for (auto o : seq.original_tokens) d_logits[o] -= 1.0 / m;

  Vector d_context(context.size(), 0.0);
  for (std::uint32_t v = 0; v < vocab_size; ++v) {
    auto row = embeddings.row(v);
    auto grow = grad_embeddings->row(v);
    for (std::size_t c = 0; c < context.size(); ++c) {
      d_context[c] += d_logits[v] * row[c];
      grow[c] += weight * d_logits[v] * context[c];
    }
  }
  Vector d_pooled = d_context;
  if (projection) {
    add_outer(*grad_projection, d_context, pooled, weight);
    d_pooled = matvec_transposed(*projection, d_context);
  }
  add_to_rows(*grad_embeddings, parts.context, d_pooled, weight / static_cast<double>(parts.context.size()));
  return loss;
}

bool lam_usable(const MaskedSequence& seq) {
  return !seq.masked_positions.empty() && seq.masked_positions.size() < seq.token_ids.size();
}

template <typename Model>
Model zeros_like(const Model& model);

template <>
DualModel zeros_like(const DualModel& model) {
  return DualModel::zeros(model.vocab_size, model.dim);
}

template <>
CrossModel zeros_like(const CrossModel& model) {
  return CrossModel::zeros(model.vocab_size, model.dim, model.hidden);
}

template <typename Model>
void write_model(BinaryWriter& w, const Model& model) {
  for (auto block : model.parameters()) w.put_doubles(Vector(block.begin(), block.end()));
}

template <typename Model>
void read_model(BinaryReader& r, Model& model) {
  for (auto block : model.parameters()) {
    auto values = r.get_doubles();
    if (values.size() != block.size()) throw Error(ErrorCode::IoError, "checkpoint parameter shape mismatch");
    std::copy(values.begin(), values.end(), block.begin());
  }
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DualModel DualModel::zeros(std::uint32_t vocab_size, std::size_t dim) {
  DualModel m;
  m.vocab_size = vocab_size;
  m.dim = dim;
  m.embeddings = Matrix(vocab_size, dim);
  m.projection = Matrix(dim, dim);
  return m;
}

DualModel DualModel::init(std::uint32_t vocab_size, std::size_t dim, double init_scale, std::uint64_t seed) {
  if (dim == 0 || vocab_size == 0) throw Error(ErrorCode::InvalidConfig, "model dimensions must be positive");
  DualModel m = zeros(vocab_size, dim);
  Rng rng(derive_seed(seed, std::string_view("dual-init")));
  fill_uniform(m.embeddings.data, init_scale, rng);
  m.projection = Matrix::identity(dim);
  return m;
}

std::vector<std::span<double>> DualModel::parameters() { return {embeddings.data, projection.data}; }
std::vector<std::span<const double>> DualModel::parameters() const { return {embeddings.data, projection.data}; }

CrossModel CrossModel::zeros(std::uint32_t vocab_size, std::size_t dim, std::size_t hidden) {
  CrossModel m;
  m.vocab_size = vocab_size;
  m.dim = dim;
  m.hidden = hidden;
  m.embeddings = Matrix(vocab_size, dim);
  m.segments = Matrix(2, dim);
  m.hidden_weights = Matrix(hidden, dim);
  m.hidden_bias.assign(hidden, 0.0);
  m.output_weights.assign(hidden, 0.0);
  m.output_bias = 0.0;
  return m;
}

CrossModel CrossModel::init(std::uint32_t vocab_size, std::size_t dim, std::size_t hidden, double init_scale,
                            std::uint64_t seed) {
  if (dim == 0 || vocab_size == 0 || hidden == 0)
    throw Error(ErrorCode::InvalidConfig, "model dimensions must be positive");
  CrossModel m = zeros(vocab_size, dim, hidden);
  Rng rng(derive_seed(seed, std::string_view("cross-init")));
  fill_uniform(m.embeddings.data, init_scale, rng);
  fill_uniform(m.segments.data, init_scale, rng);
  fill_uniform(m.hidden_weights.data, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
  fill_uniform(m.output_weights, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  return m;
}

std::vector<std::span<double>> CrossModel::parameters() {
  return {embeddings.data, segments.data, hidden_weights.data, hidden_bias, output_weights, {&output_bias, 1}};
}

std::vector<std::span<const double>> CrossModel::parameters() const {
  return {embeddings.data, segments.data, hidden_weights.data, hidden_bias, output_weights, {&output_bias, 1}};
}

bool all_finite(const DualModel& model) {
  auto blocks = model.parameters();
  return std::all_of(blocks.begin(), blocks.end(), finite);
}

bool all_finite(const CrossModel& model) {
  auto blocks = model.parameters();
  return std::all_of(blocks.begin(), blocks.end(), finite);
}

Vector encode(const DualModel& model, std::span<const std::uint32_t> tokens) {
  return dual_forward(model, tokens).output;
}

double score_dual(const DualModel& model, std::span<const std::uint32_t> query, std::span<const std::uint32_t> doc) {
  return dot(encode(model, query), encode(model, doc));
}

double score_cross(const CrossModel& model, std::span<const std::uint32_t> query, std::span<const std::uint32_t> doc) {
  return cross_forward(model, query, doc).score;
}

ContrastiveLossGrad contrastive_loss_grad(double positive, std::span<const double> negatives) {
  if (negatives.empty()) throw Error(ErrorCode::EmptyInput, "contrastive loss needs at least one negative");
  if (!std::isfinite(positive) || !finite(negatives)) throw Error(ErrorCode::NonFinite, "non-finite score");
  // The largest score contributes exp(0) = 1; log1p over the rest keeps the
  // loss accurate when the positive dominates.
  double max_score = positive;
  std::size_t argmax = negatives.size();
  for (std::size_t i = 0; i < negatives.size(); ++i)
    if (negatives[i] > max_score) {
      max_score = negatives[i];
      argmax = i;
    }
  double rest = argmax == negatives.size() ? 0.0 : std::exp(positive - max_score);
  for (std::size_t i = 0; i < negatives.size(); ++i)
    if (i != argmax) rest += std::exp(negatives[i] - max_score);
  const double log_norm = max_score + std::log1p(rest);

  ContrastiveLossGrad out;
  out.loss = (max_score - positive) + std::log1p(rest);
  out.d_positive = std::exp(positive - log_norm) - 1.0;
  out.d_negatives.reserve(negatives.size());
  for (double s : negatives) out.d_negatives.push_back(std::exp(s - log_norm));
  return out;
}

double contrastive_loss(double positive, std::span<const double> negatives) {
  return contrastive_loss_grad(positive, negatives).loss;
}

double lam_loss(const DualModel& model, const MaskedSequence& seq) {
  return lam_objective(model.embeddings, &model.projection, seq, model.vocab_size, 0.0, nullptr, nullptr);
}

double lam_loss(const CrossModel& model, const MaskedSequence& seq) {
  return lam_objective(model.embeddings, nullptr, seq, model.vocab_size, 0.0, nullptr, nullptr);
}

double group_loss(const DualModel& model, const TokenizedGroup& group) {
  auto q = encode(model, group.query);
  Vector negatives;
  for (const auto& n : group.negatives) negatives.push_back(dot(q, encode(model, n)));
  return contrastive_loss(dot(q, encode(model, group.positive)), negatives);
}

double group_loss(const CrossModel& model, const TokenizedGroup& group) {
  Vector negatives;
  for (const auto& n : group.negatives) negatives.push_back(score_cross(model, group.query, n));
  return contrastive_loss(score_cross(model, group.query, group.positive), negatives);
}

double accumulate_group(const DualModel& model, const TokenizedGroup& group, double weight, DualModel& grad) {
  auto q = dual_forward(model, group.query);
  auto p = dual_forward(model, group.positive);
  std::vector<DualEncoding> negs;
  Vector neg_scores;
  for (const auto& n : group.negatives) {
    negs.push_back(dual_forward(model, n));
    neg_scores.push_back(dot(q.output, negs.back().output));
  }
  auto g = contrastive_loss_grad(dot(q.output, p.output), neg_scores);

  Vector d_query(model.dim, 0.0);
  for (std::size_t c = 0; c < model.dim; ++c) d_query[c] = g.d_positive * p.output[c];
  Vector d_doc(model.dim);
  for (std::size_t c = 0; c < model.dim; ++c) d_doc[c] = g.d_positive * q.output[c];
  dual_backward(model, group.positive, p, d_doc, weight, grad);
  for (std::size_t j = 0; j < negs.size(); ++j) {
    for (std::size_t c = 0; c < model.dim; ++c) {
      d_query[c] += g.d_negatives[j] * negs[j].output[c];
      d_doc[c] = g.d_negatives[j] * q.output[c];
    }
    dual_backward(model, group.negatives[j], negs[j], d_doc, weight, grad);
  }
  dual_backward(model, group.query, q, d_query, weight, grad);
  return g.loss;
}

double accumulate_group(const CrossModel& model, const TokenizedGroup& group, double weight, CrossModel& grad) {
  auto p = cross_forward(model, group.query, group.positive);
  std::vector<CrossActivation> negs;
  Vector neg_scores;
  for (const auto& n : group.negatives) {
    negs.push_back(cross_forward(model, group.query, n));
    neg_scores.push_back(negs.back().score);
  }
  auto g = contrastive_loss_grad(p.score, neg_scores);
  cross_backward(model, group.query, group.positive, p, weight * g.d_positive, grad);
  for (std::size_t j = 0; j < negs.size(); ++j)
    cross_backward(model, group.query, group.negatives[j], negs[j], weight * g.d_negatives[j], grad);
  return g.loss;
}

double accumulate_lam(const DualModel& model, const MaskedSequence& seq, double weight, DualModel& grad) {
  return lam_objective(model.embeddings, &model.projection, seq, model.vocab_size, weight, &grad.embeddings,
                       &grad.projection);
}

double accumulate_lam(const CrossModel& model, const MaskedSequence& seq, double weight, CrossModel& grad) {
  return lam_objective(model.embeddings, nullptr, seq, model.vocab_size, weight, &grad.embeddings, nullptr);
}

std::string_view to_string(Architecture arch) { return arch == Architecture::Dual ? "dual" : "cross"; }

double TaskWeights::of(Task task) const {
  switch (task) {
    case Task::LAM: return lam;
    case Task::LJP: return ljp;
    case Task::FDM: return fdm;
  }
  return 0.0;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw Error(ErrorCode::InvalidConfig, "learning_rate must be finite and >= 0");
  if (batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (dim == 0 || hidden == 0) throw Error(ErrorCode::InvalidConfig, "dim and hidden must be >= 1");
  if (max_len == 0) throw Error(ErrorCode::InvalidConfig, "max_len must be >= 1");
  for (double w : {task_weights.lam, task_weights.ljp, task_weights.fdm})
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::InvalidConfig, "task weights must be >= 0");
  if (task_weights.lam <= 0.0 && task_weights.ljp <= 0.0 && task_weights.fdm <= 0.0)
    throw Error(ErrorCode::InvalidConfig, "at least one task weight must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"task_weights", {{"LAM", task_weights.lam}, {"LJP", task_weights.ljp}, {"FDM", task_weights.fdm}}},
          {"init_scale", init_scale},
          {"dim", dim},
          {"hidden", hidden},
          {"max_len", max_len},
          {"architecture", to_string(architecture)},
          {"schedule", schedule == Schedule::RoundRobin ? "round_robin" : "mixed"},
          {"dynamic_masking", dynamic_masking}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("task_weights")) {
    const auto& w = j.at("task_weights");
    c.task_weights = {w.value("LAM", 1.0), w.value("LJP", 1.0), w.value("FDM", 1.0)};
  }
  c.init_scale = j.value("init_scale", c.init_scale);
  c.dim = j.value("dim", c.dim);
  c.hidden = j.value("hidden", c.hidden);
  c.max_len = j.value("max_len", c.max_len);
  c.architecture = j.value("architecture", std::string("dual")) == "cross" ? Architecture::Cross : Architecture::Dual;
  c.schedule = j.value("schedule", std::string("round_robin")) == "mixed" ? Schedule::Mixed : Schedule::RoundRobin;
  c.dynamic_masking = j.value("dynamic_masking", c.dynamic_masking);
  return c;
}

template <typename Model>
Model batch_gradient(const Model& model, const Batch& batch, const TaskWeights& weights, double* loss) {
  Model grad = zeros_like(model);
  double total = 0.0;
  auto run_groups = [&](const std::vector<TokenizedGroup>& groups, double w) {
    if (w <= 0.0 || groups.empty()) return;
    const double scale = w / static_cast<double>(groups.size());
    for (const auto& g : groups) total += scale * accumulate_group(model, g, scale, grad);
  };
  if (weights.lam > 0.0) {
    std::size_t usable = std::count_if(batch.lam.begin(), batch.lam.end(), lam_usable);
    if (usable > 0) {
      const double scale = weights.lam / static_cast<double>(usable);
      for (const auto& s : batch.lam)
        if (lam_usable(s)) total += scale * accumulate_lam(model, s, scale, grad);
    }
  }
  run_groups(batch.ljp, weights.ljp);
  run_groups(batch.fdm, weights.fdm);
  if (loss) *loss = total;
  return grad;
}

template <typename Model>
double batch_loss(const Model& model, const Batch& batch, const TaskWeights& weights) {
  double total = 0.0;
  auto run_groups = [&](const std::vector<TokenizedGroup>& groups, double w) {
    if (w <= 0.0 || groups.empty()) return;
    double sum = 0.0;
    for (const auto& g : groups) sum += group_loss(model, g);
    total += w * sum / static_cast<double>(groups.size());
  };
  if (weights.lam > 0.0) {
    double sum = 0.0;
    std::size_t usable = 0;
    for (const auto& s : batch.lam) {
      if (!lam_usable(s)) continue;
      sum += lam_loss(model, s);
      ++usable;
    }
    if (usable > 0) total += weights.lam * sum / static_cast<double>(usable);
  }
  run_groups(batch.ljp, weights.ljp);
  run_groups(batch.fdm, weights.fdm);
  return total;
}

template <typename Model>
StepResult grad_step(Model& model, const Batch& batch, const TrainConfig& cfg) {
  StepResult result;
  Model grad = zeros_like(model);
  const auto& w = cfg.task_weights;
  auto run_groups = [&](Task task, const std::vector<TokenizedGroup>& groups) {
    if (w.of(task) <= 0.0 || groups.empty()) return;
    const double scale = w.of(task) / static_cast<double>(groups.size());
    for (const auto& g : groups) {
      double l = accumulate_group(model, g, scale, grad);
      result.task_loss_sum[task] += l;
      result.loss += scale * l;
    }
    result.task_items[task] += groups.size();
  };
  if (w.lam > 0.0) {
    std::size_t usable = std::count_if(batch.lam.begin(), batch.lam.end(), lam_usable);
    if (usable > 0) {
      const double scale = w.lam / static_cast<double>(usable);
      for (const auto& s : batch.lam) {
        if (!lam_usable(s)) continue;
        double l = accumulate_lam(model, s, scale, grad);
        result.task_loss_sum[Task::LAM] += l;
        result.loss += scale * l;
      }
      result.task_items[Task::LAM] += usable;
    }
  }
  run_groups(Task::LJP, batch.ljp);
  run_groups(Task::FDM, batch.fdm);

  auto names = Model::parameter_names();
  auto blocks = grad.parameters();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (!finite(blocks[i]))
      throw Error(ErrorCode::NonFinite, "gradient of " + names[i] + " is not finite (loss " +
                                            format_double(result.loss) + ")");
  }
  if (cfg.learning_rate == 0.0) return result;
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t k = 0; k < params[i].size(); ++k) params[i][k] -= cfg.learning_rate * blocks[i][k];
  return result;
}

template double batch_loss(const DualModel&, const Batch&, const TaskWeights&);
template double batch_loss(const CrossModel&, const Batch&, const TaskWeights&);
template DualModel batch_gradient(const DualModel&, const Batch&, const TaskWeights&, double*);
template CrossModel batch_gradient(const CrossModel&, const Batch&, const TaskWeights&, double*);
template StepResult grad_step(DualModel&, const Batch&, const TrainConfig&);
template StepResult grad_step(CrossModel&, const Batch&, const TrainConfig&);

// ---- checkpoints ----------------------------------------------------------

void Checkpoint::save(const std::filesystem::path& path) const {
  AtomicFile file(path, true);
  BinaryWriter w(file.stream());
  w.put_raw(std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_string(config.to_json().dump());
  w.put_string(to_string(vocab.scheme()));
  w.put<std::uint64_t>(vocab.size());
  for (const auto& t : vocab.tokens()) w.put_string(t);
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        w.put<std::uint8_t>(std::is_same_v<M, DualModel> ? 0 : 1);
        w.put<std::uint32_t>(m.vocab_size);
        w.put<std::uint64_t>(m.dim);
        if constexpr (std::is_same_v<M, CrossModel>) w.put<std::uint64_t>(m.hidden);
        write_model(w, m);
      },
      model);
  file.commit();
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path.string());
  BinaryReader r(in);
  std::string magic;
  try {
    magic = r.get_raw(sizeof(kCheckpointMagic));
  } catch (const Error&) {
    throw Error(ErrorCode::VersionMismatch, "not a casekit checkpoint: " + path.string());
  }
  if (magic != std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)))
    throw Error(ErrorCode::VersionMismatch, "bad checkpoint magic in " + path.string());
  if (auto v = r.get<std::uint32_t>(); v != kCheckpointVersion)
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(v) + " unsupported");

  Checkpoint ckpt;
  try {
    ckpt.config = TrainConfig::from_json(nlohmann::json::parse(r.get_string()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("corrupt checkpoint config: ") + e.what());
  }
  auto scheme = parse_token_scheme(r.get_string());
  if (!scheme) throw Error(ErrorCode::IoError, "corrupt checkpoint vocabulary scheme");
  auto n_tokens = r.get<std::uint64_t>();
  std::vector<std::string> tokens;
  for (std::uint64_t i = 0; i < n_tokens; ++i) tokens.push_back(r.get_string());
  ckpt.vocab = Vocabulary::from_tokens(std::move(tokens), *scheme);

  auto arch = r.get<std::uint8_t>();
  auto vocab_size = r.get<std::uint32_t>();
  auto dim = r.get<std::uint64_t>();
  if (arch == 0) {
    auto m = DualModel::zeros(vocab_size, dim);
    read_model(r, m);
    ckpt.model = std::move(m);
  } else if (arch == 1) {
    auto hidden = r.get<std::uint64_t>();
    auto m = CrossModel::zeros(vocab_size, dim, hidden);
    read_model(r, m);
    ckpt.model = std::move(m);
  } else {
    throw Error(ErrorCode::IoError, "unknown architecture tag in checkpoint");
  }
  return ckpt;
}

// ---- training -------------------------------------------------------------

TrainingData load_training_data(const Corpus& corpus, const Vocabulary& vocab,
                                const std::filesystem::path& dataset_dir, const TrainConfig& cfg) {
  auto manifest = DatasetManifest::load(dataset_dir);
  TrainingData data;
  data.mask_ratio = manifest.config.mask_ratio;
  data.mask_seed = manifest.config.seed;

  std::vector<TokenIds> doc_tokens;
  auto tokens_of = [&](const std::string& id) -> const TokenIds& {
    if (doc_tokens.empty()) {
      doc_tokens.reserve(corpus.size());
      for (const auto& doc : corpus) doc_tokens.push_back(vocab.encode(doc.fact, cfg.max_len));
    }
    auto index = corpus.index_of(id);
    if (!index) throw Error(ErrorCode::UnknownDoc, "dataset refers to unknown case " + id);
    return doc_tokens[*index];
  };
  auto tokenize_groups = [&](Task task, std::vector<TokenizedGroup>& out) {
    auto it = manifest.tasks.find(task);
    if (it == manifest.tasks.end() || cfg.task_weights.of(task) <= 0.0) return;
    for (const auto& g : read_groups(dataset_dir / it->second.file)) {
      TokenizedGroup t{tokens_of(g.query_id), tokens_of(g.positive_id), {}};
      for (const auto& n : g.negative_ids) t.negatives.push_back(tokens_of(n));
      out.push_back(std::move(t));
    }
  };
  if (auto it = manifest.tasks.find(Task::LAM); it != manifest.tasks.end() && cfg.task_weights.lam > 0.0) {
    data.lam = read_sequences(dataset_dir / it->second.file);
    for (const auto& s : data.lam)
      for (auto t : s.token_ids)
        if (t >= vocab.size()) throw Error(ErrorCode::OutOfVocab, "LAM data does not match the corpus vocabulary");
  }
  tokenize_groups(Task::LJP, data.ljp);
  tokenize_groups(Task::FDM, data.fdm);
  return data;
}

namespace {

struct EpochTally {
  std::map<Task, double> sum;
  std::map<Task, std::size_t> count;

  void add(const StepResult& r) {
    for (const auto& [task, s] : r.task_loss_sum) sum[task] += s;
    for (const auto& [task, n] : r.task_items) count[task] += n;
  }
  void emit(std::size_t epoch, std::vector<LossRecord>& curve) const {
    for (const auto& [task, n] : count)
      if (n > 0) curve.push_back({epoch, task, sum.at(task) / static_cast<double>(n)});
  }
};

template <typename T>
std::vector<std::vector<T>> chunk(const std::vector<T>& items, const std::vector<std::size_t>& order,
                                  std::size_t batch_size) {
  std::vector<std::vector<T>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    auto& b = out.emplace_back();
    for (std::size_t k = i; k < std::min(order.size(), i + batch_size); ++k) b.push_back(items[order[k]]);
  }
  return out;
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, std::size_t epoch, Task task) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(derive_seed(derive_seed(seed, std::string_view("shuffle")), epoch),
                      static_cast<std::uint64_t>(task)));
  rng.shuffle(order.begin(), order.end());
  return order;
}

template <typename Model>
std::vector<LossRecord> run_training(Model& model, const TrainingData& data, const TrainConfig& cfg) {
  std::vector<LossRecord> curve;

  // Epoch 0 row: the initial model evaluated on the full data without updates.
  {
    TrainConfig frozen = cfg;
    frozen.learning_rate = 0.0;
    EpochTally tally;
    Batch all{data.lam, data.ljp, data.fdm};
    tally.add(grad_step(model, all, frozen));
    tally.emit(0, curve);
  }

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<MaskedSequence> lam = data.lam;
    if (cfg.dynamic_masking) {
      // Masks are re-derived per epoch; epoch 1 reproduces the stored masks.
      for (std::size_t i = 0; i < lam.size(); ++i)
        lam[i] = mask_sequence(data.lam[i].unmasked(), data.mask_ratio, data.mask_seed, epoch - 1, i);
    }
    auto lam_batches = chunk(lam, shuffled_order(lam.size(), cfg.seed, epoch, Task::LAM), cfg.batch_size);
    auto ljp_batches = chunk(data.ljp, shuffled_order(data.ljp.size(), cfg.seed, epoch, Task::LJP), cfg.batch_size);
    auto fdm_batches = chunk(data.fdm, shuffled_order(data.fdm.size(), cfg.seed, epoch, Task::FDM), cfg.batch_size);

    EpochTally tally;
    const std::size_t rounds = std::max({lam_batches.size(), ljp_batches.size(), fdm_batches.size()});
    for (std::size_t r = 0; r < rounds; ++r) {
      if (cfg.schedule == Schedule::Mixed) {
        Batch b;
        if (r < lam_batches.size()) b.lam = std::move(lam_batches[r]);
        if (r < ljp_batches.size()) b.ljp = std::move(ljp_batches[r]);
        if (r < fdm_batches.size()) b.fdm = std::move(fdm_batches[r]);
        tally.add(grad_step(model, b, cfg));
      } else {
        if (r < lam_batches.size()) tally.add(grad_step(model, Batch{std::move(lam_batches[r]), {}, {}}, cfg));
        if (r < ljp_batches.size()) tally.add(grad_step(model, Batch{{}, std::move(ljp_batches[r]), {}}, cfg));
        if (r < fdm_batches.size()) tally.add(grad_step(model, Batch{{}, {}, std::move(fdm_batches[r])}, cfg));
      }
    }
    tally.emit(epoch, curve);
  }
  return curve;
}

}  // namespace

TrainResult train(const TrainingData& data, const Vocabulary& vocab, const TrainConfig& cfg) {
  cfg.validate();
  const bool has_data = (cfg.task_weights.lam > 0 && !data.lam.empty()) ||
                        (cfg.task_weights.ljp > 0 && !data.ljp.empty()) ||
                        (cfg.task_weights.fdm > 0 && !data.fdm.empty());
  if (!has_data) throw Error(ErrorCode::EmptyDataset, "no training items for the weighted tasks");

  // Zero-weight tasks contribute nothing; drop them so they cost nothing.
  TrainingData active;
  active.mask_ratio = data.mask_ratio;
  active.mask_seed = data.mask_seed;
  if (cfg.task_weights.lam > 0) active.lam = data.lam;
  if (cfg.task_weights.ljp > 0) active.ljp = data.ljp;
  if (cfg.task_weights.fdm > 0) active.fdm = data.fdm;

  TrainResult result;
  result.checkpoint.config = cfg;
  result.checkpoint.vocab = vocab;
  if (cfg.architecture == Architecture::Dual) {
    auto model = DualModel::init(vocab.size(), cfg.dim, cfg.init_scale, cfg.seed);
    result.loss_curve = run_training(model, active, cfg);
    result.checkpoint.model = std::move(model);
  } else {
    auto model = CrossModel::init(vocab.size(), cfg.dim, cfg.hidden, cfg.init_scale, cfg.seed);
    result.loss_curve = run_training(model, active, cfg);
    result.checkpoint.model = std::move(model);
  }
  return result;
}

TrainResult train(const Corpus& corpus, const std::filesystem::path& dataset_dir, const TrainConfig& cfg) {
  cfg.validate();
  auto manifest = DatasetManifest::load(dataset_dir);
  auto vocab = Vocabulary::build(corpus, manifest.scheme);
  auto data = load_training_data(corpus, vocab, dataset_dir, cfg);
  return train(data, vocab, cfg);
}

void write_loss_curve(const std::vector<LossRecord>& curve, const std::filesystem::path& path) {
  AtomicFile file(path);
  file.stream() << "epoch,task,mean_loss\n";
  for (const auto& r : curve) file.stream() << r.epoch << ',' << to_string(r.task) << ',' << format_double(r.mean_loss) << '\n';
  file.commit();
}

void export_embeddings(const DualModel& model, const Vocabulary& vocab, const Corpus& corpus,
                       const std::filesystem::path& path, std::size_t max_len) {
  AtomicFile file(path);
  for (const auto& doc : corpus) {
    auto v = encode(model, vocab.encode(doc.fact, max_len));
    file.stream() << doc.id;
    for (double x : v) file.stream() << '\t' << format_double(x);
    file.stream() << '\n';
  }
  file.commit();
}

}  // namespace casekit

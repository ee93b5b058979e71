#include "casekit/sampler.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

#include "casekit/error.hpp"
#include "casekit/io.hpp"

namespace casekit {

namespace {

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, threads);
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> workers;
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
  }
}

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path, T (*decode)(const nlohmann::json&)) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      out.push_back(decode(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(n, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(n, e.what());
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Task task) {
  switch (task) {
    case Task::LAM: return "LAM";
    case Task::LJP: return "LJP";
    case Task::FDM: return "FDM";
  }
  return "LJP";
}

std::optional<Task> parse_task(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "LAM") return Task::LAM;
  if (upper == "LJP") return Task::LJP;
  if (upper == "FDM") return Task::FDM;
  return std::nullopt;
}

bool ContrastiveGroup::valid() const {
  if (negative_ids.empty() || query_id == positive_id) return false;
  return std::none_of(negative_ids.begin(), negative_ids.end(),
                      [&](const std::string& n) { return n == positive_id || n == query_id; });
}

nlohmann::json to_json(const ContrastiveGroup& group) {
  return {{"query_id", group.query_id},
          {"positive_id", group.positive_id},
          {"negative_ids", group.negative_ids},
          {"task", to_string(group.task)}};
}

ContrastiveGroup group_from_json(const nlohmann::json& j) {
  ContrastiveGroup g;
  g.query_id = j.at("query_id").get<std::string>();
  g.positive_id = j.at("positive_id").get<std::string>();
  g.negative_ids = j.at("negative_ids").get<std::vector<std::string>>();
  auto task = parse_task(j.at("task").get<std::string>());
  if (!task || *task == Task::LAM) throw Error(ErrorCode::ParseError, "bad task tag in group");
  g.task = *task;
  return g;
}

bool MaskedSequence::valid(std::size_t max_len) const {
  if (token_ids.size() > max_len || masked_positions.size() != original_tokens.size()) return false;
  for (std::size_t i = 0; i < masked_positions.size(); ++i) {
    if (masked_positions[i] >= token_ids.size()) return false;
    if (i > 0 && masked_positions[i] <= masked_positions[i - 1]) return false;
  }
  return true;
}

std::vector<std::uint32_t> MaskedSequence::unmasked() const {
  auto tokens = token_ids;
  for (std::size_t i = 0; i < masked_positions.size(); ++i) tokens.at(masked_positions[i]) = original_tokens[i];
  return tokens;
}

nlohmann::json to_json(const MaskedSequence& seq) {
  return {{"token_ids", seq.token_ids},
          {"masked_positions", seq.masked_positions},
          {"original_tokens", seq.original_tokens}};
}

MaskedSequence sequence_from_json(const nlohmann::json& j) {
  MaskedSequence s;
  s.token_ids = j.at("token_ids").get<std::vector<std::uint32_t>>();
  s.masked_positions = j.at("masked_positions").get<std::vector<std::uint32_t>>();
  s.original_tokens = j.at("original_tokens").get<std::vector<std::uint32_t>>();
  if (!s.valid(s.token_ids.size())) throw Error(ErrorCode::ParseError, "inconsistent masked sequence");
  return s;
}

void SamplerConfig::validate() const {
  if (pool_size == 0) throw Error(ErrorCode::InvalidConfig, "pool_size must be >= 1");
  if (fdm_positive_window == 0) throw Error(ErrorCode::InvalidConfig, "fdm_positive_window must be >= 1");
  if (lambda == 0) throw Error(ErrorCode::InvalidConfig, "lambda must be >= 1");
  if (fdm_positive_window + lambda > pool_size)
    throw Error(ErrorCode::InvalidConfig, "fdm_positive_window + lambda must not exceed pool_size");
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) throw Error(ErrorCode::InvalidConfig, "mask_ratio must lie in [0, 1]");
  if (max_len == 0) throw Error(ErrorCode::InvalidConfig, "max_len must be >= 1");
}

nlohmann::json SamplerConfig::to_json() const {
  return {{"pool_size", pool_size},         {"fdm_positive_window", fdm_positive_window},
          {"lambda", lambda},               {"mask_ratio", mask_ratio},
          {"max_len", max_len},             {"seed", seed},
          {"negatives_cap", negatives_cap}, {"positives_cap", positives_cap}};
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j) {
  SamplerConfig c;
  c.pool_size = j.value("pool_size", c.pool_size);
  c.fdm_positive_window = j.value("fdm_positive_window", c.fdm_positive_window);
  c.lambda = j.value("lambda", c.lambda);
  c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
  c.max_len = j.value("max_len", c.max_len);
  c.seed = j.value("seed", c.seed);
  c.negatives_cap = j.value("negatives_cap", c.negatives_cap);
  c.positives_cap = j.value("positives_cap", c.positives_cap);
  return c;
}

MaskedSequence mask_sequence(const std::vector<std::uint32_t>& tokens, double ratio, std::uint64_t seed,
                             std::uint64_t epoch, std::uint64_t sequence_index) {
  Rng rng(derive_seed(derive_seed(seed, epoch), sequence_index));
  MaskedSequence seq;
  seq.token_ids = tokens;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!rng.bernoulli(ratio)) continue;
    seq.masked_positions.push_back(static_cast<std::uint32_t>(i));
    seq.original_tokens.push_back(tokens[i]);
    seq.token_ids[i] = Vocabulary::kMask;
  }
  return seq;
}

std::optional<std::vector<ContrastiveGroup>> sample_ljp(const LegalCaseDocument& query, const Corpus& corpus,
                                                        const InvertedIndex& index, const SamplerConfig& cfg,
                                                        const BM25Params& bm25) {
  auto pool = search_bm25(index, tokenize(query.fact, index.scheme()), cfg.pool_size, bm25, query.id);
  std::vector<std::string> positives;
  std::vector<std::string> negatives;
  for (const auto& hit : pool) {
    const auto* doc = corpus.find(hit.doc_id);
    if (doc == nullptr) continue;
    if (doc->crimes == query.crimes && doc->provisions == query.provisions)
      positives.push_back(hit.doc_id);
    else
      negatives.push_back(hit.doc_id);
  }
  if (positives.empty() || negatives.empty()) return std::nullopt;
  if (cfg.positives_cap > 0 && positives.size() > cfg.positives_cap) positives.resize(cfg.positives_cap);
  if (cfg.negatives_cap > 0 && negatives.size() > cfg.negatives_cap) negatives.resize(cfg.negatives_cap);

  std::vector<ContrastiveGroup> groups;
  groups.reserve(positives.size());
  for (auto& positive : positives) groups.push_back({query.id, std::move(positive), negatives, Task::LJP});
  return groups;
}

std::vector<ScoredDoc> fdm_ranked_pool(const LegalCaseDocument& query, const Corpus& corpus,
                                       const JudgmentStats& stats, const InvertedIndex& index,
                                       const SamplerConfig& cfg, const BM25Params& bm25) {
  auto pool = search_lpicf(query, corpus, stats, cfg.pool_size);
  const auto query_tokens = tokenize(query.fact, index.scheme());
  for (auto& hit : pool) hit.score = bm25_score(index, query_tokens, hit.doc_id, bm25);
  sort_ranked(pool);
  return pool;
}

Rng fdm_rng(std::uint64_t seed, std::string_view query_id) {
  return Rng(derive_seed(derive_seed(seed, std::string_view("fdm")), query_id));
}

std::optional<ContrastiveGroup> sample_fdm(const LegalCaseDocument& query, const Corpus& corpus,
                                           const JudgmentStats& stats, const InvertedIndex& index,
                                           const SamplerConfig& cfg, Rng& rng, const BM25Params& bm25) {
  auto ranked = fdm_ranked_pool(query, corpus, stats, index, cfg, bm25);
  const std::size_t n = ranked.size();
  const std::size_t window = cfg.fdm_positive_window;
  // The negative tail shrinks to whatever lies past the positive window.
  if (n <= window) return std::nullopt;
  const std::size_t lambda = std::min(cfg.lambda, n - window);

  ContrastiveGroup group;
  group.task = Task::FDM;
  group.query_id = query.id;
  group.positive_id = ranked[rng.index(window)].doc_id;
  for (std::size_t i = n - lambda; i < n; ++i) group.negative_ids.push_back(ranked[i].doc_id);
  return group;
}

void generate_lam(const Corpus& corpus, const Vocabulary& vocab, const SamplerConfig& cfg, std::uint64_t epoch,
                  const std::function<void(const MaskedSequence&)>& sink) {
  if (vocab.content_size() == 0) throw Error(ErrorCode::EmptyVocabulary, "vocabulary has no tokens");
  std::uint64_t sequence_index = 0;
  std::vector<std::uint32_t> ids;
  for (const auto& doc : corpus) {
    ids.clear();
    auto append = [&](std::string_view text) {
      for (const auto& t : tokenize(text, vocab.scheme())) ids.push_back(vocab.id(t).value_or(Vocabulary::kUnk));
    };
    append(doc.fact);
    if (doc.full_text) append(*doc.full_text);
    for (std::size_t begin = 0; begin < ids.size(); begin += cfg.max_len) {
      std::vector<std::uint32_t> chunk(ids.begin() + static_cast<std::ptrdiff_t>(begin),
                                       ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), begin + cfg.max_len)));
      sink(mask_sequence(chunk, cfg.mask_ratio, cfg.seed, epoch, sequence_index++));
    }
  }
}

std::vector<MaskedSequence> generate_lam(const Corpus& corpus, const Vocabulary& vocab, const SamplerConfig& cfg,
                                         std::uint64_t epoch) {
  std::vector<MaskedSequence> out;
  generate_lam(corpus, vocab, cfg, epoch, [&](const MaskedSequence& s) { out.push_back(s); });
  return out;
}

std::string task_file_name(Task task) {
  switch (task) {
    case Task::LAM: return "lam.jsonl";
    case Task::LJP: return "ljp.jsonl";
    case Task::FDM: return "fdm.jsonl";
  }
  return "data.jsonl";
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json tasks_json = nlohmann::json::object();
  for (const auto& [task, s] : tasks) {
    tasks_json[std::string(casekit::to_string(task))] = {
        {"items", s.items}, {"queries", s.queries}, {"skipped", s.skipped}, {"file", s.file}};
  }
  return {{"tasks", tasks_json},
          {"config", config.to_json()},
          {"seed", config.seed},
          {"bm25", {{"k1", bm25.k1}, {"b", bm25.b}}},
          {"scheme", casekit::to_string(scheme)},
          {"corpus_source", corpus_source},
          {"corpus_size", corpus_size}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  for (const auto& [name, s] : j.at("tasks").items()) {
    auto task = parse_task(name);
    if (!task) throw Error(ErrorCode::ParseError, "unknown task " + name);
    m.tasks[*task] = {s.at("items").get<std::size_t>(), s.at("queries").get<std::size_t>(),
                      s.at("skipped").get<std::size_t>(), s.at("file").get<std::string>()};
  }
  m.config = SamplerConfig::from_json(j.at("config"));
  m.bm25 = {j.at("bm25").at("k1").get<double>(), j.at("bm25").at("b").get<double>()};
  auto scheme = parse_token_scheme(j.at("scheme").get<std::string>());
  if (!scheme) throw Error(ErrorCode::ParseError, "unknown token scheme in manifest");
  m.scheme = *scheme;
  m.corpus_source = j.value("corpus_source", "");
  m.corpus_size = j.value("corpus_size", std::size_t{0});
  return m;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& dir) {
  try {
    return from_json(nlohmann::json::parse(read_file(dir / kManifestFile)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, "manifest: " + std::string(e.what()));
  }
}

DatasetManifest build_dataset(const Corpus& corpus, const std::set<Task>& tasks, const SamplerConfig& cfg,
                              const std::filesystem::path& out_dir, const DatasetOptions& options) {
  cfg.validate();
  options.bm25.validate();
  DatasetManifest manifest;
  manifest.config = cfg;
  manifest.bm25 = options.bm25;
  manifest.scheme = options.scheme;
  manifest.corpus_source = corpus.source();
  manifest.corpus_size = corpus.size();
  if (tasks.empty()) return manifest;
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot sample from an empty corpus");

  std::filesystem::create_directories(out_dir);
  std::optional<InvertedIndex> index;
  std::optional<JudgmentStats> stats;
  if (tasks.contains(Task::LJP) || tasks.contains(Task::FDM)) {
    index = InvertedIndex::build(corpus, options.scheme);
    stats = JudgmentStats::from_index(*index);
  }

  for (Task task : tasks) {
    TaskSummary summary;
    summary.file = task_file_name(task);
    AtomicFile file(out_dir / summary.file);

    if (task == Task::LAM) {
      auto vocab = Vocabulary::build(corpus, options.scheme);
      generate_lam(corpus, vocab, cfg, 0, [&](const MaskedSequence& seq) {
        file.stream() << to_json(seq).dump() << '\n';
        ++summary.items;
      });
      summary.queries = corpus.size();
      vocab.save(out_dir / "vocab.tsv");
    } else {
      // Each query's output lands in its own slot, so the file contents do
      // not depend on the worker count.
      std::vector<std::vector<ContrastiveGroup>> per_query(corpus.size());
      parallel_for(corpus.size(), options.threads, [&](std::size_t i) {
        const auto& query = corpus[i];
        if (task == Task::LJP) {
          if (auto groups = sample_ljp(query, corpus, *index, cfg, options.bm25)) per_query[i] = std::move(*groups);
        } else {
          auto rng = fdm_rng(cfg.seed, query.id);
          if (auto group = sample_fdm(query, corpus, *stats, *index, cfg, rng, options.bm25))
            per_query[i].push_back(std::move(*group));
        }
      });
      for (const auto& groups : per_query) {
        if (groups.empty()) {
          ++summary.skipped;
          continue;
        }
        ++summary.queries;
        for (const auto& g : groups) {
          file.stream() << to_json(g).dump() << '\n';
          ++summary.items;
        }
      }
    }
    file.commit();
    manifest.tasks[task] = summary;
  }
  write_file_atomically(out_dir / kManifestFile, manifest.to_json().dump(2) + "\n");
  return manifest;
}

std::vector<ContrastiveGroup> read_groups(const std::filesystem::path& path) {
  return read_jsonl<ContrastiveGroup>(path, group_from_json);
}

std::vector<MaskedSequence> read_sequences(const std::filesystem::path& path) {
  return read_jsonl<MaskedSequence>(path, sequence_from_json);
}

}  // namespace casekit

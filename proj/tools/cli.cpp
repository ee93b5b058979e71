#include "cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <filesystem>
#include <optional>
#include <sstream>

#include "casekit/corpus.hpp"
#include "casekit/encoder.hpp"
#include "casekit/error.hpp"
#include "casekit/eval.hpp"
#include "casekit/io.hpp"
#include "casekit/lpicf.hpp"
#include "casekit/pipeline.hpp"
#include "casekit/sampler.hpp"
#include "casekit/synth.hpp"
#include "casekit/textindex.hpp"

namespace casekit::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.3.0";

struct GlobalOptions {
  std::uint64_t seed = 7;
  unsigned threads = 1;
  std::string out_dir = "casekit-out";
  bool verbose = false;
};

struct SamplerFlags {
  SamplerConfig cfg;
  double k1 = BM25Params::tuned().k1;
  double b = BM25Params::tuned().b;
  std::string scheme = "mixed";

  void attach(CLI::App* cmd) {
    cmd->add_option("--pool-size", cfg.pool_size, "candidate pool size")->capture_default_str();
    cmd->add_option("--fdm-window", cfg.fdm_positive_window, "FDM positive window (top ranks)")->capture_default_str();
    cmd->add_option("--lambda", cfg.lambda, "FDM negatives taken from the BM25 tail")->capture_default_str();
    cmd->add_option("--mask-ratio", cfg.mask_ratio, "LAM masking probability")->capture_default_str();
    cmd->add_option("--max-len", cfg.max_len, "maximum LAM sequence length")->capture_default_str();
    cmd->add_option("--negatives-cap", cfg.negatives_cap, "cap on LJP negatives per group (0 = none)")
        ->capture_default_str();
    cmd->add_option("--positives-cap", cfg.positives_cap, "cap on LJP groups per query (0 = none)")
        ->capture_default_str();
    cmd->add_option("--k1", k1, "BM25 k1")->capture_default_str();
    cmd->add_option("--b", b, "BM25 b")->capture_default_str();
    cmd->add_option("--scheme", scheme, "tokenizer scheme")
        ->check(CLI::IsMember({"whitespace_latin", "char_cjk", "mixed"}))
        ->capture_default_str();
  }

  DatasetOptions options(unsigned threads) const { return {{k1, b}, *parse_token_scheme(scheme), threads}; }
};

struct TrainFlags {
  TrainConfig cfg;
  std::string arch = "dual";
  std::string schedule = "round_robin";
  std::string weights = "LAM=1,LJP=1,FDM=1";

  void attach(CLI::App* cmd) {
    cmd->add_option("--lr", cfg.learning_rate, "learning rate")->capture_default_str();
    cmd->add_option("--epochs", cfg.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--batch-size", cfg.batch_size, "items per task batch")->capture_default_str();
    cmd->add_option("--dim", cfg.dim, "embedding dimension")->capture_default_str();
    cmd->add_option("--hidden", cfg.hidden, "cross-encoder hidden units")->capture_default_str();
    cmd->add_option("--init-scale", cfg.init_scale, "uniform init half-width")->capture_default_str();
    cmd->add_option("--train-max-len", cfg.max_len, "truncate case facts to this many tokens")->capture_default_str();
    cmd->add_option("--weights", weights, "task weights, e.g. LAM=0,LJP=1,FDM=1")->capture_default_str();
    cmd->add_option("--schedule", schedule, "task interleaving")
        ->check(CLI::IsMember({"round_robin", "mixed"}))
        ->capture_default_str();
  }

  void attach_arch(CLI::App* cmd) {
    cmd->add_option("--arch", arch, "encoder architecture")->check(CLI::IsMember({"dual", "cross"}))->capture_default_str();
  }

  TrainConfig resolve(std::uint64_t seed) const {
    TrainConfig c = cfg;
    c.seed = seed;
    c.architecture = arch == "cross" ? Architecture::Cross : Architecture::Dual;
    c.schedule = schedule == "mixed" ? Schedule::Mixed : Schedule::RoundRobin;
    c.task_weights = {0.0, 0.0, 0.0};
    std::stringstream ss(weights);
    for (std::string item; std::getline(ss, item, ',');) {
      auto eq = item.find('=');
      auto task = parse_task(item.substr(0, eq));
      if (!task || eq == std::string::npos) throw Error(ErrorCode::InvalidConfig, "weights: bad entry '" + item + "'");
      double w = 0.0;
      try {
        w = std::stod(item.substr(eq + 1));
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "weights: bad value in '" + item + "'");
      }
      if (*task == Task::LAM) c.task_weights.lam = w;
      if (*task == Task::LJP) c.task_weights.ljp = w;
      if (*task == Task::FDM) c.task_weights.fdm = w;
    }
    c.validate();
    return c;
  }
};

/// Collects what a command produced and writes the run manifest.
class RunRecord {
 public:
  RunRecord(std::string command, const GlobalOptions& g, std::vector<std::string> args)
      : command_(std::move(command)), global_(g), args_(std::move(args)) {}

  fs::path out_dir() const { return global_.out_dir; }
  fs::path output(const std::string& explicit_path, const std::string& default_name) {
    fs::path p = explicit_path.empty() ? out_dir() / default_name : fs::path(explicit_path);
    outputs_.push_back(p.string());
    return p;
  }
  void note(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }

  void write() const {
    nlohmann::json j = {{"command", command_},  {"args", args_},       {"seed", global_.seed},
                        {"threads", global_.threads}, {"outputs", outputs_}, {"version", kVersion}};
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    write_file_atomically(out_dir() / ("run-" + command_ + ".json"), j.dump(2) + "\n");
  }

 private:
  std::string command_;
  GlobalOptions global_;
  std::vector<std::string> args_;
  std::vector<std::string> outputs_;
  nlohmann::json extra_ = nlohmann::json::object();
};

InvertedIndex index_for(const std::string& index_path, const Corpus& corpus, TokenScheme scheme) {
  if (!index_path.empty()) return load_index(index_path);
  return build_index(corpus, scheme);
}

void print_ranked(std::ostream& out, const std::string& query, const std::vector<ScoredDoc>& ranked) {
  for (std::size_t r = 0; r < ranked.size(); ++r)
    out << query << '\t' << (r + 1) << '\t' << ranked[r].doc_id << '\t' << format_double(ranked[r].score) << '\n';
}

std::string usage_text(CLI::App& app) { return app.help(); }

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("casekit");
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("casekit", sink);
  logger->set_pattern("[%l] %v");
  auto previous = spdlog::default_logger();
  spdlog::set_default_logger(logger);
  struct RestoreLogger {
    std::shared_ptr<spdlog::logger> previous;
    ~RestoreLogger() { spdlog::set_default_logger(previous); }
  } restore{previous};

  CLI::App app{"casekit: training-data factory and evaluation toolkit for legal case retrieval", "casekit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "pipeline config file (TOML; flags override it)");
  app.allow_config_extras(CLI::config_extras_mode::error);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "random seed recorded in every manifest")->capture_default_str();
  app.add_option("--threads", g.threads, "worker cap")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "directory for outputs and the run manifest")->capture_default_str();
  app.add_flag("-v,--verbose", g.verbose, "debug logging");
  app.set_version_flag("--version", kVersion);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic legal corpus");
  std::string synth_config, synth_out;
  std::optional<std::size_t> synth_cases;
  std::string synth_qrels, parse_qrels;
  synth->add_option("--config,--synth-config", synth_config, "synthetic corpus config (JSON)")
      ->check(CLI::ExistingFile);
  synth->add_option("--qrels", synth_qrels, "also write same-judgment qrels here");
  synth->add_option("--n-cases", synth_cases, "override number of cases");
  synth->add_option("--out", synth_out, "output JSONL (default <out-dir>/corpus.jsonl)");

  // parse
  auto* parse = app.add_subcommand("parse", "validate and normalize a JSONL corpus");
  std::string parse_in, parse_out;
  parse->add_option("--input", parse_in, "raw JSONL corpus")->required()->check(CLI::ExistingFile);
  parse->add_option("--out", parse_out, "canonical JSONL (default <out-dir>/corpus.jsonl)");
  parse->add_option("--qrels", parse_qrels, "also write same-judgment qrels here");

  // index
  auto* index_cmd = app.add_subcommand("index", "build a BM25 inverted index");
  std::string index_corpus, index_out, index_scheme = "mixed";
  index_cmd->add_option("--corpus", index_corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  index_cmd->add_option("--out", index_out, "index file (default <out-dir>/index.bin)");
  index_cmd->add_option("--scheme", index_scheme, "tokenizer scheme")
      ->check(CLI::IsMember({"whitespace_latin", "char_cjk", "mixed"}))
      ->capture_default_str();

  // search
  auto* search = app.add_subcommand("search", "rank cases for one query or for every case");
  std::string search_method = "bm25", search_corpus, search_index, search_query, search_run, search_ckpt;
  std::size_t search_k = 200;
  double search_k1 = 3.8, search_b = 0.87, search_mu = kDefaultDirichletMu;
  bool search_all = false;
  search->add_option("--method", search_method, "bm25, ql, lpicf or dense")
      ->check(CLI::IsMember({"bm25", "ql", "lpicf", "dense"}))
      ->capture_default_str();
  search->add_option("--corpus", search_corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  search->add_option("--index", search_index, "prebuilt index (built on the fly otherwise)")->check(CLI::ExistingFile);
  search->add_option("--checkpoint", search_ckpt, "dual-encoder checkpoint for --method dense")
      ->check(CLI::ExistingFile);
  auto* qid_opt = search->add_option("--query-id", search_query, "query case id");
  auto* all_opt = search->add_flag("--all", search_all, "use every case as a query and write a run file");
  qid_opt->excludes(all_opt);
  search->add_option("--run", search_run, "run file for --all (default <out-dir>/<method>.run)");
  search->add_option("--k", search_k, "results per query")->check(CLI::PositiveNumber)->capture_default_str();
  search->add_option("--k1", search_k1, "BM25 k1")->capture_default_str();
  search->add_option("--b", search_b, "BM25 b")->capture_default_str();
  search->add_option("--mu", search_mu, "Dirichlet mu for ql")->capture_default_str();

  // samplers
  struct SampleCommand {
    CLI::App* app;
    Task task;
    std::string corpus, out;
    SamplerFlags flags;
  };
  std::vector<std::unique_ptr<SampleCommand>> samplers;
  for (auto [name, task, help] : {std::tuple{"sample-ljp", Task::LJP, "build LJP contrastive groups"},
                                  std::tuple{"sample-fdm", Task::FDM, "build FDM contrastive groups"},
                                  std::tuple{"mask-lam", Task::LAM, "build LAM masked sequences"}}) {
    auto cmd = std::make_unique<SampleCommand>();
    cmd->app = app.add_subcommand(name, help);
    cmd->task = task;
    cmd->app->add_option("--corpus", cmd->corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
    cmd->app->add_option("--out", cmd->out, "dataset directory (default <out-dir>/data)");
    cmd->flags.attach(cmd->app);
    samplers.push_back(std::move(cmd));
  }

  // train
  auto* train_cmd = app.add_subcommand("train", "train a dual or cross encoder on a dataset directory");
  std::string train_corpus, train_data;
  TrainFlags train_flags;
  train_cmd->add_option("--corpus", train_corpus, "JSONL corpus the dataset was built from")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--data", train_data, "dataset directory with manifest.json")
      ->required()
      ->check(CLI::ExistingDirectory);
  train_flags.attach(train_cmd);
  train_flags.attach_arch(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a run against qrels");
  std::string eval_run, eval_qrels, eval_metrics = "recall@100,ndcg@10,mrr@10", eval_compare, eval_report;
  std::string eval_gain = "linear", eval_relevant = "2,3";
  std::size_t eval_iters = 100000;
  std::optional<std::uint64_t> eval_seed;
  eval_cmd->add_option("--run", eval_run, "run file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--qrels", eval_qrels, "qrels file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--metrics", eval_metrics, "comma-separated metric@k list")->capture_default_str();
  eval_cmd->add_option("--compare", eval_compare, "second run for a randomization test")->check(CLI::ExistingFile);
  eval_cmd->add_option("--sig-iters", eval_iters, "randomization iterations")->capture_default_str();
  eval_cmd->add_option("--sig-seed", eval_seed, "randomization seed (defaults to --seed)");
  eval_cmd->add_option("--gain", eval_gain, "NDCG gain")->check(CLI::IsMember({"linear", "exp"}))->capture_default_str();
  eval_cmd->add_option("--relevant", eval_relevant, "grades counted relevant")->capture_default_str();
  eval_cmd->add_option("--report", eval_report, "TSV report (default <out-dir>/metrics.tsv)");

  // export-embeddings
  auto* export_cmd = app.add_subcommand("export-embeddings", "write one dual-encoder vector per case");
  std::string export_ckpt, export_corpus, export_out;
  export_cmd->add_option("--checkpoint", export_ckpt, "dual-encoder checkpoint")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--corpus", export_corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--out", export_out, "TSV output (default <out-dir>/embeddings.tsv)");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate every combination of LAM, LJP and FDM");
  std::string ablate_corpus;
  SamplerFlags ablate_sampler;
  TrainFlags ablate_train;
  std::size_t ablate_queries = 0, ablate_k = 100, ablate_iters = 100000;
  ablate_cmd->add_option("--corpus", ablate_corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  ablate_sampler.cfg.negatives_cap = 16;
  ablate_sampler.cfg.positives_cap = 2;
  ablate_sampler.attach(ablate_cmd);
  ablate_train.attach(ablate_cmd);
  ablate_cmd->add_option("--eval-queries", ablate_queries, "evaluate the first N cases (0 = all)")->capture_default_str();
  ablate_cmd->add_option("--recall-k", ablate_k, "Recall cutoff")->capture_default_str();
  ablate_cmd->add_option("--sig-iters", ablate_iters, "randomization iterations")->capture_default_str();

  if (argc <= 1) {
    err << usage_text(app);
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    if (dynamic_cast<const CLI::RequiredError*>(&e) && app.get_subcommands().empty()) err << usage_text(app);
    return kExitUsage;
  }
  if (g.verbose) logger->set_level(spdlog::level::debug);

  std::vector<std::string> arg_list(argv + 1, argv + argc);
  CLI::App* chosen = app.get_subcommands().front();
  RunRecord record(chosen->get_name(), g, arg_list);

  try {
    fs::create_directories(g.out_dir);

    if (chosen == synth) {
      SynthConfig cfg = SynthConfig::standard();
      if (!synth_config.empty()) {
        try {
          cfg = SynthConfig::from_json(nlohmann::json::parse(read_file(synth_config)));
        } catch (const nlohmann::json::exception& e) {
          throw Error(ErrorCode::InvalidConfig, std::string("synth config: ") + e.what());
        }
      }
      if (synth_config.empty() || app.count("--seed") > 0) cfg.seed = g.seed;
      if (synth_cases) cfg.n_cases = *synth_cases;
      auto corpus = generate_corpus(cfg);
      save_corpus(corpus, record.output(synth_out, "corpus.jsonl"));
      if (!synth_qrels.empty()) write_qrels(judgment_qrels(corpus, leading_ids(corpus, 0)), record.output(synth_qrels, ""));
      record.note("synth_config", cfg.to_json());
      out << "generated " << corpus.size() << " cases\n";
    } else if (chosen == parse) {
      auto corpus = load_corpus(parse_in, g.threads);
      save_corpus(corpus, record.output(parse_out, "corpus.jsonl"));
      if (!parse_qrels.empty()) write_qrels(judgment_qrels(corpus, leading_ids(corpus, 0)), record.output(parse_qrels, ""));
      record.note("documents", corpus.size());
      record.note("skipped_lines", corpus.skipped_lines());
      out << "parsed " << corpus.size() << " cases, skipped " << corpus.skipped_lines() << " malformed lines\n";
    } else if (chosen == index_cmd) {
      auto corpus = load_corpus(index_corpus, g.threads);
      auto index = build_index(corpus, *parse_token_scheme(index_scheme));
      persist_index(index, record.output(index_out, "index.bin"));
      out << "indexed " << index.n_docs() << " cases, " << index.vocabulary_size() << " terms\n";
    } else if (chosen == search) {
      if (search_query.empty() && !search_all) throw Error(ErrorCode::InvalidConfig, "search needs --query-id or --all");
      BM25Params params{search_k1, search_b};
      params.validate();
      auto corpus = load_corpus(search_corpus, g.threads);
      std::optional<InvertedIndex> index;
      std::optional<Checkpoint> ckpt;
      JudgmentStats stats;
      if (search_method == "bm25" || search_method == "ql") index = index_for(search_index, corpus, TokenScheme::Mixed);
      if (search_method == "lpicf") stats = JudgmentStats::from_corpus(corpus);
      if (search_method == "dense") {
        if (search_ckpt.empty()) throw Error(ErrorCode::InvalidConfig, "--method dense needs --checkpoint");
        ckpt = Checkpoint::load(search_ckpt);
        if (!std::holds_alternative<DualModel>(ckpt->model))
          throw Error(ErrorCode::InvalidConfig, "--method dense needs a dual-encoder checkpoint");
      }
      auto rank = [&](const LegalCaseDocument& q) -> std::vector<ScoredDoc> {
        if (search_method == "bm25") return search_bm25(*index, tokenize(q.fact, index->scheme()), search_k, params, q.id);
        if (search_method == "ql") return search_ql(*index, tokenize(q.fact, index->scheme()), search_k, search_mu, q.id);
        if (search_method == "lpicf") return search_lpicf(q, corpus, stats, search_k);
        auto run = dense_run(std::get<DualModel>(ckpt->model), ckpt->vocab, corpus, {q.id}, search_k,
                             ckpt->config.max_len);
        std::vector<ScoredDoc> hits;
        for (const auto& e : run.queries[q.id]) hits.push_back({e.doc_id, e.score});
        return hits;
      };
      if (!search_all) {
        const auto* q = corpus.find(search_query);
        if (q == nullptr) throw Error(ErrorCode::UnknownDoc, search_query);
        print_ranked(out, q->id, rank(*q));
      } else {
        RunFile run;
        run.tag = search_method;
        if (search_method == "dense") {
          run = dense_run(std::get<DualModel>(ckpt->model), ckpt->vocab, corpus, leading_ids(corpus, 0), search_k,
                          ckpt->config.max_len, search_method);
        } else {
          for (const auto& q : corpus) {
            auto hits = rank(q);
            auto& ranking = run.queries[q.id];
            for (std::size_t r = 0; r < hits.size(); ++r) ranking.push_back({hits[r].doc_id, hits[r].score, r + 1});
          }
        }
        write_run(run, record.output(search_run, search_method + ".run"));
        out << "wrote rankings for " << run.queries.size() << " queries\n";
      }
    } else if (chosen == train_cmd) {
      auto cfg = train_flags.resolve(g.seed);
      auto corpus = load_corpus(train_corpus, g.threads);
      auto result = train(corpus, train_data, cfg);
      result.checkpoint.save(record.output("", "checkpoint.bin"));
      write_loss_curve(result.loss_curve, record.output("", "loss.csv"));
      record.note("train_config", cfg.to_json());
      for (const auto& r : result.loss_curve)
        if (r.epoch == 0 || r.epoch == cfg.epochs)
          out << "epoch " << r.epoch << ' ' << to_string(r.task) << " mean_loss " << format_double(r.mean_loss) << '\n';
    } else if (chosen == eval_cmd) {
      auto metrics = parse_metric_list(eval_metrics);
      std::vector<int> grades;
      std::stringstream grade_list(eval_relevant);
      for (std::string item; std::getline(grade_list, item, ',');) {
        try {
          grades.push_back(std::stoi(item));
        } catch (const std::exception&) {
          throw Error(ErrorCode::InvalidConfig, "--relevant: bad grade '" + item + "'");
        }
      }
      const GradeSet relevant = GradeSet::of(grades);
      const Gain gain = eval_gain == "exp" ? Gain::Exponential : Gain::Linear;
      auto run = read_run(eval_run);
      auto qrels = read_qrels(eval_qrels);
      std::optional<RunFile> other;
      if (!eval_compare.empty()) other = read_run(eval_compare);
      std::ostringstream report;
      report << "metric\tsystem\tmean\tqueries\tskipped\n";
      std::ostringstream sig;
      for (const auto& m : metrics) {
        auto a = evaluate_metric(m, run, qrels, relevant, gain);
        report << m.label() << '\t' << run.tag << '\t' << format_double(a.mean) << '\t' << a.per_query.size() << '\t'
               << a.skipped << '\n';
        if (other) {
          auto b = evaluate_metric(m, *other, qrels, relevant, gain);
          report << m.label() << '\t' << other->tag << '\t' << format_double(b.mean) << '\t' << b.per_query.size()
                 << '\t' << b.skipped << '\n';
          std::vector<double> va, vb;
          paired_values(a, b, va, vb);
          if (!va.empty()) {
            double p = fisher_randomization(va, vb, eval_iters, eval_seed.value_or(g.seed));
            sig << m.label() << '\t' << run.tag << " vs " << other->tag << "\tp=" << format_double(p) << '\n';
          }
        }
      }
      if (other) report << "# randomization test (" << eval_iters << " iterations)\n" << sig.str();
      write_file_atomically(record.output(eval_report, "metrics.tsv"), report.str());
      out << report.str();
    } else if (chosen == export_cmd) {
      auto ckpt = Checkpoint::load(export_ckpt);
      if (!std::holds_alternative<DualModel>(ckpt.model))
        throw Error(ErrorCode::InvalidConfig, "export-embeddings needs a dual-encoder checkpoint");
      auto corpus = load_corpus(export_corpus, g.threads);
      export_embeddings(std::get<DualModel>(ckpt.model), ckpt.vocab, corpus,
                        record.output(export_out, "embeddings.tsv"), ckpt.config.max_len);
      out << "exported " << corpus.size() << " embeddings\n";
    } else if (chosen == ablate_cmd) {
      AblationConfig cfg;
      cfg.sampler = ablate_sampler.cfg;
      cfg.sampler.seed = g.seed;
      cfg.dataset = ablate_sampler.options(g.threads);
      cfg.train = ablate_train.resolve(g.seed);
      cfg.eval_queries = ablate_queries;
      cfg.recall_k = ablate_k;
      cfg.sig_iterations = ablate_iters;
      cfg.sig_seed = g.seed;
      auto corpus = load_corpus(ablate_corpus, g.threads);
      auto report = run_ablation(corpus, cfg, g.out_dir);
      auto table = report.to_tsv(ablate_k);
      write_file_atomically(record.output("", "ablation.tsv"), table);
      record.note("dataset", report.manifest.to_json());
      record.note("train_config", cfg.train.to_json());
      out << table;
    } else {
      for (const auto& s : samplers) {
        if (chosen != s->app) continue;
        SamplerConfig cfg = s->flags.cfg;
        cfg.seed = g.seed;
        auto corpus = load_corpus(s->corpus, g.threads);
        fs::path dir = s->out.empty() ? fs::path(g.out_dir) / "data" : fs::path(s->out);
        std::optional<DatasetManifest> previous;
        if (fs::exists(dir / kManifestFile)) previous = DatasetManifest::load(dir);
        auto manifest = build_dataset(corpus, {s->task}, cfg, dir, s->flags.options(g.threads));
        // Running the three samplers into one directory accumulates their tasks.
        auto settings = [](const DatasetManifest& m) {
          auto j = m.to_json();
          j.erase("tasks");
          return j;
        };
        if (previous && settings(*previous) == settings(manifest)) {
          for (const auto& [task, summary] : previous->tasks) manifest.tasks.try_emplace(task, summary);
          write_file_atomically(dir / kManifestFile, manifest.to_json().dump(2) + "\n");
        } else if (previous) {
          spdlog::warn("sampler settings differ from {}; earlier tasks dropped from the manifest",
                       (dir / kManifestFile).string());
        }
        record.output((dir / task_file_name(s->task)).string(), "");
        record.output((dir / kManifestFile).string(), "");
        record.note("dataset", manifest.to_json());
        const auto& summary = manifest.tasks.at(s->task);
        out << to_string(s->task) << ": " << summary.items << " items from " << summary.queries << " queries, "
            << summary.skipped << " skipped\n";
      }
    }
    record.write();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::InvalidConfig ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace casekit::cli

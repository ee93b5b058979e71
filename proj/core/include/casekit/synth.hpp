#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "casekit/corpus.hpp"

namespace casekit {

struct SynthCrime {
  std::string label;
  std::vector<std::string> provisions;
  std::string category;
  /// Words drawn for the {crime} slots of this crime's template.
  std::vector<std::string> vocabulary;
  /// Space-separated words and slots: {crime}, {category}, {noise}, {cue}.
  std::string fact_template;
};

/// A provision that may be added to any case, with the words that signal
/// it in the fact text.
struct SharedProvision {
  std::string label;
  std::vector<std::string> cue_words;
};

struct SynthConfig {
  std::size_t n_cases = 2000;
  std::vector<SynthCrime> crimes;
  std::map<std::string, std::vector<std::string>> category_vocabulary;
  std::vector<SharedProvision> shared_provisions;
  double extra_provision_probability = 0.2;
  std::size_t noise_vocab_size = 200;
  std::uint64_t seed = 7;

  /// Four crimes in two categories (bribery, corruption / provocation, affray).
  static SynthConfig standard();

  /// Throws Error(InvalidConfig).
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys fall back to standard().
  static SynthConfig from_json(const nlohmann::json& j);
};

/// Fully determined by cfg.seed. Each case gets a uniformly drawn crime,
/// that crime's provisions, and with the configured probability one extra
/// shared provision whose cue words are appended to the fact.
Corpus generate_corpus(const SynthConfig& cfg);

}  // namespace casekit

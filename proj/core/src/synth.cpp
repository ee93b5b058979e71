#include "casekit/synth.hpp"

#include <cstdio>
#include <sstream>

#include "casekit/error.hpp"
#include "casekit/random.hpp"

namespace casekit {

namespace {

std::string noise_word(std::size_t i) {
  static const char* const kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* const kVowels[] = {"a", "e", "i", "o", "u"};
  std::string w;
  std::size_t x = i + 1;
  while (x > 0) {
    w += kOnsets[x % 14];
    x /= 14;
    w += kVowels[x % 5];
    x /= 5;
  }
  return w + "x";
}

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[rng.index(items.size())];
}

}  // namespace

SynthConfig SynthConfig::standard() {
  SynthConfig cfg;
  cfg.category_vocabulary = {
      {"duty crime",
       {"official", "bureau", "approval", "contract", "funds", "office", "permit", "project", "account", "ledger"}},
      {"public order",
       {"crowd", "street", "night", "bar", "injury", "scene", "gathering", "hospital", "police", "disturbance"}},
  };
  const char* duty_template =
      "the defendant {noise} {category} {crime} {category} {crime} {noise} {crime} {category} {noise} {crime} "
      "{category} {crime} {noise} {cue}";
  const char* order_template =
      "on {noise} the defendant {category} {crime} {noise} {category} {crime} {crime} {noise} {category} {crime} "
      "{crime} {noise} {cue}";
  cfg.crimes = {
      {"bribery",
       {"art-389", "art-390"},
       "duty crime",
       {"bribe", "cash", "gift", "envelope", "kickback", "favor", "offered", "paid", "tender", "bid"},
       duty_template},
      {"corruption",
       {"art-382", "art-383"},
       "duty crime",
       {"embezzled", "misappropriated", "public", "treasury", "diverted", "subsidy", "salary", "forged", "invoice",
        "pocketed"},
       duty_template},
      {"provocation",
       {"art-293"},
       "public order",
       {"insulted", "chased", "smashed", "harassed", "provoked", "threatened", "vendor", "stall", "shouted",
        "damaged"},
       order_template},
      {"affray",
       {"art-292"},
       "public order",
       {"gang", "brawl", "clubs", "knives", "assembled", "rival", "fought", "melee", "armed", "organized"},
       order_template},
  };
  cfg.shared_provisions = {
      {"art-25", {"accomplice", "jointly"}},
      {"art-67", {"surrendered", "confessed"}},
      {"art-72", {"remorse", "probation"}},
      {"art-65", {"recidivist", "previously"}},
  };
  return cfg;
}

void SynthConfig::validate() const {
  if (crimes.size() < 2) throw Error(ErrorCode::InvalidConfig, "synthetic corpus needs at least two crimes");
  for (const auto& c : crimes) {
    if (c.label.empty()) throw Error(ErrorCode::InvalidConfig, "crime label must not be empty");
    if (c.provisions.empty()) throw Error(ErrorCode::InvalidConfig, "crime " + c.label + " has no provisions");
    if (c.fact_template.find_first_not_of(' ') == std::string::npos)
      throw Error(ErrorCode::InvalidConfig, "crime " + c.label + " has an empty template");
    if (c.fact_template.find("{crime}") != std::string::npos && c.vocabulary.empty())
      throw Error(ErrorCode::InvalidConfig, "crime " + c.label + " uses {crime} but has no vocabulary");
    if (c.fact_template.find("{category}") != std::string::npos) {
      auto it = category_vocabulary.find(c.category);
      if (it == category_vocabulary.end() || it->second.empty())
        throw Error(ErrorCode::InvalidConfig, "category '" + c.category + "' has no vocabulary");
    }
  }
  if (!(extra_provision_probability >= 0.0 && extra_provision_probability <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "extra_provision_probability must lie in [0, 1]");
  if (extra_provision_probability > 0.0 && shared_provisions.empty())
    throw Error(ErrorCode::InvalidConfig, "extra provisions requested but none configured");
  if (noise_vocab_size == 0) throw Error(ErrorCode::InvalidConfig, "noise_vocab_size must be >= 1");
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json crimes_json = nlohmann::json::array();
  for (const auto& c : crimes)
    crimes_json.push_back({{"label", c.label},
                           {"provisions", c.provisions},
                           {"category", c.category},
                           {"vocabulary", c.vocabulary},
                           {"template", c.fact_template}});
  nlohmann::json shared = nlohmann::json::array();
  for (const auto& s : shared_provisions) shared.push_back({{"label", s.label}, {"cue_words", s.cue_words}});
  return {{"n_cases", n_cases},
          {"crimes", crimes_json},
          {"category_vocabulary", category_vocabulary},
          {"shared_provisions", shared},
          {"extra_provision_probability", extra_provision_probability},
          {"noise_vocab_size", noise_vocab_size},
          {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig cfg = standard();
  try {
    cfg.n_cases = j.value("n_cases", cfg.n_cases);
    cfg.extra_provision_probability = j.value("extra_provision_probability", cfg.extra_provision_probability);
    cfg.noise_vocab_size = j.value("noise_vocab_size", cfg.noise_vocab_size);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("category_vocabulary"))
      cfg.category_vocabulary = j.at("category_vocabulary").get<std::map<std::string, std::vector<std::string>>>();
    if (j.contains("crimes")) {
      cfg.crimes.clear();
      for (const auto& c : j.at("crimes")) {
        cfg.crimes.push_back({c.at("label").get<std::string>(), c.at("provisions").get<std::vector<std::string>>(),
                              c.value("category", std::string()),
                              c.value("vocabulary", std::vector<std::string>{}),
                              c.at("template").get<std::string>()});
      }
    }
    if (j.contains("shared_provisions")) {
      cfg.shared_provisions.clear();
      for (const auto& s : j.at("shared_provisions"))
        cfg.shared_provisions.push_back(
            {s.at("label").get<std::string>(), s.value("cue_words", std::vector<std::string>{})});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("synth config: ") + e.what());
  }
  return cfg;
}

Corpus generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  static const char* const kCourts[] = {"north district court", "south district court", "city intermediate court"};
  std::vector<LegalCaseDocument> docs;
  docs.reserve(cfg.n_cases);
  const int width = std::max<int>(6, static_cast<int>(std::to_string(cfg.n_cases).size()));
  for (std::size_t i = 0; i < cfg.n_cases; ++i) {
    // Per-case streams keep every case independent of the others.
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    const auto& crime = cfg.crimes[rng.index(cfg.crimes.size())];
    const SharedProvision* extra = nullptr;
    if (rng.bernoulli(cfg.extra_provision_probability)) extra = &pick(cfg.shared_provisions, rng);

    std::ostringstream fact;
    std::istringstream words(crime.fact_template);
    bool first = true;
    for (std::string w; words >> w;) {
      std::string out;
      if (w == "{crime}") {
        out = pick(crime.vocabulary, rng);
      } else if (w == "{category}") {
        out = pick(cfg.category_vocabulary.at(crime.category), rng);
      } else if (w == "{noise}") {
        out = noise_word(rng.index(cfg.noise_vocab_size));
      } else if (w == "{cue}") {
        if (extra == nullptr || extra->cue_words.empty()) continue;
        for (std::size_t k = 0; k < extra->cue_words.size(); ++k) out += (k ? " " : "") + extra->cue_words[k];
      } else {
        out = w;
      }
      fact << (first ? "" : " ") << out;
      first = false;
    }

    LegalCaseDocument doc;
    char id[32];
    std::snprintf(id, sizeof(id), "case-%0*zu", width, i);
    doc.id = id;
    doc.fact = fact.str();
    doc.crimes.insert(normalize_label(crime.label));
    for (const auto& p : crime.provisions) doc.provisions.insert(normalize_label(p));
    if (extra) doc.provisions.insert(normalize_label(extra->label));
    doc.court = kCourts[rng.index(3)];
    doc.defendant = "defendant " + std::to_string(i);
    docs.push_back(std::move(doc));
  }
  return Corpus(std::move(docs), "synthetic");
}

}  // namespace casekit

#include <gtest/gtest.h>

#include "casekit/error.hpp"
#include "casekit/synth.hpp"

using namespace casekit;

TEST(Synth, ZeroCasesGivesEmptyCorpus) {
  auto cfg = SynthConfig::standard();
  cfg.n_cases = 0;
  EXPECT_TRUE(generate_corpus(cfg).empty());
}

TEST(Synth, SameSeedSameCorpus) {
  auto cfg = SynthConfig::standard();
  EXPECT_EQ(cfg.n_cases, 2000u);
  EXPECT_EQ(cfg.crimes.size(), 4u);
  auto a = generate_corpus(cfg);
  auto b = generate_corpus(cfg);
  EXPECT_EQ(a.documents(), b.documents());
  cfg.seed += 1;
  EXPECT_NE(generate_corpus(cfg).documents(), a.documents());
}

TEST(Synth, PrefixStableWhenGrowing) {
  auto cfg = SynthConfig::standard();
  cfg.n_cases = 100;
  auto small = generate_corpus(cfg);
  cfg.n_cases = 300;
  auto large = generate_corpus(cfg);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(small[i], large[i]);
}

TEST(Synth, LabelsFollowCrimeDefinitions) {
  auto cfg = SynthConfig::standard();
  auto corpus = generate_corpus(cfg);
  std::set<std::string> shared;
  for (const auto& p : cfg.shared_provisions) shared.insert(p.label);
  std::map<std::string, std::size_t> per_crime;
  std::size_t with_extra = 0;
  for (const auto& d : corpus) {
    ASSERT_EQ(d.crimes.size(), 1u);
    const auto& label = *d.crimes.begin();
    auto it = std::find_if(cfg.crimes.begin(), cfg.crimes.end(), [&](const auto& c) { return c.label == label; });
    ASSERT_NE(it, cfg.crimes.end());
    ++per_crime[label];
    std::set<std::string> base(it->provisions.begin(), it->provisions.end());
    std::size_t extras = 0;
    for (const auto& p : d.provisions) {
      if (base.count(p)) continue;
      EXPECT_TRUE(shared.count(p)) << p;
      ++extras;
    }
    for (const auto& p : base) EXPECT_TRUE(d.provisions.count(p));
    EXPECT_LE(extras, 1u);
    with_extra += extras;
    EXPECT_FALSE(d.fact.empty());
  }
  // Uniform crime choice and a 0.2 extra-provision rate, within loose bounds.
  for (const auto& [c, n] : per_crime) {
    EXPECT_GT(n, 400u) << c;
    EXPECT_LT(n, 600u) << c;
  }
  EXPECT_GT(with_extra, 320u);
  EXPECT_LT(with_extra, 480u);
}

TEST(Synth, ConfigJsonRoundTrip) {
  auto cfg = SynthConfig::standard();
  cfg.n_cases = 12;
  cfg.seed = 99;
  auto back = SynthConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(generate_corpus(back).documents(), generate_corpus(cfg).documents());
  auto partial = SynthConfig::from_json(nlohmann::json{{"n_cases", 5}});
  EXPECT_EQ(partial.n_cases, 5u);
  EXPECT_EQ(partial.crimes.size(), 4u);
}

TEST(Synth, InvalidConfigs) {
  auto cfg = SynthConfig::standard();
  cfg.crimes.resize(1);
  EXPECT_THROW(generate_corpus(cfg), Error);
  cfg = SynthConfig::standard();
  cfg.crimes[0].provisions.clear();
  EXPECT_THROW(cfg.validate(), Error);
  cfg = SynthConfig::standard();
  cfg.crimes[1].fact_template = "  ";
  EXPECT_THROW(cfg.validate(), Error);
  cfg = SynthConfig::standard();
  cfg.extra_provision_probability = 2.0;
  EXPECT_THROW(cfg.validate(), Error);
}

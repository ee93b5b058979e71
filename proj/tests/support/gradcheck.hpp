#pragma once

// Central finite differences against the analytic batch gradient.

#include <algorithm>
#include <cmath>
#include <string>

#include "casekit/encoder.hpp"
#include "casekit/random.hpp"

namespace oracle {

struct GradCheck {
  double max_rel = 0.0;
  std::string worst;  ///< "block[index]" of the largest relative error
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is zero from dividing by rounding noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

template <typename Model>
GradCheck check_gradient(Model model, const casekit::Batch& batch, const casekit::TaskWeights& weights,
                         double eps = 1e-4) {
  const Model grad = casekit::batch_gradient(model, batch, weights);
  const auto g = grad.parameters();
  auto p = model.parameters();
  const auto names = Model::parameter_names();
  GradCheck out;
  for (std::size_t b = 0; b < p.size(); ++b) {
    for (std::size_t i = 0; i < p[b].size(); ++i) {
      const double x = p[b][i];
      p[b][i] = x + eps;
      const double up = casekit::batch_loss(model, batch, weights);
      p[b][i] = x - eps;
      const double down = casekit::batch_loss(model, batch, weights);
      p[b][i] = x;
      const double rel = relative_error(g[b][i], (up - down) / (2.0 * eps));
      ++out.checked;
      if (rel > out.max_rel) {
        out.max_rel = rel;
        out.worst = names[b] + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

inline casekit::TokenIds random_tokens(casekit::Rng& rng, std::uint32_t vocab, std::size_t min_len,
                                       std::size_t max_len) {
  casekit::TokenIds t(min_len + rng.index(max_len - min_len + 1));
  for (auto& id : t) id = static_cast<std::uint32_t>(rng.index(vocab));
  return t;
}

inline casekit::TokenizedGroup random_group(casekit::Rng& rng, std::uint32_t vocab) {
  casekit::TokenizedGroup g;
  g.query = random_tokens(rng, vocab, 1, 6);
  g.positive = random_tokens(rng, vocab, 1, 6);
  const std::size_t n = 1 + rng.index(4);
  for (std::size_t i = 0; i < n; ++i) g.negatives.push_back(random_tokens(rng, vocab, 1, 6));
  return g;
}

/// A sequence with at least one masked and one visible position.
inline casekit::MaskedSequence random_masked(casekit::Rng& rng, std::uint32_t vocab) {
  for (;;) {
    auto tokens = random_tokens(rng, vocab, 2, 10);
    auto seq = casekit::mask_sequence(tokens, 0.4, rng.next(), 0, 0);
    if (!seq.masked_positions.empty() && seq.masked_positions.size() < tokens.size()) return seq;
  }
}

}  // namespace oracle

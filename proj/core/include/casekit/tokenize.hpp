#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace casekit {

enum class TokenScheme {
  WhitespaceLatin,  ///< split on whitespace and punctuation, lowercase
  CharCjk,          ///< every letter/digit codepoint is its own token
  Mixed,            ///< letter/digit runs as words, each CJK codepoint on its own
};

std::string_view to_string(TokenScheme scheme);
std::optional<TokenScheme> parse_token_scheme(std::string_view name);

/// Deterministic toy tokenizer. Punctuation and whitespace are dropped in
/// every scheme; letters are lowercased.
std::vector<std::string> tokenize(std::string_view text, TokenScheme scheme);

}  // namespace casekit

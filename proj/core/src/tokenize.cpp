#include "casekit/tokenize.hpp"

#include <unicode/uchar.h>
#include <unicode/uscript.h>
#include <unicode/utf8.h>

namespace casekit {

namespace {

bool is_cjk(UChar32 c) {
  UErrorCode status = U_ZERO_ERROR;
  UScriptCode script = uscript_getScript(c, &status);
  if (U_FAILURE(status)) return false;
  return script == USCRIPT_HAN || script == USCRIPT_HIRAGANA || script == USCRIPT_KATAKANA ||
         script == USCRIPT_HANGUL || script == USCRIPT_BOPOMOFO;
}

bool is_word(UChar32 c) { return u_isalnum(c) != 0 || u_hasBinaryProperty(c, UCHAR_ALPHABETIC) != 0; }

void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  int32_t n = 0;
  UBool error = false;
  U8_APPEND(buf, n, U8_MAX_LENGTH, c, error);
  if (!error) out.append(buf, static_cast<std::size_t>(n));
}

}  // namespace

std::string_view to_string(TokenScheme scheme) {
  switch (scheme) {
    case TokenScheme::WhitespaceLatin: return "whitespace_latin";
    case TokenScheme::CharCjk: return "char_cjk";
    case TokenScheme::Mixed: return "mixed";
  }
  return "mixed";
}

std::optional<TokenScheme> parse_token_scheme(std::string_view name) {
  if (name == "whitespace_latin") return TokenScheme::WhitespaceLatin;
  if (name == "char_cjk") return TokenScheme::CharCjk;
  if (name == "mixed") return TokenScheme::Mixed;
  return std::nullopt;
}

std::vector<std::string> tokenize(std::string_view text, TokenScheme scheme) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };

  const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
  const auto length = static_cast<int32_t>(text.size());
  for (int32_t i = 0; i < length;) {
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c < 0 || !is_word(c)) {
      flush();
      continue;
    }
    UChar32 lower = u_tolower(c);
    bool split_each = scheme == TokenScheme::CharCjk || (scheme == TokenScheme::Mixed && is_cjk(c));
    if (split_each) {
      flush();
      append_utf8(current, lower);
      flush();
    } else {
      append_utf8(current, lower);
    }
  }
  flush();
  return tokens;
}

}  // namespace casekit

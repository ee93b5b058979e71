#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "casekit/corpus.hpp"
#include "casekit/tokenize.hpp"

namespace casekit {

/// Token <-> id mapping with two reserved entries. Ordinary tokens are
/// numbered by first appearance in corpus order.
class Vocabulary {
 public:
  static constexpr std::uint32_t kUnk = 0;
  static constexpr std::uint32_t kMask = 1;
  static constexpr std::uint32_t kReserved = 2;

  explicit Vocabulary(TokenScheme scheme = TokenScheme::Mixed);

  /// Covers the fact and (when present) full text of every document.
  static Vocabulary build(const Corpus& corpus, TokenScheme scheme);
  static Vocabulary from_tokens(std::vector<std::string> tokens, TokenScheme scheme);

  std::uint32_t size() const { return static_cast<std::uint32_t>(tokens_.size()); }
  /// Number of ordinary (non-reserved) tokens.
  std::uint32_t content_size() const { return size() - kReserved; }
  TokenScheme scheme() const { return scheme_; }

  std::optional<std::uint32_t> id(std::string_view token) const;
  const std::string& token(std::uint32_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Tokenizes and maps to ids (unknown -> kUnk), truncated to max_len.
  /// Never returns an empty list: text without tokens encodes as {kUnk}.
  std::vector<std::uint32_t> encode(std::string_view text, std::size_t max_len) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return scheme_ == other.scheme_ && tokens_ == other.tokens_; }

 private:
  void add(std::string token);

  TokenScheme scheme_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> lookup_;
};

}  // namespace casekit

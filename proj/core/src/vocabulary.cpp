#include "casekit/vocabulary.hpp"

#include <fstream>

#include "casekit/error.hpp"
#include "casekit/io.hpp"

namespace casekit {

Vocabulary::Vocabulary(TokenScheme scheme) : scheme_(scheme) {
  add("[UNK]");
  add("[MASK]");
}

void Vocabulary::add(std::string token) {
  auto [it, inserted] = lookup_.try_emplace(token, size());
  if (inserted) tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(const Corpus& corpus, TokenScheme scheme) {
  Vocabulary vocab(scheme);
  for (const auto& doc : corpus) {
    for (auto& t : tokenize(doc.fact, scheme)) vocab.add(std::move(t));
    if (doc.full_text)
      for (auto& t : tokenize(*doc.full_text, scheme)) vocab.add(std::move(t));
  }
  return vocab;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, TokenScheme scheme) {
  if (tokens.size() < kReserved || tokens[kUnk] != "[UNK]" || tokens[kMask] != "[MASK]")
    throw Error(ErrorCode::ParseError, "vocabulary must start with the reserved tokens");
  Vocabulary vocab(scheme);
  for (std::size_t i = kReserved; i < tokens.size(); ++i) {
    if (vocab.lookup_.contains(tokens[i])) throw Error(ErrorCode::ParseError, "duplicate vocabulary entry " + tokens[i]);
    vocab.add(std::move(tokens[i]));
  }
  return vocab;
}

std::optional<std::uint32_t> Vocabulary::id(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::uint32_t> Vocabulary::encode(std::string_view text, std::size_t max_len) const {
  std::vector<std::uint32_t> ids;
  for (const auto& t : tokenize(text, scheme_)) {
    if (ids.size() >= max_len) break;
    ids.push_back(id(t).value_or(kUnk));
  }
  if (ids.empty()) ids.push_back(kUnk);
  return ids;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  AtomicFile file(path);
  file.stream() << "#scheme\t" << to_string(scheme_) << '\n';
  for (const auto& t : tokens_) file.stream() << t << '\n';
  file.commit();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open vocabulary " + path.string());
  std::string header;
  std::getline(in, header);
  const std::string prefix = "#scheme\t";
  if (header.rfind(prefix, 0) != 0) throw ParseError(1, "missing vocabulary header");
  auto scheme = parse_token_scheme(header.substr(prefix.size()));
  if (!scheme) throw ParseError(1, "unknown token scheme");
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) tokens.push_back(line);
  return from_tokens(std::move(tokens), *scheme);
}

}  // namespace casekit

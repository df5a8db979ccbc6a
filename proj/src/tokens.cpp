#include "ctcforge/tokens.hpp"

#include <fstream>

#include "ctcforge/emissions.hpp"
#include "ctcforge/error.hpp"

namespace ctcforge {

TokenDictionary::TokenDictionary(std::vector<std::string> tokens,
                                 TokenId blank, std::optional<TokenId> silence)
    : tokens_(std::move(tokens)), blank_(blank), silence_(silence) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty())
      throw ValidationError("empty token at index " + std::to_string(i));
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw ValidationError("duplicate token '" + tokens_[i] + "'");
  }
  if (blank_ < 0 || blank_ >= size())
    throw ValidationError("blank index out of range");
  if (silence_) {
    if (*silence_ < 0 || *silence_ >= size())
      throw ValidationError("silence index out of range");
    if (*silence_ == blank_)
      throw ValidationError("silence token must differ from blank");
  }
}

TokenDictionary TokenDictionary::from_strings(std::vector<std::string> tokens,
                                              std::string_view blank,
                                              std::string_view silence) {
  auto position = [&](std::string_view name) -> std::optional<TokenId> {
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i] == name) return static_cast<TokenId>(i);
    return std::nullopt;
  };
  std::optional<TokenId> blank_id;
  if (blank.empty()) {
    blank_id = position(kDefaultBlank);
    if (!blank_id) blank_id = position(kFallbackBlank);
    if (!blank_id)
      throw ValidationError("no blank token: neither '<blank>' nor '-' found");
  } else {
    blank_id = position(blank);
    if (!blank_id)
      throw ValidationError("blank token '" + std::string(blank) +
                            "' not in token list");
  }
  std::optional<TokenId> silence_id;
  if (!silence.empty()) {
    silence_id = position(silence);
    if (!silence_id)
      throw ValidationError("silence token '" + std::string(silence) +
                            "' not in token list");
  }
  return TokenDictionary(std::move(tokens), *blank_id, silence_id);
}

std::optional<TokenId> TokenDictionary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId TokenDictionary::index(std::string_view token) const {
  if (auto id = find(token)) return *id;
  throw ValidationError("unknown token '" + std::string(token) + "'");
}

TokenDictionary load_tokens(const std::filesystem::path& path,
                            std::string_view blank, std::string_view silence) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open token file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  // tolerate a single trailing newline only
  while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  return TokenDictionary::from_strings(std::move(tokens), blank, silence);
}

std::vector<TokenId> ctc_collapse(const std::vector<TokenId>& path,
                                  TokenId blank) {
  std::vector<TokenId> out;
  TokenId prev = -1;
  for (TokenId id : path) {
    if (id != prev && id != blank) out.push_back(id);
    prev = id;
  }
  return out;
}

}  // namespace ctcforge

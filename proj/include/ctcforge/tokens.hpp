#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ctcforge {

using TokenId = int;

/// Acoustic token vocabulary with a designated blank and optional silence.
class TokenDictionary {
 public:
  TokenDictionary(std::vector<std::string> tokens, TokenId blank,
                  std::optional<TokenId> silence = std::nullopt);

  /// Resolves blank and silence by token string.
  static TokenDictionary from_strings(std::vector<std::string> tokens,
                                      std::string_view blank,
                                      std::string_view silence = {});

  int size() const noexcept { return static_cast<int>(tokens_.size()); }
  TokenId blank() const noexcept { return blank_; }
  std::optional<TokenId> silence() const noexcept { return silence_; }
  bool is_silence(TokenId id) const noexcept {
    return silence_ && *silence_ == id;
  }

  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::span<const std::string> tokens() const noexcept { return tokens_; }

  /// Index of `token`, or nullopt when absent.
  std::optional<TokenId> find(std::string_view token) const;
  TokenId index(std::string_view token) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId blank_;
  std::optional<TokenId> silence_;
};

inline constexpr std::string_view kDefaultBlank = "<blank>";
inline constexpr std::string_view kFallbackBlank = "-";

/// Reads a token file: one token per line, index is the zero-based line.
/// An empty `blank` selects "<blank>", falling back to "-".
TokenDictionary load_tokens(const std::filesystem::path& path,
                            std::string_view blank = {},
                            std::string_view silence = {});

}  // namespace ctcforge

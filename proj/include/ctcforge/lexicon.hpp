#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctcforge/lm.hpp"
#include "ctcforge/tokens.hpp"

namespace ctcforge {

using Spelling = std::vector<TokenId>;

/// Word to spellings map. Words keep first-appearance order; the first
/// spelling of a word is its canonical one.
class Lexicon {
 public:
  struct Entry {
    std::string word;
    std::vector<Spelling> spellings;
  };

  /// Adds a spelling; throws on an empty or duplicate (word, spelling).
  void add(std::string_view word, Spelling spelling);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const Entry& entry(int word) const { return entries_.at(word); }
  std::optional<int> find(std::string_view word) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

/// Parses "word tok tok ..." lines; '#' lines and blank lines are skipped.
Lexicon parse_lexicon(const std::filesystem::path& path, const TokenDictionary& tokens);
Lexicon parse_lexicon_string(std::string_view text, const TokenDictionary& tokens);

/// Token-indexed prefix tree over lexicon spellings.
class LexiconTrie {
 public:
  static constexpr int kRoot = 0;
  static constexpr double kNoScore = -std::numeric_limits<double>::infinity();

  struct Node {
    /// Sorted by token.
    std::vector<std::pair<TokenId, int>> children;
    /// Lexicon word indices completed at this node.
    std::vector<int> words;
    /// Best unigram score completable at or below this node; kNoScore when
    /// the trie was built without a language model.
    double max_score = kNoScore;
  };

  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[id]; }
  /// Child reached from `node` by `token`, or -1.
  int child(int node, TokenId token) const;
  bool smeared() const noexcept { return smeared_; }
  bool empty() const noexcept { return nodes_.size() <= 1; }

  const Lexicon& lexicon() const noexcept { return lexicon_; }
  const std::string& word(int id) const { return lexicon_.entry(id).word; }

  friend LexiconTrie build_trie(Lexicon lex, const NGramLM* lm);

 private:
  Lexicon lexicon_;
  std::vector<Node> nodes_;
  bool smeared_ = false;
};

/// Builds the trie; when `lm` is given every node carries the max unigram
/// score of the words completable beneath it.
LexiconTrie build_trie(Lexicon lex, const NGramLM* lm = nullptr);

}  // namespace ctcforge

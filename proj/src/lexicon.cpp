#include "ctcforge/lexicon.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ctcforge/error.hpp"

namespace ctcforge {

void Lexicon::add(std::string_view word, Spelling spelling) {
  if (word.empty()) throw ValidationError("empty lexicon word");
  if (spelling.empty())
    throw ValidationError("empty spelling for '" + std::string(word) + "'");
  auto [it, inserted] =
      index_.emplace(std::string(word), static_cast<int>(entries_.size()));
  if (inserted) entries_.push_back({std::string(word), {}});
  auto& spellings = entries_[it->second].spellings;
  if (std::find(spellings.begin(), spellings.end(), spelling) != spellings.end())
    throw ValidationError("duplicate spelling for '" + std::string(word) + "'");
  spellings.push_back(std::move(spelling));
}

std::optional<int> Lexicon::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Lexicon parse_lexicon_string(std::string_view text, const TokenDictionary& tokens) {
  Lexicon lex;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word) || word.front() == '#') continue;
    Spelling spelling;
    std::string tok;
    while (fields >> tok) {
      auto id = tokens.find(tok);
      if (!id)
        throw FormatError("lexicon line " + std::to_string(line_no) +
                          ": unknown token '" + tok + "'");
      spelling.push_back(*id);
    }
    try {
      lex.add(word, std::move(spelling));
    } catch (const ValidationError& e) {
      throw FormatError("lexicon line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return lex;
}

Lexicon parse_lexicon(const std::filesystem::path& path, const TokenDictionary& tokens) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open lexicon " + path.string());
  const std::string text(std::istreambuf_iterator<char>(in), {});
  try {
    return parse_lexicon_string(text, tokens);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

int LexiconTrie::child(int node, TokenId token) const {
  const auto& kids = nodes_[node].children;
  auto it = std::lower_bound(kids.begin(), kids.end(), token,
                             [](const auto& c, TokenId t) { return c.first < t; });
  return it != kids.end() && it->first == token ? it->second : -1;
}

LexiconTrie build_trie(Lexicon lex, const NGramLM* lm) {
  LexiconTrie trie;
  trie.nodes_.emplace_back();
  const auto& entries = lex.entries();
  for (std::size_t w = 0; w < entries.size(); ++w) {
    for (const auto& spelling : entries[w].spellings) {
      int node = LexiconTrie::kRoot;
      for (TokenId tok : spelling) {
        int next = trie.child(node, tok);
        if (next < 0) {
          next = static_cast<int>(trie.nodes_.size());
          auto& kids = trie.nodes_[node].children;
          kids.insert(std::lower_bound(kids.begin(), kids.end(), tok,
                                       [](const auto& c, TokenId t) { return c.first < t; }),
                      {tok, next});
          trie.nodes_.emplace_back();
        }
        node = next;
      }
      auto& words = trie.nodes_[node].words;
      if (std::find(words.begin(), words.end(), static_cast<int>(w)) == words.end())
        words.push_back(static_cast<int>(w));
    }
  }

  if (lm) {
    trie.smeared_ = true;
    // children always have larger ids than their parent
    for (std::size_t i = trie.nodes_.size(); i-- > 0;) {
      auto& node = trie.nodes_[i];
      double best = LexiconTrie::kNoScore;
      for (int w : node.words)
        best = std::max(best, lm->unigram(lm->word_id(entries[w].word)));
      for (const auto& [tok, kid] : node.children)
        best = std::max(best, trie.nodes_[kid].max_score);
      node.max_score = best;
    }
  }
  trie.lexicon_ = std::move(lex);
  return trie;
}

}  // namespace ctcforge

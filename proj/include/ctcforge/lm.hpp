#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ctcforge {

using WordId = std::int32_t;

inline constexpr WordId kNoWord = -1;
/// Score (natural log) of an out-of-vocabulary word when the model has no
/// "<unk>" entry.
inline constexpr double kOovPenalty = -20.0;
inline constexpr int kMaxLmOrder = 8;

/// Incremental scoring state: the word history the next score conditions on.
///
/// Equality ignores the accumulated score, so two states with the same
/// context are interchangeable for search.
class LMState {
 public:
  LMState() = default;

  std::span<const WordId> context() const noexcept { return {ids_.data(), size_}; }
  std::size_t size() const noexcept { return size_; }
  double cumulative_score() const noexcept { return cumulative_; }

  friend bool operator==(const LMState& a, const LMState& b) noexcept {
    return a.size_ == b.size_ &&
           std::equal(a.ids_.begin(), a.ids_.begin() + a.size_, b.ids_.begin());
  }

  std::size_t hash() const noexcept {
    std::uint64_t h = 0x9E3779B97F4A7C15ull ^ size_;
    for (std::size_t i = 0; i < size_; ++i)
      h = (h ^ static_cast<std::uint32_t>(ids_[i])) * 0x100000001B3ull;
    return static_cast<std::size_t>(h);
  }

 private:
  friend class NGramLM;
  std::array<WordId, kMaxLmOrder - 1> ids_{};
  std::size_t size_ = 0;
  double cumulative_ = 0.0;
};

struct ArpaOptions {
  /// Reject n-grams whose (n-1)-word prefix is not itself listed.
  bool strict = false;
};

/// Backoff n-gram model read from an ARPA file. Scores are natural log.
class NGramLM {
 public:
  int order() const noexcept { return order_; }
  std::size_t vocab_size() const noexcept { return words_.size(); }
  /// Entry count per order, index 0 holding unigrams.
  const std::vector<std::size_t>& counts() const noexcept { return counts_; }
  /// Non-fatal issues seen while parsing (e.g. missing prefix contexts).
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  /// Id of `word`, or kNoWord when it is not in the vocabulary.
  WordId word_id(std::string_view word) const;
  const std::string& word(WordId id) const { return words_.at(id); }
  WordId bos() const noexcept { return bos_; }
  WordId eos() const noexcept { return eos_; }
  WordId unk() const noexcept { return unk_; }

  LMState start() const;
  /// Scores `word` after `state`; kNoWord is treated as out of vocabulary.
  std::pair<LMState, double> score(const LMState& state, WordId word) const;
  std::pair<LMState, double> score(const LMState& state, std::string_view word) const {
    return score(state, word_id(word));
  }
  /// Sentence-end score in `state`.
  double finish(const LMState& state) const { return score(state, eos_).second; }

  /// Unigram log-probability of `word` (OOV rules apply).
  double unigram(WordId word) const;

  friend NGramLM parse_arpa(const std::filesystem::path&, const ArpaOptions&);
  friend NGramLM parse_arpa_string(std::string_view, const ArpaOptions&);

 private:
  static constexpr std::int32_t kRootContext = 0;

  static std::uint64_t key(std::int32_t context, WordId word) noexcept {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(context)) << 32) |
           static_cast<std::uint32_t>(word);
  }
  WordId intern(std::string_view word);
  std::int32_t child_context(std::int32_t context, WordId word) const;
  std::int32_t add_context(std::span<const WordId> words);
  LMState truncated(std::span<const WordId> history) const;

  int order_ = 0;
  std::vector<std::size_t> counts_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> word_index_;
  WordId bos_ = kNoWord;
  WordId eos_ = kNoWord;
  WordId unk_ = kNoWord;

  // Contexts form a trie keyed most-recent-word first, so the chain from the
  // root visits every suffix of a history in order of increasing length.
  std::unordered_map<std::uint64_t, std::int32_t> context_children_;
  std::vector<double> backoff_;
  std::unordered_map<std::uint64_t, double> probs_;
  std::vector<std::string> warnings_;
};

NGramLM parse_arpa(const std::filesystem::path& path, const ArpaOptions& options = {});
NGramLM parse_arpa_string(std::string_view text, const ArpaOptions& options = {});

inline LMState lm_start(const NGramLM& lm) { return lm.start(); }
inline std::pair<LMState, double> lm_score(const NGramLM& lm, const LMState& s,
                                           std::string_view word) {
  return lm.score(s, word);
}
inline double lm_finish(const NGramLM& lm, const LMState& s) { return lm.finish(s); }

}  // namespace ctcforge

template <>
struct std::hash<ctcforge::LMState> {
  std::size_t operator()(const ctcforge::LMState& s) const noexcept { return s.hash(); }
};

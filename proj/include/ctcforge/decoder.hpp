#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctcforge/emissions.hpp"
#include "ctcforge/lexicon.hpp"
#include "ctcforge/lm.hpp"
#include "ctcforge/tokens.hpp"

namespace ctcforge {

enum class MergeMode { kMax, kLogAdd };

struct DecoderOptions {
  /// Hypotheses kept after each frame.
  int beam_size = 50;
  /// Tokens expanded per frame, by emission score; unset means all tokens.
  std::optional<int> beam_size_token;
  /// Hypotheses scoring below best - beam_threshold are dropped.
  double beam_threshold = 50.0;
  double lm_weight = 2.0;
  double word_score = 0.0;
  double sil_score = 0.0;
  /// Frames with p(blank) at or above this are skipped; 1.0 skips nothing.
  double blank_skip_threshold = 1.0;
  int n_best = 1;
  MergeMode merge_mode = MergeMode::kLogAdd;

  /// Throws ValidationError when an option is out of range for `vocab_size`.
  void validate(int vocab_size) const;
};

struct Hypothesis {
  /// Collapsed token sequence.
  std::vector<TokenId> tokens;
  /// Word sequence; empty when decoding produces no word segmentation.
  std::vector<std::string> words;
  double am_score = 0.0;
  /// Unweighted LM score.
  double lm_score = 0.0;
  /// am_score + lm_weight * lm_score + word and silence bonuses.
  double score = 0.0;
  /// Original frame index where each token first appears.
  std::vector<int> timesteps;
};

/// Sorted by descending score, ties by token sequence.
using NBestList = std::vector<Hypothesis>;

/// Words of a hypothesis, falling back to its token strings when the search
/// produced no word segmentation.
std::vector<std::string> hypothesis_words(const Hypothesis& hyp,
                                          const TokenDictionary& tokens);

/// Frame-synchronous CTC beam search over shared, immutable resources.
///
/// With a trie the search is lexicon-constrained and the LM scores lexicon
/// words at word completion. Without one, the LM scores words delimited by
/// the silence token when the dictionary has one, and individual tokens
/// otherwise.
class CtcDecoder {
 public:
  CtcDecoder(const TokenDictionary& tokens, DecoderOptions options,
             const LexiconTrie* trie = nullptr, const NGramLM* lm = nullptr);

  const DecoderOptions& options() const noexcept { return options_; }

  template <typename Scalar>
  NBestList decode(const Emissions<Scalar>& emissions) const;

  /// Decodes every utterance; results are identical to sequential decoding.
  template <typename Scalar>
  std::vector<NBestList> decode_batch(std::span<const Emissions<Scalar>> batch,
                                      int workers = 1) const;

 private:
  struct Search;

  const TokenDictionary& tokens_;
  DecoderOptions options_;
  const LexiconTrie* trie_;
  const NGramLM* lm_;
  // LM ids of lexicon words (lexicon mode) or token strings (token LM mode)
  std::vector<WordId> lm_ids_;
  bool delimited_words_ = false;
};

template <typename Scalar>
NBestList beam_search_decode(const Emissions<Scalar>& emissions,
                             const TokenDictionary& tokens,
                             const DecoderOptions& options,
                             const LexiconTrie* trie = nullptr,
                             const NGramLM* lm = nullptr) {
  return CtcDecoder(tokens, options, trie, lm).decode(emissions);
}

template <typename Scalar>
std::vector<NBestList> decode_batch(std::span<const Emissions<Scalar>> batch,
                                    const TokenDictionary& tokens,
                                    const DecoderOptions& options,
                                    const LexiconTrie* trie = nullptr,
                                    const NGramLM* lm = nullptr, int workers = 1) {
  return CtcDecoder(tokens, options, trie, lm).decode_batch(batch, workers);
}

}  // namespace ctcforge

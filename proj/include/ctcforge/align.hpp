#pragma once

#include <span>
#include <string>
#include <vector>

#include "ctcforge/emissions.hpp"
#include "ctcforge/lexicon.hpp"
#include "ctcforge/tokens.hpp"

namespace ctcforge {

/// Frames [start_frame, end_frame) labelled with one target token.
struct AlignmentSpan {
  TokenId token = 0;
  int start_frame = 0;
  int end_frame = 0;
  /// Mean per-frame log-probability over the span.
  double score = 0.0;
};

struct AlignmentResult {
  std::vector<TokenId> frame_labels;
  std::vector<double> frame_scores;
  /// One span per target token, covering only frames carrying that token.
  std::vector<AlignmentSpan> spans;

  double path_score() const;
};

struct WordSpan {
  std::string word;
  int start_frame = 0;
  int end_frame = 0;
  /// Mean per-frame log-probability over the word's token frames.
  double score = 0.0;
};

/// Minimum frame count needed to align `targets`: one per token plus one
/// separating blank per adjacent repeat.
int min_alignment_frames(std::span<const TokenId> targets);

/// Viterbi alignment of `targets` against the blank-interleaved CTC topology.
///
/// Backtracking prefers staying in a state, then advancing by one, then
/// skipping a blank. Span frames are original frame indices.
template <typename Scalar>
AlignmentResult forced_align(const Emissions<Scalar>& e, std::span<const TokenId> targets,
                             const TokenDictionary& tokens);

/// Spans extended so they tile [0, T): trailing blanks join the preceding
/// token and leading blanks join the first one.
std::vector<AlignmentSpan> attribute_blanks(const AlignmentResult& result);

/// Groups token spans into word spans using the first spelling of each word.
std::vector<WordSpan> align_words(const AlignmentResult& result,
                                  const TokenDictionary& tokens,
                                  std::span<const std::string> transcript,
                                  const Lexicon& lex);

/// Concatenated first spellings of `transcript`; throws for unknown words.
std::vector<TokenId> spell_transcript(std::span<const std::string> transcript,
                                      const Lexicon& lex);

}  // namespace ctcforge

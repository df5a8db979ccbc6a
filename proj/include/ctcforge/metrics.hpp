#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctcforge {

using WordList = std::vector<std::string>;

struct EditCounts {
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;
  int ref_length = 0;

  int distance() const noexcept { return substitutions + insertions + deletions; }
};

/// Minimal word-level Levenshtein alignment of `hyp` against `ref`. Among
/// equal-cost alignments the breakdown prefers substitutions, then
/// deletions, then insertions.
EditCounts edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp);

/// Corpus WER in percent: total edits over total reference words.
double wer(std::span<const WordList> refs, std::span<const WordList> hyps);

/// WER in percent when each utterance picks its closest N-best entry.
/// `nbests[i]` must be in descending score order; ties in edit distance go
/// to the earlier (higher scoring) entry.
double oracle_wer(std::span<const WordList> refs,
                  std::span<const std::vector<WordList>> nbests);

/// Splits on ASCII whitespace.
WordList split_words(std::string_view text);

}  // namespace ctcforge

#include "ctcforge/metrics.hpp"

#include <algorithm>
#include <string_view>

#include "ctcforge/error.hpp"

namespace ctcforge {

EditCounts edit_distance(std::span<const std::string> ref, std::span<const std::string> hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<int> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> int& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1),
                           at(i - 1, j) + 1, at(i, j - 1) + 1});

  EditCounts counts;
  counts.ref_length = static_cast<int>(n);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool equal = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (equal ? 0 : 1)) {
        if (!equal) ++counts.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

double wer(std::span<const WordList> refs, std::span<const WordList> hyps) {
  if (refs.size() != hyps.size())
    throw ValidationError("reference and hypothesis counts differ");
  long errors = 0, words = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const EditCounts c = edit_distance(refs[i], hyps[i]);
    errors += c.distance();
    words += c.ref_length;
  }
  if (words == 0) throw ValidationError("total reference length is zero");
  return 100.0 * static_cast<double>(errors) / static_cast<double>(words);
}

double oracle_wer(std::span<const WordList> refs,
                  std::span<const std::vector<WordList>> nbests) {
  if (refs.size() != nbests.size())
    throw ValidationError("reference and N-best counts differ");
  long errors = 0, words = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (nbests[i].empty())
      throw ValidationError("empty N-best list for utterance " + std::to_string(i));
    int best = -1;
    for (const auto& hyp : nbests[i]) {
      const int d = edit_distance(refs[i], hyp).distance();
      if (best < 0 || d < best) best = d;
    }
    errors += best;
    words += static_cast<long>(refs[i].size());
  }
  if (words == 0) throw ValidationError("total reference length is zero");
  return 100.0 * static_cast<double>(errors) / static_cast<double>(words);
}

WordList split_words(std::string_view text) {
  WordList out;
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace ctcforge

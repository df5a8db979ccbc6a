#include "ctcforge/align.hpp"

#include <cstdint>
#include <limits>
#include <numeric>

#include "ctcforge/error.hpp"

namespace ctcforge {

double AlignmentResult::path_score() const {
  return std::accumulate(frame_scores.begin(), frame_scores.end(), 0.0);
}

int min_alignment_frames(std::span<const TokenId> targets) {
  int repeats = 0;
  for (std::size_t i = 1; i < targets.size(); ++i)
    if (targets[i] == targets[i - 1]) ++repeats;
  return static_cast<int>(targets.size()) + repeats;
}

template <typename Scalar>
AlignmentResult forced_align(const Emissions<Scalar>& e, std::span<const TokenId> targets,
                             const TokenDictionary& tokens) {
  if (e.vocab_size() != tokens.size())
    throw ValidationError("emission width does not match token dictionary");
  if (!e.has_identity_frame_map())
    throw ValidationError("forced alignment needs uncollapsed emissions");
  if (targets.empty()) throw ValidationError("empty target sequence");
  const TokenId blank = tokens.blank();
  for (TokenId t : targets) {
    if (t < 0 || t >= tokens.size())
      throw ValidationError("target token " + std::to_string(t) + " out of range");
    if (t == blank) throw ValidationError("blank token in targets");
  }
  const int frames = e.num_frames();
  const int needed = min_alignment_frames(targets);
  if (frames < needed)
    throw ValidationError("infeasible alignment: " + std::to_string(frames) +
                          " frames for targets needing " + std::to_string(needed));

  const int states = 2 * static_cast<int>(targets.size()) + 1;
  auto label = [&](int s) { return s % 2 == 0 ? blank : targets[s / 2]; };
  // skip transitions land on a token different from the one two states back
  auto can_skip = [&](int s) { return s % 2 == 1 && s >= 2 && label(s) != label(s - 2); };

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> prev(states, kNegInf), cur(states, kNegInf);
  std::vector<std::int8_t> back(static_cast<std::size_t>(frames) * states, 0);

  prev[0] = e(0, label(0));
  prev[1] = e(0, label(1));
  for (int t = 1; t < frames; ++t) {
    for (int s = 0; s < states; ++s) {
      const double stay = prev[s];
      const double step = s >= 1 ? prev[s - 1] : kNegInf;
      const double skip = can_skip(s) ? prev[s - 2] : kNegInf;
      double best = stay;
      std::int8_t move = 0;
      if (step > best) {
        best = step;
        move = 1;
      }
      if (skip > best) {
        best = skip;
        move = 2;
      }
      back[static_cast<std::size_t>(t) * states + s] = move;
      cur[s] = best == kNegInf ? kNegInf : best + static_cast<double>(e(t, label(s)));
    }
    std::swap(prev, cur);
  }

  int s = prev[states - 1] >= prev[states - 2] ? states - 1 : states - 2;
  if (prev[s] == kNegInf) throw ValidationError("no valid alignment path");

  AlignmentResult result;
  result.frame_labels.resize(frames);
  result.frame_scores.resize(frames);
  for (int t = frames - 1; t >= 0; --t) {
    result.frame_labels[t] = label(s);
    result.frame_scores[t] = e(t, label(s));
    s -= back[static_cast<std::size_t>(t) * states + s];
  }

  // one span per maximal run of a non-blank state
  int run_start = -1;
  for (int t = 0; t <= frames; ++t) {
    // repeated targets are always separated by blank frames, so each run is
    // exactly one target token
    if (t < frames && run_start >= 0 &&
        result.frame_labels[t] == result.frame_labels[run_start])
      continue;
    if (run_start >= 0 && result.frame_labels[run_start] != blank) {
      AlignmentSpan span;
      span.token = result.frame_labels[run_start];
      span.start_frame = run_start;
      span.end_frame = t;
      double sum = 0.0;
      for (int f = run_start; f < t; ++f) sum += result.frame_scores[f];
      span.score = sum / (t - run_start);
      result.spans.push_back(span);
    }
    run_start = t;
  }
  return result;
}

template AlignmentResult forced_align(const Emissions<float>&, std::span<const TokenId>,
                                      const TokenDictionary&);
template AlignmentResult forced_align(const Emissions<double>&, std::span<const TokenId>,
                                      const TokenDictionary&);

std::vector<AlignmentSpan> attribute_blanks(const AlignmentResult& result) {
  std::vector<AlignmentSpan> spans = result.spans;
  const int frames = static_cast<int>(result.frame_labels.size());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    spans[i].start_frame = i == 0 ? 0 : spans[i - 1].end_frame;
    spans[i].end_frame = i + 1 < spans.size() ? result.spans[i + 1].start_frame : frames;
    double sum = 0.0;
    for (int f = spans[i].start_frame; f < spans[i].end_frame; ++f)
      sum += result.frame_scores[f];
    spans[i].score = sum / (spans[i].end_frame - spans[i].start_frame);
  }
  return spans;
}

std::vector<TokenId> spell_transcript(std::span<const std::string> transcript,
                                      const Lexicon& lex) {
  std::vector<TokenId> out;
  for (const auto& word : transcript) {
    auto id = lex.find(word);
    if (!id) throw ValidationError("word '" + word + "' is not in the lexicon");
    const auto& spelling = lex.entry(*id).spellings.front();
    out.insert(out.end(), spelling.begin(), spelling.end());
  }
  return out;
}

std::vector<WordSpan> align_words(const AlignmentResult& result,
                                  const TokenDictionary& tokens,
                                  std::span<const std::string> transcript,
                                  const Lexicon& lex) {
  const std::vector<TokenId> spelled = spell_transcript(transcript, lex);
  const auto& spans = result.spans;
  bool match = spelled.size() == spans.size();
  for (std::size_t i = 0; match && i < spans.size(); ++i) match = spans[i].token == spelled[i];
  if (!match) {
    std::string got;
    for (const auto& s : spans) got += tokens.token(s.token) + " ";
    throw ValidationError("transcript spelling does not match aligned tokens: " + got);
  }

  std::vector<WordSpan> words;
  std::size_t next = 0;
  for (const auto& word : transcript) {
    const std::size_t len = lex.entry(*lex.find(word)).spellings.front().size();
    const auto first = spans.begin() + static_cast<std::ptrdiff_t>(next);
    const auto last = first + static_cast<std::ptrdiff_t>(len);
    WordSpan ws;
    ws.word = word;
    ws.start_frame = first->start_frame;
    ws.end_frame = (last - 1)->end_frame;
    double sum = 0.0;
    int count = 0;
    for (auto it = first; it != last; ++it) {
      sum += it->score * (it->end_frame - it->start_frame);
      count += it->end_frame - it->start_frame;
    }
    ws.score = sum / count;
    words.push_back(std::move(ws));
    next += len;
  }
  return words;
}

}  // namespace ctcforge

#pragma once

// Test-only generators and brute-force oracles. Nothing here calls into the
// library's search, alignment or scoring code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ctcforge/emissions.hpp"

namespace ctcforge::testing {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

/// Rows drawn from a random softmax; `sharpness` scales the logits.
template <typename Scalar = float>
Emissions<Scalar> random_emissions(std::mt19937& rng, int frames, int vocab,
                                   double sharpness = 2.0) {
  std::normal_distribution<double> normal(0.0, sharpness);
  LogProbMatrix<Scalar> m(frames, vocab);
  for (int t = 0; t < frames; ++t) {
    std::vector<double> logits(vocab);
    for (auto& x : logits) x = normal(rng);
    double hi = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double x : logits) z += std::exp(x - hi);
    for (int v = 0; v < vocab; ++v)
      m(t, v) = static_cast<Scalar>(logits[v] - hi - std::log(z));
  }
  return Emissions<Scalar>(std::move(m));
}

/// Rows where p(blank) is fixed to `blank_prob` and the rest is random.
template <typename Scalar = float>
LogProbMatrix<Scalar> row_with_blank(std::mt19937& rng, int vocab, int blank,
                                     double blank_prob) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> rest(vocab, 0.0);
  double z = 0.0;
  for (int v = 0; v < vocab; ++v)
    if (v != blank) z += rest[v] = u(rng);
  LogProbMatrix<Scalar> row(1, vocab);
  for (int v = 0; v < vocab; ++v)
    row(0, v) = static_cast<Scalar>(
        v == blank ? std::log(blank_prob) : std::log((1.0 - blank_prob) * rest[v] / z));
  return row;
}

/// One-hot rows: log 1 on the chosen token, -1000 elsewhere (not normalized
/// in the strict sense beyond 1e-400, which is fine for validation).
template <typename Scalar = float>
Emissions<Scalar> one_hot(const std::vector<int>& path, int vocab) {
  LogProbMatrix<Scalar> m = LogProbMatrix<Scalar>::Constant(
      static_cast<Eigen::Index>(path.size()), vocab, Scalar(-1000));
  for (std::size_t t = 0; t < path.size(); ++t) m(static_cast<Eigen::Index>(t), path[t]) = 0;
  return Emissions<Scalar>(std::move(m));
}

inline std::vector<int> collapse_path(const std::vector<int>& path, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int id : path) {
    if (id != prev && id != blank) out.push_back(id);
    prev = id;
  }
  return out;
}

/// Total CTC log-probability of every collapsed sequence, by enumerating all
/// V^T frame paths.
template <typename Scalar>
std::map<std::vector<int>, double> brute_force_sequence_scores(const Emissions<Scalar>& e,
                                                               int blank) {
  const int frames = e.num_frames();
  const int vocab = e.vocab_size();
  std::map<std::vector<int>, double> scores;
  std::vector<int> path(frames, 0);
  while (true) {
    double s = 0.0;
    for (int t = 0; t < frames; ++t) s += static_cast<double>(e(t, path[t]));
    auto key = collapse_path(path, blank);
    auto it = scores.find(key);
    if (it == scores.end())
      scores.emplace(std::move(key), s);
    else
      it->second = log_add(it->second, s);
    int pos = 0;
    while (pos < frames && ++path[pos] == vocab) path[pos++] = 0;
    if (pos == frames) break;
  }
  return scores;
}

/// Sum over frames of the best per-frame log-probability.
template <typename Scalar>
double brute_force_best_path(const Emissions<Scalar>& e) {
  double total = 0.0;
  for (int t = 0; t < e.num_frames(); ++t) {
    double best = kNegInf;
    for (int v = 0; v < e.vocab_size(); ++v) best = std::max(best, double(e(t, v)));
    total += best;
  }
  return total;
}

/// Every valid state path through the blank-interleaved target topology,
/// enumerated explicitly. Calls visit(labels, score) for each.
template <typename Scalar>
void enumerate_alignments(const Emissions<Scalar>& e, const std::vector<int>& targets,
                          int blank,
                          const std::function<void(const std::vector<int>&, double)>& visit) {
  const int frames = e.num_frames();
  std::vector<int> ext;
  for (int t : targets) {
    ext.push_back(blank);
    ext.push_back(t);
  }
  ext.push_back(blank);
  const int states = static_cast<int>(ext.size());
  std::vector<int> labels(frames);
  std::function<void(int, int, double)> walk = [&](int t, int s, double score) {
    labels[t] = ext[s];
    score += static_cast<double>(e(t, ext[s]));
    if (t + 1 == frames) {
      if (s >= states - 2) visit(labels, score);
      return;
    }
    for (int next : {s, s + 1, s + 2}) {
      if (next >= states) continue;
      if (next == s + 2 && (ext[next] == blank || ext[next] == ext[s])) continue;
      walk(t + 1, next, score);
    }
  };
  walk(0, 0, 0.0);
  if (states > 1) walk(0, 1, 0.0);
}

/// A random valid alignment path; retries until it ends in a final state.
template <typename Scalar>
std::pair<std::vector<int>, double> sample_alignment(std::mt19937& rng, const Emissions<Scalar>& e,
                                                     const std::vector<int>& targets, int blank) {
  std::vector<int> ext;
  for (int t : targets) {
    ext.push_back(blank);
    ext.push_back(t);
  }
  ext.push_back(blank);
  const int states = static_cast<int>(ext.size());
  const int frames = e.num_frames();
  std::uniform_int_distribution<int> coin(0, 2);
  while (true) {
    std::vector<int> labels(frames);
    int s = std::uniform_int_distribution<int>(0, 1)(rng);
    double score = 0.0;
    for (int t = 0; t < frames; ++t) {
      if (t > 0) {
        int next = s + coin(rng);
        if (next >= states) next = s;
        if (next == s + 2 && (ext[next] == blank || ext[next] == ext[s])) next = s + 1;
        s = next;
      }
      labels[t] = ext[s];
      score += static_cast<double>(e(t, ext[s]));
    }
    if (s >= states - 2) return {labels, score};
  }
}

/// Plain prefix beam search (lexicon-free, no LM, every token expanded).
/// Hypotheses are (prefix, ends-in-blank) pairs, scored and pruned as the
/// library does, and merged by prefix at the end.
struct RefResult {
  std::vector<int> tokens;
  double score;
};

template <typename Scalar>
std::vector<RefResult> reference_beam_search(const Emissions<Scalar>& e, int blank,
                                             int beam_size, double threshold,
                                             bool log_add_merge) {
  using Key = std::pair<std::vector<int>, bool>;
  auto merge = [&](double a, double b) { return log_add_merge ? log_add(a, b) : std::max(a, b); };
  std::vector<std::pair<Key, double>> beam{{Key{{}, false}, 0.0}};
  for (int t = 0; t < e.num_frames(); ++t) {
    std::map<Key, double> next;
    for (const auto& [key, score] : beam) {
      const auto& [prefix, ends_blank] = key;
      for (int c = 0; c < e.vocab_size(); ++c) {
        const double s = score + static_cast<double>(e(t, c));
        Key k;
        if (c == blank) {
          k = Key{prefix, true};
        } else if (!prefix.empty() && prefix.back() == c && !ends_blank) {
          k = Key{prefix, false};
        } else {
          auto longer = prefix;
          longer.push_back(c);
          k = Key{std::move(longer), false};
        }
        auto [it, fresh] = next.emplace(k, s);
        if (!fresh) it->second = merge(it->second, s);
      }
    }
    std::vector<std::pair<Key, double>> all(next.begin(), next.end());
    double best = kNegInf;
    for (const auto& kv : all) best = std::max(best, kv.second);
    std::erase_if(all, [&](const auto& kv) { return kv.second < best - threshold; });
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (static_cast<int>(all.size()) > beam_size) all.resize(beam_size);
    beam = std::move(all);
  }
  std::map<std::vector<int>, double> finals;
  for (const auto& [key, score] : beam) {
    auto [it, fresh] = finals.emplace(key.first, score);
    if (!fresh) it->second = merge(it->second, score);
  }
  std::vector<RefResult> out;
  for (const auto& [tokens, score] : finals) out.push_back({tokens, score});
  std::stable_sort(out.begin(), out.end(),
                   [](const RefResult& a, const RefResult& b) { return a.score > b.score; });
  return out;
}

/// Word-level edit distance from its recursive definition (exponential).
inline int naive_edit_distance(const std::vector<std::string>& a, std::size_t i,
                               const std::vector<std::string>& b, std::size_t j) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  if (a[i] == b[j]) return naive_edit_distance(a, i + 1, b, j + 1);
  return 1 + std::min({naive_edit_distance(a, i + 1, b, j + 1),
                       naive_edit_distance(a, i + 1, b, j),
                       naive_edit_distance(a, i, b, j + 1)});
}

inline std::vector<std::string> random_words(std::mt19937& rng, int max_len, int alphabet) {
  std::uniform_int_distribution<int> len(0, max_len), sym(0, alphabet - 1);
  std::vector<std::string> out(len(rng));
  for (auto& w : out) w = std::string(1, static_cast<char>('a' + sym(rng)));
  return out;
}

/// Katz backoff evaluated directly from ARPA text with string-keyed maps.
class KatzOracle {
 public:
  explicit KatzOracle(const std::string& arpa) {
    std::istringstream in(arpa);
    std::string line;
    int section = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line == "\\data\\" || line.rfind("ngram ", 0) == 0 || line == "\\end\\") continue;
      if (line[0] == '\\') {
        section = line[1] - '0';
        order_ = std::max(order_, section);
        continue;
      }
      std::istringstream fields(line);
      double lp;
      fields >> lp;
      std::vector<std::string> words(section);
      for (auto& w : words) fields >> w;
      double bow = 0.0;
      fields >> bow;
      prob_[words] = lp;
      backoff_[words] = bow;
    }
  }

  /// log10 P(word | history) by recursion on the history length.
  double log10_prob(std::vector<std::string> history, const std::string& word) const {
    if (static_cast<int>(history.size()) > order_ - 1)
      history.erase(history.begin(), history.end() - (order_ - 1));
    // unknown words score the flat OOV penalty, with no backoff weights
    if (!prob_.contains({word})) return -20.0 / std::log(10.0);
    std::vector<std::string> gram = history;
    gram.push_back(word);
    if (auto it = prob_.find(gram); it != prob_.end()) return it->second;
    double bow = 0.0;
    if (auto it = backoff_.find(history); it != backoff_.end()) bow = it->second;
    history.erase(history.begin());
    return bow + log10_prob(history, word);
  }

  /// Natural-log probability of "<s> words </s>".
  double sentence_logprob(const std::vector<std::string>& words) const {
    std::vector<std::string> history{"<s>"};
    double total = 0.0;
    for (const auto& w : words) {
      total += log10_prob(history, w);
      history.push_back(w);
    }
    total += log10_prob(history, "</s>");
    return total * std::log(10.0);
  }

 private:
  int order_ = 0;
  std::map<std::vector<std::string>, double> prob_;
  std::map<std::vector<std::string>, double> backoff_;
};

/// 3-gram model over five words with deliberate gaps so that scoring must
/// back off at both orders.
inline const char* kTrigramArpa = R"(\data\
ngram 1=7
ngram 2=10
ngram 3=6

\1-grams:
-1.2	</s>
-99	<s>	-0.5
-0.7	a	-0.3
-0.8	b	-0.25
-0.9	c	-0.2
-1.0	d	-0.15
-1.1	e	-0.1

\2-grams:
-0.3	<s> a	-0.12
-0.5	<s> b	-0.2
-0.4	a b	-0.1
-0.6	a c
-0.35	b c	-0.05
-0.45	b </s>
-0.5	c d	-0.3
-0.7	c a
-0.25	d </s>
-0.9	e e	-0.4

\3-grams:
-0.2	<s> a b
-0.15	a b c
-0.3	b c d
-0.1	c d </s>
-0.5	<s> b c
-0.6	e e e

\end\
)";

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ctcforge_" + name + "_" +
                                                       std::to_string(std::random_device{}()));
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace ctcforge::testing

#include "ctcforge/decoder.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "ctcforge/error.hpp"

namespace ctcforge {

void DecoderOptions::validate(int vocab_size) const {
  if (beam_size < 1) throw ValidationError("beam_size must be at least 1");
  if (beam_size_token && (*beam_size_token < 1 || *beam_size_token > vocab_size))
    throw ValidationError("beam_size_token must lie in [1, " +
                          std::to_string(vocab_size) + "]");
  if (n_best < 1) throw ValidationError("n_best must be at least 1");
  if (n_best > beam_size) throw ValidationError("n_best must not exceed beam_size");
  if (!(blank_skip_threshold > 0.0 && blank_skip_threshold <= 1.0))
    throw ValidationError("blank_skip_threshold must lie in (0, 1]");
  if (std::isnan(beam_threshold) || beam_threshold < 0.0)
    throw ValidationError("beam_threshold must be non-negative");
  if (!std::isfinite(lm_weight) || !std::isfinite(word_score) || !std::isfinite(sil_score))
    throw ValidationError("lm_weight, word_score and sil_score must be finite");
}

std::vector<std::string> hypothesis_words(const Hypothesis& hyp,
                                          const TokenDictionary& tokens) {
  if (!hyp.words.empty()) return hyp.words;
  std::vector<std::string> out;
  for (TokenId t : hyp.tokens)
    if (!tokens.is_silence(t)) out.push_back(tokens.token(t));
  return out;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

/// Canonical tree of collapsed token prefixes: equal sequences share a node.
class PrefixTree {
 public:
  PrefixTree() { nodes_.emplace_back(); }

  int child(int node, TokenId token) const {
    for (const auto& [tok, id] : nodes_[node].children)
      if (tok == token) return id;
    return -1;
  }
  int intern(int node, TokenId token) {
    if (int id = child(node, token); id >= 0) return id;
    const int id = static_cast<int>(nodes_.size());
    nodes_[node].children.emplace_back(token, id);
    nodes_.emplace_back();
    return id;
  }

 private:
  struct Node {
    std::vector<std::pair<TokenId, int>> children;
  };
  std::vector<Node> nodes_;
};

struct TokenRecord {
  int parent;
  TokenId token;
  int frame;
  // the trie is back at its root after this token
  bool word_boundary;
};

struct WordRecord {
  int parent;
  int word;
};

struct Hyp {
  double am = 0.0;
  double lm = 0.0;
  double bonus = 0.0;
  double lookahead = 0.0;
  double score = 0.0;
  int prefix = 0;
  int token_tail = -1;
  int word_tail = -1;
  int trie_node = -1;
  TokenId last_token = -1;
  bool prev_blank = false;
  // this frame appended last_token; prefix still names the parent node when
  // prefix_pending is set
  bool appended = false;
  bool prefix_pending = false;
  int pending_word = -1;
  // most recent completed lexicon word; keeps homophones apart when no LM
  // state distinguishes them
  int last_word = -1;
  LMState lm_state;
};

struct HypKey {
  int prefix;
  int trie_node;
  TokenId last_token;
  int last_word;
  bool prefix_pending;
  bool prev_blank;
  LMState lm_state;

  bool operator==(const HypKey&) const = default;
};

struct HypKeyHash {
  std::size_t operator()(const HypKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(k.prefix);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(k.trie_node);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(k.last_token);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(k.last_word);
    h = h * 0x9E3779B97F4A7C15ull ^ (k.prefix_pending ? 2u : 0u) ^ (k.prev_blank ? 1u : 0u);
    h = h * 0x9E3779B97F4A7C15ull ^ k.lm_state.hash();
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

}  // namespace

struct CtcDecoder::Search {
  const CtcDecoder& d;
  PrefixTree prefixes;
  std::vector<TokenRecord> token_records;
  std::vector<WordRecord> word_records;
  // words formed from delimited tokens, lexicon-free mode only
  std::vector<std::string> free_words;
  std::unordered_map<std::string, int> free_word_index;

  std::vector<Hyp> candidates;
  std::unordered_map<HypKey, int, HypKeyHash> slots;
  double best_candidate = kNegInf;

  explicit Search(const CtcDecoder& decoder) : d(decoder) {}

  bool lexicon_mode() const { return d.trie_ != nullptr; }

  void rank(Hyp& h) const {
    h.score = h.am + d.options_.lm_weight * h.lm + h.bonus + h.lookahead;
  }

  void add(const Hyp& h) {
    const bool max_mode = d.options_.merge_mode == MergeMode::kMax;
    // a pruned candidate cannot contribute under max merging
    if (max_mode && h.score < best_candidate - d.options_.beam_threshold) return;
    HypKey key{h.prefix,         h.trie_node,  h.last_token, h.last_word,
               h.prefix_pending, h.prev_blank, h.lm_state};
    auto [it, inserted] = slots.try_emplace(key, static_cast<int>(candidates.size()));
    if (inserted) {
      candidates.push_back(h);
    } else {
      Hyp& slot = candidates[it->second];
      if (max_mode) {
        if (h.score > slot.score) slot = h;
      } else {
        const double total = log_add(slot.score, h.score);
        if (h.score > slot.score) slot = h;
        slot.am += total - slot.score;
        slot.score = total;
      }
    }
    best_candidate = std::max(best_candidate, candidates[it->second].score);
  }

  Hyp appended(const Hyp& h, TokenId c, double lp) {
    Hyp n = h;
    n.am += lp;
    n.prev_blank = false;
    n.last_token = c;
    n.appended = true;
    if (int child = prefixes.child(h.prefix, c); child >= 0) {
      n.prefix = child;
      n.prefix_pending = false;
    } else {
      n.prefix_pending = true;
    }
    return n;
  }

  // Text of the word ending at `tail`: tokens back to the previous silence.
  std::string partial_word(int tail) const {
    std::vector<TokenId> rev;
    for (int r = tail; r >= 0 && !d.tokens_.is_silence(token_records[r].token);
         r = token_records[r].parent)
      rev.push_back(token_records[r].token);
    std::string word;
    for (auto it = rev.rbegin(); it != rev.rend(); ++it) word += d.tokens_.token(*it);
    return word;
  }

  int intern_free_word(const std::string& word) {
    auto [it, inserted] =
        free_word_index.try_emplace(word, static_cast<int>(free_words.size()));
    if (inserted) free_words.push_back(word);
    return it->second;
  }

  // Closes the word spelled since the last silence, if any.
  void close_free_word(Hyp& n, const Hyp& h) {
    if (h.last_token < 0 || d.tokens_.is_silence(h.last_token)) return;
    const std::string word = partial_word(h.token_tail);
    if (d.lm_) {
      auto [state, s] = d.lm_->score(h.lm_state, d.lm_->word_id(word));
      n.lm += s;
      n.lm_state = state;
    }
    n.bonus += d.options_.word_score;
    n.pending_word = intern_free_word(word);
  }

  void expand_free(const Hyp& h, TokenId c, double lp) {
    Hyp n = appended(h, c, lp);
    if (d.tokens_.is_silence(c)) {
      n.bonus += d.options_.sil_score;
      if (d.delimited_words_) close_free_word(n, h);
    } else if (d.lm_ && !d.delimited_words_) {
      auto [state, s] = d.lm_->score(h.lm_state, d.lm_ids_[c]);
      n.lm += s;
      n.lm_state = state;
      n.bonus += d.options_.word_score;
    }
    rank(n);
    add(n);
  }

  void expand_lexicon(const Hyp& h, TokenId c, double lp) {
    const LexiconTrie& trie = *d.trie_;
    if (d.tokens_.is_silence(c) && h.trie_node == LexiconTrie::kRoot) {
      Hyp n = appended(h, c, lp);
      n.bonus += d.options_.sil_score;
      rank(n);
      add(n);
    }
    const int child = trie.child(h.trie_node, c);
    if (child < 0) return;
    const auto& node = trie.node(child);
    const Hyp base = appended(h, c, lp);
    for (int w : node.words) {
      Hyp n = base;
      n.trie_node = LexiconTrie::kRoot;
      n.lookahead = 0.0;
      if (d.lm_) {
        auto [state, s] = d.lm_->score(h.lm_state, d.lm_ids_[w]);
        n.lm += s;
        n.lm_state = state;
      }
      n.bonus += d.options_.word_score;
      n.pending_word = w;
      n.last_word = w;
      rank(n);
      add(n);
    }
    if (!node.children.empty()) {
      Hyp n = base;
      n.trie_node = child;
      n.lookahead = d.lm_ && trie.smeared() ? d.options_.lm_weight * node.max_score : 0.0;
      rank(n);
      add(n);
    }
  }

  void commit(Hyp& h, int frame) {
    if (h.prefix_pending) {
      h.prefix = prefixes.intern(h.prefix, h.last_token);
      h.prefix_pending = false;
    }
    if (h.appended) {
      const bool boundary = !lexicon_mode() || h.trie_node == LexiconTrie::kRoot;
      token_records.push_back({h.token_tail, h.last_token, frame, boundary});
      h.token_tail = static_cast<int>(token_records.size()) - 1;
      h.appended = false;
    }
    if (h.pending_word >= 0) {
      word_records.push_back({h.word_tail, h.pending_word});
      h.word_tail = static_cast<int>(word_records.size()) - 1;
      h.pending_word = -1;
    }
  }

  template <typename Scalar>
  std::vector<Hyp> run(const Emissions<Scalar>& e) {
    const auto& opts = d.options_;
    const int vocab = e.vocab_size();
    const TokenId blank = d.tokens_.blank();
    const int k = opts.beam_size_token.value_or(vocab);

    Hyp start;
    start.trie_node = lexicon_mode() ? LexiconTrie::kRoot : -1;
    if (d.lm_) start.lm_state = d.lm_->start();
    std::vector<Hyp> beam{start};

    std::vector<TokenId> order(vocab);
    std::vector<TokenId> selected;
    std::vector<double> row(vocab);
    std::vector<int> ranked;
    slots.reserve(static_cast<std::size_t>(opts.beam_size) * k * 2);

    for (int t = 0; t < e.num_frames(); ++t) {
      for (int v = 0; v < vocab; ++v) row[v] = static_cast<double>(e(t, v));
      std::iota(order.begin(), order.end(), 0);
      if (k < vocab) {
        std::partial_sort(order.begin(), order.begin() + k, order.end(),
                          [&](TokenId a, TokenId b) {
                            return row[a] > row[b] || (row[a] == row[b] && a < b);
                          });
        selected.assign(order.begin(), order.begin() + k);
        std::sort(selected.begin(), selected.end());
      } else {
        selected = order;
      }

      candidates.clear();
      slots.clear();
      best_candidate = kNegInf;
      for (const Hyp& h : beam) {
        for (TokenId c : selected) {
          const double lp = row[c];
          if (c == blank || (c == h.last_token && !h.prev_blank)) {
            Hyp n = h;
            n.am += lp;
            n.prev_blank = c == blank;
            rank(n);
            add(n);
          } else if (lexicon_mode()) {
            expand_lexicon(h, c, lp);
          } else {
            expand_free(h, c, lp);
          }
        }
      }

      ranked.clear();
      const double floor = best_candidate - opts.beam_threshold;
      for (int i = 0; i < static_cast<int>(candidates.size()); ++i)
        if (candidates[i].score >= floor) ranked.push_back(i);
      auto better = [&](int a, int b) {
        return candidates[a].score > candidates[b].score ||
               (candidates[a].score == candidates[b].score && a < b);
      };
      const std::size_t keep = std::min<std::size_t>(ranked.size(), opts.beam_size);
      std::partial_sort(ranked.begin(), ranked.begin() + keep, ranked.end(), better);
      ranked.resize(keep);

      beam.clear();
      const int frame = e.original_frame(t);
      for (int i : ranked) {
        beam.push_back(candidates[i]);
        commit(beam.back(), frame);
      }
    }
    return beam;
  }

  Hypothesis finish(Hyp h) {
    int tail = h.token_tail;
    if (lexicon_mode()) {
      // drop the unfinished word
      while (tail >= 0 && !token_records[tail].word_boundary)
        tail = token_records[tail].parent;
    } else if (d.delimited_words_) {
      Hyp closed = h;
      close_free_word(closed, h);
      h.lm = closed.lm;
      h.lm_state = closed.lm_state;
      h.bonus = closed.bonus;
      h.pending_word = closed.pending_word;
      commit(h, -1);
    }
    if (d.lm_) h.lm += d.lm_->finish(h.lm_state);

    Hypothesis out;
    out.am_score = h.am;
    out.lm_score = h.lm;
    out.score = h.am + d.options_.lm_weight * h.lm + h.bonus;
    for (int r = tail; r >= 0; r = token_records[r].parent) {
      out.tokens.push_back(token_records[r].token);
      out.timesteps.push_back(token_records[r].frame);
    }
    std::reverse(out.tokens.begin(), out.tokens.end());
    std::reverse(out.timesteps.begin(), out.timesteps.end());
    for (int r = h.word_tail; r >= 0; r = word_records[r].parent)
      out.words.push_back(lexicon_mode() ? d.trie_->word(word_records[r].word)
                                         : free_words[word_records[r].word]);
    std::reverse(out.words.begin(), out.words.end());
    return out;
  }
};

CtcDecoder::CtcDecoder(const TokenDictionary& tokens, DecoderOptions options,
                       const LexiconTrie* trie, const NGramLM* lm)
    : tokens_(tokens), options_(options), trie_(trie), lm_(lm) {
  options_.validate(tokens_.size());
  if (trie_) {
    if (trie_->empty()) throw ValidationError("lexicon mode requires a non-empty trie");
    if (lm_) {
      lm_ids_.reserve(trie_->lexicon().size());
      for (const auto& entry : trie_->lexicon().entries())
        lm_ids_.push_back(lm_->word_id(entry.word));
    }
  } else {
    delimited_words_ = tokens_.silence().has_value();
    if (lm_ && !delimited_words_) {
      for (const auto& tok : tokens_.tokens()) lm_ids_.push_back(lm_->word_id(tok));
    }
  }
}

template <typename Scalar>
NBestList CtcDecoder::decode(const Emissions<Scalar>& emissions) const {
  if (emissions.empty()) throw ValidationError("empty emissions");
  if (emissions.vocab_size() != tokens_.size())
    throw ValidationError("emission width " + std::to_string(emissions.vocab_size()) +
                          " does not match " + std::to_string(tokens_.size()) +
                          " tokens");

  Search search(*this);
  std::vector<Hyp> beam;
  if (blank_collapse_disabled(options_.blank_skip_threshold)) {
    beam = search.run(emissions);
  } else {
    beam = search.run(
        blank_collapse(emissions, tokens_.blank(), options_.blank_skip_threshold));
  }

  // Hypotheses stuck inside a word would otherwise re-count their prefix
  // under a shorter word sequence; they only survive (truncated to their
  // last complete word) when nothing ends on a word boundary.
  if (trie_) {
    auto at_root = [](const Hyp& h) { return h.trie_node == LexiconTrie::kRoot; };
    if (std::any_of(beam.begin(), beam.end(), at_root)) std::erase_if(beam, std::not_fn(at_root));
  }

  // Hypotheses that differ only in search state (trailing blank, trie
  // position) describe the same output and are merged here.
  NBestList merged;
  std::map<std::pair<std::vector<TokenId>, std::vector<std::string>>, std::size_t> index;
  for (const Hyp& h : beam) {
    Hypothesis out = search.finish(h);
    auto key = std::make_pair(out.tokens, out.words);
    auto [it, inserted] = index.try_emplace(std::move(key), merged.size());
    if (inserted) {
      merged.push_back(std::move(out));
      continue;
    }
    Hypothesis& slot = merged[it->second];
    if (options_.merge_mode == MergeMode::kMax) {
      if (out.score > slot.score) slot = std::move(out);
    } else {
      const double total = log_add(slot.score, out.score);
      if (out.score > slot.score) slot = std::move(out);
      slot.am_score += total - slot.score;
      slot.score = total;
    }
  }

  std::sort(merged.begin(), merged.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.tokens != b.tokens) return a.tokens < b.tokens;
    return a.words < b.words;
  });
  if (merged.size() > static_cast<std::size_t>(options_.n_best))
    merged.resize(options_.n_best);
  return merged;
}

template <typename Scalar>
std::vector<NBestList> CtcDecoder::decode_batch(std::span<const Emissions<Scalar>> batch,
                                                int workers) const {
  std::vector<NBestList> results(batch.size());
  std::vector<std::exception_ptr> errors(batch.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < batch.size(); i = next++) {
      try {
        results[i] = decode(batch[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads =
      std::min<std::size_t>(std::max(workers, 1), std::max<std::size_t>(batch.size(), 1));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(work);
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw BatchError(i, e.what());
    }
  }
  return results;
}

template NBestList CtcDecoder::decode(const Emissions<float>&) const;
template NBestList CtcDecoder::decode(const Emissions<double>&) const;
template std::vector<NBestList> CtcDecoder::decode_batch(std::span<const Emissions<float>>,
                                                         int) const;
template std::vector<NBestList> CtcDecoder::decode_batch(std::span<const Emissions<double>>,
                                                         int) const;

}  // namespace ctcforge

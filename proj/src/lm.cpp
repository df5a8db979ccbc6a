#include "ctcforge/lm.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <optional>

#include "ctcforge/error.hpp"

namespace ctcforge {
namespace {

constexpr double kLn10 = std::numbers::ln10;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Line cursor that remembers line numbers for error messages.
class Lines {
 public:
  explicit Lines(std::string_view text) : text_(text) {}

  bool next(std::string_view& line) {
    if (pos_ > text_.size()) return false;
    std::size_t end = text_.find('\n', pos_);
    if (end == std::string_view::npos) end = text_.size();
    line = text_.substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end + 1;
    ++number_;
    return true;
  }
  std::size_t number() const { return number_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t number_ = 0;
};

[[noreturn]] void fail(const Lines& lines, const std::string& msg) {
  throw FormatError("ARPA line " + std::to_string(lines.number()) + ": " + msg);
}

}  // namespace

WordId NGramLM::word_id(std::string_view word) const {
  auto it = word_index_.find(std::string(word));
  return it == word_index_.end() ? kNoWord : it->second;
}

WordId NGramLM::intern(std::string_view word) {
  auto [it, inserted] =
      word_index_.emplace(std::string(word), static_cast<WordId>(words_.size()));
  if (inserted) words_.emplace_back(word);
  return it->second;
}

std::int32_t NGramLM::child_context(std::int32_t context, WordId word) const {
  auto it = context_children_.find(key(context, word));
  return it == context_children_.end() ? -1 : it->second;
}

std::int32_t NGramLM::add_context(std::span<const WordId> words) {
  std::int32_t node = kRootContext;
  for (auto it = words.rbegin(); it != words.rend(); ++it) {
    auto [pos, inserted] = context_children_.emplace(
        key(node, *it), static_cast<std::int32_t>(backoff_.size()));
    if (inserted) backoff_.push_back(0.0);
    node = pos->second;
  }
  return node;
}

LMState NGramLM::start() const {
  LMState s;
  if (order_ > 1) {
    s.ids_[0] = bos_;
    s.size_ = 1;
  }
  return s;
}

LMState NGramLM::truncated(std::span<const WordId> history) const {
  const std::size_t max_len = static_cast<std::size_t>(std::max(order_ - 1, 0));
  std::size_t len = 0;
  std::int32_t node = kRootContext;
  while (len < max_len && len < history.size()) {
    const std::int32_t next = child_context(node, history[history.size() - 1 - len]);
    if (next < 0) break;
    node = next;
    ++len;
  }
  LMState s;
  std::copy(history.end() - static_cast<std::ptrdiff_t>(len), history.end(),
            s.ids_.begin());
  s.size_ = len;
  return s;
}

double NGramLM::unigram(WordId word) const {
  if (word != kNoWord) {
    auto it = probs_.find(key(kRootContext, word));
    if (it != probs_.end()) return it->second;
  }
  if (unk_ != kNoWord && word != unk_) return unigram(unk_);
  return kOovPenalty;
}

std::pair<LMState, double> NGramLM::score(const LMState& state, WordId word) const {
  if (word == kNoWord || !probs_.contains(key(kRootContext, word))) {
    if (unk_ == kNoWord || word == unk_) {
      LMState next;
      next.cumulative_ = state.cumulative_ + kOovPenalty;
      return {next, kOovPenalty};
    }
    word = unk_;
  }

  // chain[j] is the context node for the j most recent words
  std::array<std::int32_t, kMaxLmOrder> chain{};
  chain[0] = kRootContext;
  std::size_t depth = 0;
  const auto ctx = state.context();
  while (depth < ctx.size()) {
    const std::int32_t next = child_context(chain[depth], ctx[ctx.size() - 1 - depth]);
    if (next < 0) break;
    chain[++depth] = next;
  }

  double backoff = 0.0;
  double total = 0.0;
  for (std::size_t j = depth + 1; j-- > 0;) {
    auto it = probs_.find(key(chain[j], word));
    if (it != probs_.end()) {
      total = it->second + backoff;
      break;
    }
    backoff += backoff_[chain[j]];
  }

  std::array<WordId, kMaxLmOrder> history{};
  std::copy(ctx.begin(), ctx.end(), history.begin());
  history[ctx.size()] = word;
  LMState next = truncated({history.data(), ctx.size() + 1});
  next.cumulative_ = state.cumulative_ + total;
  return {next, total};
}

NGramLM parse_arpa_string(std::string_view text, const ArpaOptions& options) {
  NGramLM lm;
  Lines lines(text);
  std::string_view line;

  bool found_data = false;
  while (lines.next(line)) {
    if (trim(line) == "\\data\\") {
      found_data = true;
      break;
    }
  }
  if (!found_data) throw FormatError("ARPA: missing \\data\\ header");

  std::vector<std::size_t> declared;
  while (lines.next(line)) {
    const auto t = trim(line);
    if (t.empty()) {
      if (declared.empty()) continue;
      break;
    }
    if (!t.starts_with("ngram ")) fail(lines, "expected 'ngram N=count'");
    const auto body = trim(t.substr(6));
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) fail(lines, "expected 'ngram N=count'");
    const auto n = to_double(trim(body.substr(0, eq)));
    const auto c = to_double(trim(body.substr(eq + 1)));
    if (!n || !c || *n < 1 || *c < 0) fail(lines, "bad ngram count line");
    const auto order = static_cast<std::size_t>(*n);
    if (order != declared.size() + 1) fail(lines, "ngram orders must be listed 1..N");
    declared.push_back(static_cast<std::size_t>(*c));
  }
  if (declared.empty()) throw FormatError("ARPA: no ngram counts in header");
  if (declared.size() > static_cast<std::size_t>(kMaxLmOrder))
    throw FormatError("ARPA: order " + std::to_string(declared.size()) +
                      " exceeds supported maximum " + std::to_string(kMaxLmOrder));

  lm.order_ = static_cast<int>(declared.size());
  lm.counts_.assign(declared.size(), 0);
  lm.backoff_.push_back(0.0);  // root context

  std::vector<WordId> ids;
  std::size_t section = 0;
  bool ended = false;
  while (!ended && lines.next(line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t == "\\end\\") {
      ended = true;
      break;
    }
    const std::string expected = "\\" + std::to_string(section + 1) + "-grams:";
    if (t != expected) fail(lines, "expected section " + expected);
    ++section;
    const std::size_t n = section;
    if (n > declared.size()) fail(lines, "section beyond declared order");

    while (lines.next(line)) {
      const auto body = trim(line);
      if (body.empty()) break;
      if (body.front() == '\\') fail(lines, "section " + expected + " not terminated by a blank line");
      const auto fields = split_fields(body);
      if (fields.size() != n + 1 && fields.size() != n + 2)
        fail(lines, "expected " + std::to_string(n + 1) + " or " +
                        std::to_string(n + 2) + " fields");
      const auto logprob = to_double(fields[0]);
      if (!logprob) fail(lines, "malformed log-probability");
      std::optional<double> bow;
      if (fields.size() == n + 2) {
        if (n == declared.size()) fail(lines, "backoff weight on highest-order n-gram");
        bow = to_double(fields[n + 1]);
        if (!bow) fail(lines, "malformed backoff weight");
      }

      ids.clear();
      for (std::size_t i = 1; i <= n; ++i) ids.push_back(lm.intern(fields[i]));
      const std::span<const WordId> all(ids);
      const auto prefix = all.first(n - 1);

      if (n > 1) {
        // prefix must itself be a listed (n-1)-gram
        std::int32_t parent = NGramLM::kRootContext;
        for (std::size_t i = n - 1; i-- > 1 && parent >= 0;)
          parent = lm.child_context(parent, prefix[i - 1]);
        if (parent < 0 || !lm.probs_.contains(NGramLM::key(parent, prefix.back()))) {
          std::string msg = "prefix of n-gram at line " +
                            std::to_string(lines.number()) + " is not listed";
          if (options.strict) throw FormatError("ARPA: " + msg);
          lm.warnings_.push_back(std::move(msg));
        }
      }
      const std::int32_t context = lm.add_context(prefix);
      lm.probs_[NGramLM::key(context, ids.back())] = *logprob * kLn10;
      if (bow) {
        const std::int32_t self = lm.add_context(all);
        lm.backoff_[self] = *bow * kLn10;
      }
      ++lm.counts_[n - 1];
    }
    if (lm.counts_[n - 1] != declared[n - 1])
      throw FormatError("ARPA: header declares " + std::to_string(declared[n - 1]) +
                        " " + std::to_string(n) + "-grams, found " +
                        std::to_string(lm.counts_[n - 1]));
  }
  if (!ended) throw FormatError("ARPA: missing \\end\\ marker");
  if (section != declared.size())
    throw FormatError("ARPA: " + std::to_string(declared.size()) +
                      " orders declared but " + std::to_string(section) +
                      " sections present");

  lm.bos_ = lm.intern("<s>");
  lm.eos_ = lm.intern("</s>");
  lm.unk_ = lm.word_id("<unk>");
  return lm;
}

NGramLM parse_arpa(const std::filesystem::path& path, const ArpaOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open ARPA file " + path.string());
  const std::string text(std::istreambuf_iterator<char>(in), {});
  try {
    return parse_arpa_string(text, options);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace ctcforge

#include <gtest/gtest.h>

#include "ctcforge/error.hpp"
#include "ctcforge/metrics.hpp"
#include "support.hpp"

namespace ctcforge {
namespace {

using testing::naive_edit_distance;
using testing::random_words;

TEST(EditDistance, SingleSubstitution) {
  auto c = edit_distance(split_words("a b c"), split_words("a x c"));
  EXPECT_EQ(c.substitutions, 1);
  EXPECT_EQ(c.insertions, 0);
  EXPECT_EQ(c.deletions, 0);
  EXPECT_EQ(c.ref_length, 3);
}

TEST(EditDistance, BreakdownPrefersSubstitution) {
  auto c = edit_distance(split_words("a b"), split_words("c"));
  EXPECT_EQ(c.substitutions, 1);
  EXPECT_EQ(c.deletions, 1);
  EXPECT_EQ(edit_distance(split_words(""), split_words("x y")).insertions, 2);
  EXPECT_EQ(edit_distance(split_words("x y"), split_words("")).deletions, 2);
}

TEST(EditDistance, MatchesNaiveRecursion) {
  std::mt19937 rng(51);
  for (int i = 0; i < 1000; ++i) {
    auto a = random_words(rng, 8, 4), b = random_words(rng, 8, 4);
    auto c = edit_distance(a, b);
    ASSERT_EQ(c.distance(), naive_edit_distance(a, 0, b, 0)) << "pair " << i;
    EXPECT_EQ(c.ref_length, static_cast<int>(a.size()));
    // the breakdown must account for the length difference
    EXPECT_EQ(static_cast<int>(b.size()) - static_cast<int>(a.size()),
              c.insertions - c.deletions);
  }
}

TEST(EditDistance, IsAMetric) {
  std::mt19937 rng(52);
  for (int i = 0; i < 300; ++i) {
    auto a = random_words(rng, 6, 3), b = random_words(rng, 6, 3), c = random_words(rng, 6, 3);
    const int ab = edit_distance(a, b).distance();
    EXPECT_EQ(ab, edit_distance(b, a).distance());
    EXPECT_EQ(edit_distance(a, a).distance(), 0);
    EXPECT_LE(edit_distance(a, c).distance(), ab + edit_distance(b, c).distance());
  }
}

TEST(Wer, SubstitutionFixture) {
  std::vector<WordList> refs{split_words("a b c")}, hyps{split_words("a x c")};
  EXPECT_NEAR(wer(refs, hyps), 33.33, 0.01);
}

TEST(Wer, PoolsOverCorpus) {
  std::vector<WordList> refs{split_words("a b c d"), split_words("e f")};
  std::vector<WordList> hyps{split_words("a b"), split_words("e g h")};
  // (2 deletions + 1 substitution + 1 insertion) / 6 words
  EXPECT_DOUBLE_EQ(wer(refs, hyps), 100.0 * 4 / 6);
  std::mt19937 rng(53);
  for (int i = 0; i < 100; ++i) {
    std::vector<WordList> r, h;
    int edits = 0, words = 0;
    for (int u = 0; u < 5; ++u) {
      auto ref = random_words(rng, 6, 3);
      if (ref.empty()) ref.push_back("a");
      auto hyp = random_words(rng, 6, 3);
      edits += naive_edit_distance(ref, 0, hyp, 0);
      words += static_cast<int>(ref.size());
      r.push_back(ref);
      h.push_back(hyp);
    }
    EXPECT_NEAR(wer(r, h), 100.0 * edits / words, 1e-9);
  }
}

TEST(Wer, RejectsDegenerateCorpora) {
  std::vector<WordList> one{split_words("a")}, two{split_words("a"), split_words("b")};
  EXPECT_THROW(wer(one, two), Error);
  std::vector<WordList> empty_ref{WordList{}};
  EXPECT_THROW(wer(empty_ref, empty_ref), Error);
}

TEST(OracleWer, MatchesBruteForceSelection) {
  std::mt19937 rng(54);
  for (int i = 0; i < 100; ++i) {
    std::vector<WordList> refs, top1;
    std::vector<std::vector<WordList>> nbests;
    int best_edits = 0, words = 0;
    for (int u = 0; u < 4; ++u) {
      auto ref = random_words(rng, 5, 3);
      ref.push_back("a");
      std::vector<WordList> nbest(1 + rng() % 4);
      int best = 1 << 30;
      for (auto& h : nbest) {
        h = random_words(rng, 5, 3);
        best = std::min(best, naive_edit_distance(ref, 0, h, 0));
      }
      best_edits += best;
      words += static_cast<int>(ref.size());
      refs.push_back(ref);
      top1.push_back(nbest.front());
      nbests.push_back(nbest);
    }
    const double oracle = oracle_wer(refs, nbests);
    EXPECT_NEAR(oracle, 100.0 * best_edits / words, 1e-9);
    EXPECT_LE(oracle, wer(refs, top1) + 1e-12);
    // a longer N-best can only help
    for (auto& nb : nbests) nb.push_back(random_words(rng, 5, 3));
    EXPECT_LE(oracle_wer(refs, nbests), oracle + 1e-12);
  }
}

TEST(OracleWer, RejectsEmptyNBest) {
  std::vector<WordList> refs{split_words("a")};
  std::vector<std::vector<WordList>> nbests{{}};
  EXPECT_THROW(oracle_wer(refs, nbests), Error);
}

TEST(SplitWords, CollapsesWhitespace) {
  EXPECT_EQ(split_words("  a\tb \n c  "), (WordList{"a", "b", "c"}));
  EXPECT_TRUE(split_words(" \t").empty());
}

}  // namespace
}  // namespace ctcforge

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ctcforge/error.hpp"
#include "ctcforge/tokens.hpp"

namespace ctcforge {

/// Frame-major matrix of natural-log token probabilities.
template <typename Scalar>
using LogProbMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-frame log-probabilities over the token vocabulary.
///
/// Rows may be a subset of the frames the acoustic model produced (after
/// blank collapse); `original_frame(t)` maps a row back to its source frame.
/// An empty frame map means the identity.
template <typename Scalar>
class Emissions {
 public:
  using Matrix = LogProbMatrix<Scalar>;

  Emissions() = default;
  explicit Emissions(Matrix log_probs, std::vector<int> frame_map = {})
      : log_probs_(std::move(log_probs)), frame_map_(std::move(frame_map)) {
    if (!frame_map_.empty()) {
      if (static_cast<Eigen::Index>(frame_map_.size()) != log_probs_.rows())
        throw ValidationError("frame map length differs from frame count");
      for (std::size_t i = 1; i < frame_map_.size(); ++i)
        if (frame_map_[i] <= frame_map_[i - 1])
          throw ValidationError("frame map must be strictly increasing");
      if (frame_map_.front() < 0)
        throw ValidationError("frame map entries must be non-negative");
      // strictly increasing from 0 with T entries is the identity
      if (frame_map_.back() == static_cast<int>(frame_map_.size()) - 1)
        frame_map_.clear();
    }
  }

  int num_frames() const noexcept { return static_cast<int>(log_probs_.rows()); }
  int vocab_size() const noexcept { return static_cast<int>(log_probs_.cols()); }
  bool empty() const noexcept { return log_probs_.rows() == 0; }

  const Matrix& log_probs() const noexcept { return log_probs_; }
  Scalar operator()(int frame, int token) const { return log_probs_(frame, token); }
  auto row(int frame) const { return log_probs_.row(frame); }

  bool has_identity_frame_map() const noexcept { return frame_map_.empty(); }
  int original_frame(int frame) const {
    return frame_map_.empty() ? frame : frame_map_[frame];
  }
  /// Explicit frame map, materialized as the identity when unprocessed.
  std::vector<int> frame_map() const {
    if (!frame_map_.empty()) return frame_map_;
    std::vector<int> identity(num_frames());
    for (int t = 0; t < num_frames(); ++t) identity[t] = t;
    return identity;
  }

  /// Same rows with the frame map reset to the identity.
  Emissions rebased() const { return Emissions(log_probs_); }

  template <typename Other>
  Emissions<Other> cast() const {
    return Emissions<Other>(log_probs_.template cast<Other>(), frame_map_);
  }

  friend bool operator==(const Emissions& a, const Emissions& b) {
    return a.log_probs_.rows() == b.log_probs_.rows() &&
           a.log_probs_.cols() == b.log_probs_.cols() &&
           a.log_probs_ == b.log_probs_ && a.frame_map() == b.frame_map();
  }

 private:
  Matrix log_probs_;
  std::vector<int> frame_map_;
};

using EmissionMatrix = Emissions<float>;

inline constexpr double kMaxLogProb = 1e-4;
inline constexpr double kRowNormTolerance = 1e-3;

/// Numerically stable log(sum(exp(x))) over a row or vector expression.
template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  if (x.size() == 0) return -INFINITY;
  const double hi = static_cast<double>(x.maxCoeff());
  if (!std::isfinite(hi)) return hi;
  return hi + std::log((x.template cast<double>().array() - hi).exp().sum());
}

/// Checks every entry is finite and not above zero; in strict mode also that
/// each row is a normalized distribution.
template <typename Scalar>
void validate(const Emissions<Scalar>& e, bool strict = true) {
  for (int t = 0; t < e.num_frames(); ++t) {
    for (int v = 0; v < e.vocab_size(); ++v) {
      const double x = e(t, v);
      if (!std::isfinite(x))
        throw ValidationError("non-finite log-probability at row " +
                              std::to_string(t) + ", column " +
                              std::to_string(v));
      if (x > kMaxLogProb)
        throw ValidationError("positive log-probability at row " +
                              std::to_string(t) + ", column " +
                              std::to_string(v));
    }
    if (strict) {
      const double lse = log_sum_exp(e.row(t));
      if (std::abs(lse) > kRowNormTolerance)
        throw ValidationError("row " + std::to_string(t) +
                              " is not normalized (log-sum-exp " +
                              std::to_string(lse) + ")");
    }
  }
}

/// Argmax of one row; ties go to the lowest token index.
template <typename Derived>
TokenId argmax_token(const Eigen::DenseBase<Derived>& row) {
  TokenId best = 0;
  for (Eigen::Index v = 1; v < row.size(); ++v)
    if (row(v) > row(best)) best = static_cast<TokenId>(v);
  return best;
}

/// Merges consecutive duplicates, then removes blanks.
std::vector<TokenId> ctc_collapse(const std::vector<TokenId>& path,
                                  TokenId blank);

/// Best-path decoding: per-frame argmax followed by CTC collapse.
template <typename Scalar>
std::vector<TokenId> greedy_decode(const Emissions<Scalar>& e,
                                   const TokenDictionary& tokens) {
  if (e.vocab_size() != tokens.size())
    throw ValidationError("emission width does not match token dictionary");
  std::vector<TokenId> path(e.num_frames());
  for (int t = 0; t < e.num_frames(); ++t) path[t] = argmax_token(e.row(t));
  return ctc_collapse(path, tokens.blank());
}

/// Slack applied to the blank-collapse comparison.
inline constexpr double kBlankCollapseEpsilon = 1e-12;

/// True when `threshold` removes nothing by definition.
inline bool blank_collapse_disabled(double threshold) { return threshold >= 1.0; }

/// Drops every frame whose blank probability reaches `threshold`.
///
/// A threshold of 1.0 is the no-skip setting and returns the input unchanged.
/// Surviving rows keep their source frame index in the frame map.
template <typename Scalar>
Emissions<Scalar> blank_collapse(const Emissions<Scalar>& e, TokenId blank,
                                 double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw ValidationError("blank skip threshold must lie in (0, 1]");
  if (!e.has_identity_frame_map())
    throw ValidationError("emissions are already collapsed; rebase first");
  if (blank < 0 || blank >= e.vocab_size())
    throw ValidationError("blank index out of range");
  if (blank_collapse_disabled(threshold)) return e;

  std::vector<int> keep;
  keep.reserve(e.num_frames());
  for (int t = 0; t < e.num_frames(); ++t)
    if (std::exp(static_cast<double>(e(t, blank))) <
        threshold - kBlankCollapseEpsilon)
      keep.push_back(t);

  typename Emissions<Scalar>::Matrix rows(static_cast<Eigen::Index>(keep.size()),
                                          e.vocab_size());
  for (std::size_t i = 0; i < keep.size(); ++i)
    rows.row(static_cast<Eigen::Index>(i)) = e.row(keep[i]);
  return Emissions<Scalar>(std::move(rows), std::move(keep));
}

}  // namespace ctcforge

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "emoflow/errors.hpp"

namespace emoflow {

/// The eight canonical in-domain emotion categories (Mikels set), in the
/// order used for wire serialization and distribution storage.
inline constexpr std::array<std::string_view, 8> kCanonicalEmotions = {
    "amusement", "awe", "contentment", "excitement",
    "anger",     "disgust", "fear",    "sadness"};

inline constexpr std::size_t kEmotionCount = kCanonicalEmotions.size();

/// An emotion target/source label: one of the eight canonical categories or
/// a free-form lowercase token for out-of-domain emotions (zero-shot path).
class EmotionLabel {
 public:
  EmotionLabel() = default;

  /// Parses any token: canonical names become in-domain labels, everything
  /// else is normalized (trimmed, lowercased) into an out-of-domain label.
  static EmotionLabel parse(std::string_view token) {
    std::string t = normalize(token);
    if (t.empty()) throw SchemaViolation("emotion", "empty emotion token");
    for (std::size_t i = 0; i < kEmotionCount; ++i) {
      if (t == kCanonicalEmotions[i]) return EmotionLabel(t, true);
    }
    return EmotionLabel(std::move(t), false);
  }

  static EmotionLabel in_domain(std::string_view token) {
    EmotionLabel l = parse(token);
    if (!l.is_in_domain())
      throw SchemaViolation("emotion", "not an in-domain emotion: " + l.value());
    return l;
  }

  static EmotionLabel out_of_domain(std::string_view token) {
    EmotionLabel l = parse(token);
    return EmotionLabel(l.value(), false);
  }

  const std::string& value() const noexcept { return value_; }
  bool is_in_domain() const noexcept { return in_domain_; }

  /// Index into kCanonicalEmotions; valid only for in-domain labels.
  std::size_t index() const {
    for (std::size_t i = 0; i < kEmotionCount; ++i)
      if (value_ == kCanonicalEmotions[i]) return i;
    throw SchemaViolation("emotion", "no canonical index for: " + value_);
  }

  bool operator==(const EmotionLabel& o) const noexcept {
    return value_ == o.value_ && in_domain_ == o.in_domain_;
  }
  bool operator!=(const EmotionLabel& o) const noexcept { return !(*this == o); }

 private:
  EmotionLabel(std::string v, bool in_domain)
      : value_(std::move(v)), in_domain_(in_domain) {}

  static std::string normalize(std::string_view token) {
    std::size_t b = 0, e = token.size();
    while (b < e && std::isspace(static_cast<unsigned char>(token[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(token[e - 1]))) --e;
    std::string out(token.substr(b, e - b));
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  }

  std::string value_;
  bool in_domain_ = false;
};

/// Probability mass over the eight canonical emotions. Values are stored in
/// canonical order; they must be non-negative and sum to 1 within 1e-9.
/// The all-zeros state is the out-of-domain sentinel and is only produced by
/// `EmotionDistribution::sentinel()`.
class EmotionDistribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  EmotionDistribution() : probs_{} {}

  static EmotionDistribution from_probs(const std::array<double, kEmotionCount>& probs) {
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0) || !std::isfinite(p))
        throw InvalidDistribution("probability out of range");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance)
      throw InvalidDistribution("probabilities sum to " + std::to_string(sum) +
                                ", expected 1");
    EmotionDistribution d;
    d.probs_ = probs;
    return d;
  }

  /// All-zeros sentinel recorded for out-of-domain assessments; excluded from
  /// metric aggregation by callers.
  static EmotionDistribution sentinel() { return EmotionDistribution(); }

  bool is_sentinel() const noexcept {
    for (double p : probs_)
      if (p != 0.0) return false;
    return true;
  }

  double at(const EmotionLabel& label) const { return probs_[label.index()]; }
  double at(std::size_t index) const { return probs_.at(index); }
  const std::array<double, kEmotionCount>& probs() const noexcept { return probs_; }

  /// Argmax label; ties broken lexicographically over label names.
  EmotionLabel argmax() const {
    std::array<std::size_t, kEmotionCount> order;
    for (std::size_t i = 0; i < kEmotionCount; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [](std::size_t a, std::size_t b) {
      return kCanonicalEmotions[a] < kCanonicalEmotions[b];
    });
    std::size_t best = order[0];
    for (std::size_t i : order) {
      if (probs_[i] > probs_[best]) best = i;
    }
    return EmotionLabel::in_domain(kCanonicalEmotions[best]);
  }

  bool operator==(const EmotionDistribution& o) const noexcept {
    return probs_ == o.probs_;
  }

 private:
  std::array<double, kEmotionCount> probs_;
};

}  // namespace emoflow

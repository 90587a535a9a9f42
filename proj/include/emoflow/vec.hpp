#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "emoflow/errors.hpp"

namespace emoflow {

using Vec = std::vector<double>;

inline void require_same_dim(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw DimensionMismatch("vector dimensions differ: " + std::to_string(a.size()) +
                            " vs " + std::to_string(b.size()));
}

inline double norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Cosine of the angle between two non-zero vectors of equal dimension.
inline double cosine_similarity(const Vec& a, const Vec& b) {
  require_same_dim(a, b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ZeroVector("cosine_similarity on zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Euclidean distance d = sqrt(sum_i (a_i - b_i)^2).
inline double l2_distance(const Vec& a, const Vec& b) {
  require_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// v scaled to unit length.
inline Vec normalized(const Vec& v) {
  double n = norm(v);
  if (n == 0.0) throw ZeroVector("cannot normalize zero vector");
  Vec out = v;
  for (double& x : out) x /= n;
  return out;
}

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace emoflow

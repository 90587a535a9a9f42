#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "emoflow/errors.hpp"
#include "emoflow/vec.hpp"

namespace emoflow::efk {

/// One merge event: cluster `absorbed` merged into cluster `kept`
/// (kept < absorbed; cluster ids are the initial singleton indices).
struct MergeStep {
  std::uint32_t kept = 0;
  std::uint32_t absorbed = 0;
  double similarity = 0.0;
};

/// Final flat clustering plus the full merge sequence.
struct ClusterResult {
  std::vector<std::vector<std::uint32_t>> clusters;  // member indices, ascending
  std::vector<MergeStep> steps;
};

/// Average-linkage agglomerative clustering over cosine similarity.
///
/// Every point starts as its own cluster; at each step the pair of clusters
/// with the highest mean pairwise cosine similarity is merged, until the
/// best pair falls below `merge_threshold`. Ties break on the smallest
/// (kept, absorbed) id pair, and the merged cluster keeps the smaller id, so
/// the sequence is deterministic and independent of stop threshold (a higher
/// threshold yields a prefix of the same merge sequence).
///
/// Cross-cluster means are maintained with the exact size-weighted update
/// sim(A∪B, C) = (|A|·sim(A,C) + |B|·sim(B,C)) / (|A| + |B|).
inline ClusterResult agglomerate(const std::vector<Vec>& points, double merge_threshold) {
  const std::size_t n = points.size();
  ClusterResult result;
  if (n == 0) return result;

  for (std::size_t i = 1; i < n; ++i) require_same_dim(points[0], points[i]);

  // Dense pairwise similarity, symmetric.
  std::vector<std::vector<double>> sim(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      sim[i][j] = sim[j][i] = cosine_similarity(points[i], points[j]);

  std::vector<bool> active(n, true);
  std::vector<std::uint32_t> size(n, 1);

  while (true) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t ba = n, bb = n;
    for (std::size_t a = 0; a < n; ++a) {
      if (!active[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!active[b]) continue;
        if (sim[a][b] > best) {
          best = sim[a][b];
          ba = a;
          bb = b;
        }
      }
    }
    if (ba == n || best < merge_threshold) break;

    for (std::size_t c = 0; c < n; ++c) {
      if (!active[c] || c == ba || c == bb) continue;
      sim[ba][c] = sim[c][ba] =
          (size[ba] * sim[ba][c] + size[bb] * sim[bb][c]) / (size[ba] + size[bb]);
    }
    size[ba] += size[bb];
    active[bb] = false;
    result.steps.push_back({static_cast<std::uint32_t>(ba),
                            static_cast<std::uint32_t>(bb), best});
  }

  // Reconstruct memberships from the merge sequence.
  std::vector<std::uint32_t> owner(n);
  for (std::size_t i = 0; i < n; ++i) owner[i] = static_cast<std::uint32_t>(i);
  for (const MergeStep& s : result.steps)
    for (std::size_t i = 0; i < n; ++i)
      if (owner[i] == s.absorbed) owner[i] = s.kept;

  std::vector<std::vector<std::uint32_t>> by_id(n);
  for (std::size_t i = 0; i < n; ++i) by_id[owner[i]].push_back(static_cast<std::uint32_t>(i));
  for (std::size_t c = 0; c < n; ++c)
    if (!by_id[c].empty()) result.clusters.push_back(std::move(by_id[c]));
  return result;
}

}  // namespace emoflow::efk

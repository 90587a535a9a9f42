#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "emoflow/cluster.hpp"
#include "emoflow/emotion.hpp"
#include "emoflow/errors.hpp"
#include "emoflow/json_util.hpp"
#include "emoflow/vec.hpp"

namespace emoflow::efk {

/// Editing-element categories a factor node can describe.
enum class ElementKind {
  object,
  background_scene,
  action,
  facial_expression,
  color_tone,
  attribute,
};

inline constexpr std::array<ElementKind, 6> kAllElementKinds = {
    ElementKind::object,        ElementKind::background_scene,
    ElementKind::action,        ElementKind::facial_expression,
    ElementKind::color_tone,    ElementKind::attribute};

inline std::string to_string(ElementKind k) {
  switch (k) {
    case ElementKind::object: return "object";
    case ElementKind::background_scene: return "background_scene";
    case ElementKind::action: return "action";
    case ElementKind::facial_expression: return "facial_expression";
    case ElementKind::color_tone: return "color_tone";
    case ElementKind::attribute: return "attribute";
  }
  throw SchemaViolation("kind", "unknown element kind");
}

inline ElementKind element_kind_from_string(const std::string& s,
                                            const std::string& path = "kind") {
  for (ElementKind k : kAllElementKinds)
    if (to_string(k) == s) return k;
  throw SchemaViolation(path, "unknown element kind: " + s);
}

/// Knob set for emotion-factor tree construction.
struct ClusterParams {
  double merge_threshold = 0.89;
  std::uint32_t min_cluster_size = 5;
  double redundancy_distance_min = 8.0;  // median Hamming bits on 64-bit hashes
  bool relevance_required = false;

  void validate() const {
    if (!(merge_threshold > 0.0) || merge_threshold > 1.0)
      throw SchemaViolation("build_params.merge_threshold", "must be in (0, 1]");
    if (min_cluster_size < 1)
      throw SchemaViolation("build_params.min_cluster_size", "must be >= 1");
  }

  bool operator==(const ClusterParams& o) const {
    return merge_threshold == o.merge_threshold &&
           min_cluster_size == o.min_cluster_size &&
           redundancy_distance_min == o.redundancy_distance_min &&
           relevance_required == o.relevance_required;
  }

  Json to_json() const {
    return Json{{"merge_threshold", merge_threshold},
                {"min_cluster_size", min_cluster_size},
                {"redundancy_distance_min", redundancy_distance_min},
                {"relevance_required", relevance_required}};
  }

  static ClusterParams from_json(const Json& j, const std::string& path = "build_params") {
    ClusterParams p;
    p.merge_threshold = require_number(j, "merge_threshold", path);
    p.min_cluster_size = static_cast<std::uint32_t>(require_int(j, "min_cluster_size", path));
    p.redundancy_distance_min = require_number(j, "redundancy_distance_min", path);
    const Json& rr = require_field(j, "relevance_required", path);
    if (!rr.is_boolean()) throw SchemaViolation(path + ".relevance_required", "expected bool");
    p.relevance_required = rr.get<bool>();
    p.validate();
    return p;
  }
};

/// One retrievable emotion–element knowledge unit.
struct FactorNode {
  std::string id;
  EmotionLabel emotion;  // in-domain only
  ElementKind kind = ElementKind::object;
  std::string description;
  Vec embedding;  // unit-length centroid of the source cluster
  std::uint32_t cluster_id = 0;
  std::uint32_t cluster_size = 0;

  bool operator==(const FactorNode& o) const {
    return id == o.id && emotion == o.emotion && kind == o.kind &&
           description == o.description && embedding == o.embedding &&
           cluster_id == o.cluster_id && cluster_size == o.cluster_size;
  }
};

/// Immutable-after-build store of factor nodes; retrieval is read-only.
struct EmotionFactorTree {
  std::vector<FactorNode> nodes;
  std::size_t dimension = 0;
  ClusterParams build_params;

  bool operator==(const EmotionFactorTree& o) const {
    return nodes == o.nodes && dimension == o.dimension && build_params == o.build_params;
  }

  std::vector<const FactorNode*> nodes_for(const EmotionLabel& emotion) const {
    std::vector<const FactorNode*> out;
    for (const FactorNode& n : nodes)
      if (n.emotion == emotion) out.push_back(&n);
    return out;
  }

  void validate() const {
    std::vector<std::string> ids;
    for (const FactorNode& n : nodes) {
      if (!n.emotion.is_in_domain())
        throw SchemaViolation("nodes.emotion", "factor node emotion must be in-domain");
      if (n.description.empty())
        throw SchemaViolation("nodes.description", "empty description");
      if (n.embedding.size() != dimension)
        throw DimensionMismatch("node " + n.id + " embedding dimension");
      if (!all_finite(n.embedding))
        throw SchemaViolation("nodes.embedding", "non-finite component in " + n.id);
      ids.push_back(n.id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw SchemaViolation("nodes.id", "duplicate node id");
  }
};

/// One embedded exemplar feeding tree construction. Raw pixels never enter
/// the pipeline; hashes and relevance verdicts come from annotator backends.
struct ExemplarItem {
  std::string id;
  EmotionLabel emotion;  // in-domain
  Vec embedding;
  std::optional<std::uint64_t> perceptual_hash;
  std::optional<double> relevance_score;  // [0,1]
};

/// What the description backend sees for one surviving cluster.
struct ClusterSummary {
  EmotionLabel emotion;
  std::vector<std::string> member_ids;
  Vec centroid;
};

struct ClusterDescription {
  std::string description;
  ElementKind kind = ElementKind::object;
};

using DescriptionBackend = std::function<ClusterDescription(const ClusterSummary&)>;

namespace detail {

inline int hamming64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ b;
  int c = 0;
  while (x) {
    x &= x - 1;
    ++c;
  }
  return c;
}

/// Median pairwise Hamming distance over members carrying hashes; nullopt
/// when fewer than two members have one (filter not applicable).
inline std::optional<double> median_pairwise_hash_distance(
    const std::vector<const ExemplarItem*>& members) {
  std::vector<std::uint64_t> hashes;
  for (const ExemplarItem* m : members)
    if (m->perceptual_hash) hashes.push_back(*m->perceptual_hash);
  if (hashes.size() < 2) return std::nullopt;
  std::vector<double> dists;
  for (std::size_t i = 0; i < hashes.size(); ++i)
    for (std::size_t j = i + 1; j < hashes.size(); ++j)
      dists.push_back(static_cast<double>(hamming64(hashes[i], hashes[j])));
  std::sort(dists.begin(), dists.end());
  std::size_t n = dists.size();
  return n % 2 == 1 ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
}

inline std::string node_id(const EmotionLabel& emotion, std::uint32_t cluster_id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04u", cluster_id);
  return emotion.value() + "-" + buf;
}

}  // namespace detail

/// Builds the emotion-factor tree: per emotion, agglomerative clustering of
/// exemplar embeddings, then size / redundancy / relevance post-filters, then
/// one FactorNode per surviving cluster (unit-centroid embedding, description
/// and kind from the backend).
inline EmotionFactorTree build_tree(const std::vector<ExemplarItem>& items,
                                    const ClusterParams& params,
                                    const DescriptionBackend& describe) {
  params.validate();
  EmotionFactorTree tree;
  tree.build_params = params;
  if (items.empty()) return tree;

  tree.dimension = items[0].embedding.size();
  for (const ExemplarItem& it : items) {
    if (!it.emotion.is_in_domain())
      throw SchemaViolation("items.emotion", "exemplar emotion must be in-domain");
    if (it.embedding.size() != tree.dimension)
      throw DimensionMismatch("exemplar " + it.id + " embedding dimension");
    if (!all_finite(it.embedding))
      throw SchemaViolation("items.embedding", "non-finite component in " + it.id);
  }

  for (std::string_view emotion_name : kCanonicalEmotions) {
    EmotionLabel emotion = EmotionLabel::in_domain(emotion_name);
    std::vector<const ExemplarItem*> group;
    for (const ExemplarItem& it : items)
      if (it.emotion == emotion) group.push_back(&it);
    if (group.empty()) continue;

    std::vector<Vec> points;
    points.reserve(group.size());
    for (const ExemplarItem* it : group) points.push_back(it->embedding);

    ClusterResult clustered = agglomerate(points, params.merge_threshold);

    for (const std::vector<std::uint32_t>& members : clustered.clusters) {
      if (members.size() < params.min_cluster_size) continue;

      std::vector<const ExemplarItem*> cluster_items;
      for (std::uint32_t m : members) cluster_items.push_back(group[m]);

      if (auto median = detail::median_pairwise_hash_distance(cluster_items)) {
        if (*median < params.redundancy_distance_min) continue;  // near-duplicates
      }

      if (params.relevance_required) {
        double sum = 0.0;
        std::size_t scored = 0;
        for (const ExemplarItem* it : cluster_items) {
          if (it->relevance_score) {
            sum += *it->relevance_score;
            ++scored;
          }
        }
        // Annotator verdict: mean member score below 0.5 rejects the cluster.
        if (scored > 0 && sum / static_cast<double>(scored) < 0.5) continue;
      }

      Vec centroid(tree.dimension, 0.0);
      for (const ExemplarItem* it : cluster_items)
        for (std::size_t d = 0; d < tree.dimension; ++d) centroid[d] += it->embedding[d];
      for (double& x : centroid) x /= static_cast<double>(cluster_items.size());
      centroid = normalized(centroid);

      ClusterSummary summary{emotion, {}, centroid};
      for (const ExemplarItem* it : cluster_items) summary.member_ids.push_back(it->id);

      ClusterDescription desc = describe(summary);
      if (desc.description.empty())
        throw BackendMalformedResponse("description backend returned empty description");

      FactorNode node;
      node.id = detail::node_id(emotion, members[0]);  // smallest member index = cluster id
      node.emotion = emotion;
      node.kind = desc.kind;
      node.description = desc.description;
      node.embedding = std::move(centroid);
      node.cluster_id = members[0];
      node.cluster_size = static_cast<std::uint32_t>(members.size());
      tree.nodes.push_back(std::move(node));
    }
  }

  tree.validate();
  return tree;
}

/// Top-k retrieval: E_t-filtered nodes ranked by ascending L2 distance to the
/// query embedding (ties on ascending id), with at most `per_kind_cap` nodes
/// of any single ElementKind in the returned prefix.
inline std::vector<FactorNode> retrieve(const EmotionFactorTree& tree, const Vec& query,
                                        const EmotionLabel& target, std::size_t k,
                                        std::size_t per_kind_cap) {
  if (!target.is_in_domain())
    throw SchemaViolation("target_emotion", "retrieve requires an in-domain target");
  if (k < 1) throw SchemaViolation("k", "k must be >= 1");
  if (per_kind_cap < 1) throw SchemaViolation("per_kind_cap", "cap must be >= 1");

  std::vector<const FactorNode*> candidates = tree.nodes_for(target);
  if (candidates.empty())
    throw EmptyKnowledgeBase("no factor nodes for emotion: " + target.value());

  if (query.size() != tree.dimension)
    throw DimensionMismatch("query dimension " + std::to_string(query.size()) +
                            " vs tree dimension " + std::to_string(tree.dimension));

  std::vector<std::pair<double, const FactorNode*>> ranked;
  ranked.reserve(candidates.size());
  for (const FactorNode* n : candidates)
    ranked.emplace_back(l2_distance(n->embedding, query), n);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second->id < b.second->id;
  });

  std::vector<FactorNode> out;
  std::map<ElementKind, std::size_t> kind_counts;
  for (const auto& [dist, node] : ranked) {
    if (out.size() == k) break;
    if (kind_counts[node->kind] >= per_kind_cap) continue;  // passed over, later kinds fill in
    ++kind_counts[node->kind];
    out.push_back(*node);
  }
  return out;
}

namespace detail {

inline Json node_to_json(const FactorNode& n) {
  return Json{{"id", n.id},
              {"kind", to_string(n.kind)},
              {"description", n.description},
              {"embedding", n.embedding},
              {"provenance", Json{{"cluster_id", n.cluster_id},
                                  {"cluster_size", n.cluster_size}}}};
}

inline FactorNode node_from_json(const Json& j, const EmotionLabel& emotion,
                                 const std::string& path) {
  FactorNode n;
  n.id = require_string(j, "id", path);
  n.emotion = emotion;
  n.kind = element_kind_from_string(require_string(j, "kind", path), path + ".kind");
  n.description = require_string(j, "description", path);
  const Json& emb = require_array(j, "embedding", path);
  for (const auto& x : emb) {
    if (!x.is_number()) throw SchemaViolation(path + ".embedding", "expected numbers");
    n.embedding.push_back(x.get<double>());
  }
  const Json& prov = require_object(j, "provenance", path);
  n.cluster_id = static_cast<std::uint32_t>(require_int(prov, "cluster_id", path + ".provenance"));
  n.cluster_size =
      static_cast<std::uint32_t>(require_int(prov, "cluster_size", path + ".provenance"));
  return n;
}

}  // namespace detail

/// Writes the tree into `dir`: one `<emotion>.json` per emotion with nodes,
/// plus `build.json` carrying dimension and build parameters so empty trees
/// round-trip too.
inline void save_tree(const EmotionFactorTree& tree, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create directory: " + dir.string());

  auto write = [](const std::filesystem::path& p, const Json& j) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot write: " + p.string());
    out << j.dump(2) << "\n";
    if (!out) throw IoFailure("write failed: " + p.string());
  };

  write(dir / "build.json", Json{{"dimension", tree.dimension},
                                 {"build_params", tree.build_params.to_json()}});

  for (std::string_view emotion_name : kCanonicalEmotions) {
    EmotionLabel emotion = EmotionLabel::in_domain(emotion_name);
    Json nodes = Json::array();
    std::vector<const FactorNode*> group = tree.nodes_for(emotion);
    std::sort(group.begin(), group.end(),
              [](const FactorNode* a, const FactorNode* b) { return a->id < b->id; });
    for (const FactorNode* n : group) nodes.push_back(detail::node_to_json(*n));
    if (nodes.empty()) continue;
    write(dir / (emotion.value() + ".json"),
          Json{{"emotion", emotion.value()},
               {"dimension", tree.dimension},
               {"build_params", tree.build_params.to_json()},
               {"nodes", nodes}});
  }
}

inline EmotionFactorTree load_tree(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw IoFailure("knowledge directory not found: " + dir.string());

  EmotionFactorTree tree;
  Json build = load_json_file((dir / "build.json").string());
  tree.dimension = static_cast<std::size_t>(require_int(build, "dimension"));
  tree.build_params = ClusterParams::from_json(require_object(build, "build_params"));

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json" && entry.path().filename() != "build.json")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  for (const std::filesystem::path& file : files) {
    Json j = load_json_file(file.string());
    EmotionLabel emotion = EmotionLabel::in_domain(require_string(j, "emotion"));
    auto dim = static_cast<std::size_t>(require_int(j, "dimension"));
    if (dim != tree.dimension)
      throw SchemaViolation("dimension", "inconsistent dimension in " + file.string());
    ClusterParams params = ClusterParams::from_json(require_object(j, "build_params"));
    if (!(params == tree.build_params))
      throw SchemaViolation("build_params", "inconsistent build_params in " + file.string());
    const Json& nodes = require_array(j, "nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      tree.nodes.push_back(detail::node_from_json(
          nodes[i], emotion, "nodes[" + std::to_string(i) + "]"));
    }
  }
  tree.validate();
  return tree;
}

}  // namespace emoflow::efk

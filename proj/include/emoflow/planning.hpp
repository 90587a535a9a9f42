#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "emoflow/backend.hpp"
#include "emoflow/efk.hpp"
#include "emoflow/emotion.hpp"
#include "emoflow/errors.hpp"
#include "emoflow/image.hpp"
#include "emoflow/json_util.hpp"
#include "emoflow/plan_types.hpp"
#include "emoflow/vec.hpp"

namespace emoflow::planning {

/// What the analysis pass learned about the source image.
struct SemanticCues {
  std::string scene_summary;
  std::vector<backends::Entity> entities;
  EmotionLabel source_emotion;
  double source_confidence = 0.0;
  Vec cue_embedding;

  Json to_json() const {
    Json entities_json = Json::array();
    for (const backends::Entity& e : entities)
      entities_json.push_back(Json{{"name", e.name}, {"salience", e.salience}});
    return Json{{"scene_summary", scene_summary},
                {"entities", entities_json},
                {"source_emotion", source_emotion.value()},
                {"source_confidence", source_confidence},
                {"cue_embedding", cue_embedding}};
  }

  static SemanticCues from_json(const Json& j, const std::string& path = "cues") {
    SemanticCues c;
    c.scene_summary = require_string(j, "scene_summary", path);
    for (const Json& e : require_array(j, "entities", path))
      c.entities.push_back({require_string(e, "name", path + ".entities"),
                            require_number(e, "salience", path + ".entities")});
    c.source_emotion = EmotionLabel::parse(require_string(j, "source_emotion", path));
    c.source_confidence = require_number(j, "source_confidence", path);
    for (const Json& x : require_array(j, "cue_embedding", path))
      c.cue_embedding.push_back(x.get<double>());
    return c;
  }
};

/// Extracts semantic cues and the source emotion from the image, then embeds
/// the scene summary as the retrieval query vector.
inline SemanticCues analyze(const ImageArtifact& image, const backends::Backends& b) {
  if (!std::filesystem::is_regular_file(image.uri))
    throw IoFailure("source image not readable: " + image.uri);

  backends::AnalyzeResult r = b.analyze(image);
  SemanticCues cues;
  cues.scene_summary = std::move(r.scene_summary);
  cues.entities = std::move(r.entities);
  cues.source_emotion = r.source_emotion;
  cues.source_confidence = r.source_confidence;
  cues.cue_embedding = b.embed(cues.scene_summary);
  return cues;
}

namespace detail {

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline bool mentions_entity(const std::string& description,
                            const std::vector<backends::Entity>& entities) {
  std::string d = lowercase(description);
  for (const backends::Entity& e : entities)
    if (!e.name.empty() && d.find(lowercase(e.name)) != std::string::npos) return true;
  return false;
}

/// Highest-salience entity name, first-listed on ties; empty when no entities.
inline std::optional<std::string> primary_entity(const std::vector<backends::Entity>& entities) {
  const backends::Entity* best = nullptr;
  for (const backends::Entity& e : entities)
    if (best == nullptr || e.salience > best->salience) best = &e;
  if (best == nullptr) return std::nullopt;
  return best->name;
}

inline std::optional<std::string> region_hint_for(EditingMethod method,
                                                  const std::vector<backends::Entity>& entities) {
  if (method == EditingMethod::replace_object || method == EditingMethod::change_attribute)
    return primary_entity(entities);
  return std::nullopt;
}

}  // namespace detail

/// Assembles K pairwise-distinct plans.
///
/// Pool elements are ordered by retrieval rank with a one-position boost for
/// elements that mention an analyzed entity, then expanded into a
/// (element, method) sequence round-robin over elements so consecutive draws
/// favor element variety. Plans consume the sequence through a shared cursor,
/// which makes their pair multisets disjoint, hence pairwise distinct. When
/// the pool runs out, the proposer backend supplies free-text elements;
/// suggestions that would duplicate an already-used pair are discarded, and
/// after 3·K proposer calls the attempt budget is exhausted. Out-of-domain
/// targets (and an empty knowledge base) skip the pool entirely and source
/// every element from the proposer.
inline PlanSet generate_plans(const SemanticCues& cues, const EmotionLabel& target,
                              const std::vector<efk::FactorNode>& pool,
                              const backends::Backends& b, std::size_t plan_count,
                              std::size_t max_instructions) {
  if (plan_count < 1) throw SchemaViolation("K", "plan count must be >= 1");
  if (max_instructions < 1) throw SchemaViolation("N_max", "instruction bound must be >= 1");
  for (const efk::FactorNode& n : pool)
    if (target.is_in_domain() && !(n.emotion == target))
      throw SchemaViolation("pool", "pool node " + n.id + " has emotion " +
                                        n.emotion.value() + ", target is " + target.value());

  // Entity-overlap boost: one rank up, stable within equal ranks.
  std::vector<std::pair<long, const efk::FactorNode*>> prioritized;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    long rank = static_cast<long>(i);
    if (detail::mentions_entity(pool[i].description, cues.entities)) rank -= 1;
    prioritized.emplace_back(rank, &pool[i]);
  }
  std::stable_sort(prioritized.begin(), prioritized.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  // Round-robin expansion over elements first, then deeper methods.
  std::vector<std::pair<PlanElement, EditingMethod>> sequence;
  std::size_t max_methods = 0;
  for (const auto& [rank, node] : prioritized)
    max_methods = std::max(max_methods, compatible_methods(node->kind).size());
  for (std::size_t round = 0; round < max_methods; ++round) {
    for (const auto& [rank, node] : prioritized) {
      auto methods = compatible_methods(node->kind);
      if (round >= methods.size()) continue;
      auto it = methods.begin();
      std::advance(it, static_cast<long>(round));
      sequence.emplace_back(PlanElement::from_node(*node), *it);
    }
  }

  const std::size_t per_plan =
      std::clamp<std::size_t>((sequence.size() + plan_count - 1) / plan_count, 1,
                              max_instructions);

  std::set<std::pair<std::string, std::string>> used_pairs;
  std::size_t cursor = 0;
  std::uint64_t proposer_calls = 0;
  const std::uint64_t proposer_budget = 3 * static_cast<std::uint64_t>(plan_count);
  std::vector<std::pair<PlanElement, EditingMethod>> overflow;  // unused proposer pairs

  auto next_pair = [&]() -> std::pair<PlanElement, EditingMethod> {
    if (cursor < sequence.size()) return sequence[cursor++];
    while (true) {
      if (!overflow.empty()) {
        auto pair = overflow.front();
        overflow.erase(overflow.begin());
        if (used_pairs.count({pair.first.element_id, to_string(pair.second)}) == 0)
          return pair;
        continue;
      }
      if (proposer_calls >= proposer_budget)
        throw PlanningFailed("cannot assemble " + std::to_string(plan_count) +
                             " distinct plans within " + std::to_string(proposer_budget) +
                             " proposer calls");
      ++proposer_calls;
      auto suggestions =
          b.propose_elements(target, cues.to_json(), max_instructions, proposer_calls);
      for (const backends::ProposedPair& s : suggestions)
        overflow.emplace_back(PlanElement::free_text(s.element, s.kind), s.method);
      if (overflow.empty())
        throw PlanningFailed("proposer returned no suggestions for " + target.value());
    }
  };

  PlanSet set;
  set.target_emotion = target;
  for (std::size_t k = 1; k <= plan_count; ++k) {
    EditPlan plan;
    plan.plan_id = k;
    std::vector<std::string> kinds;
    for (std::size_t i = 1; i <= per_plan; ++i) {
      auto [element, method] = next_pair();
      used_pairs.insert({element.element_id, to_string(method)});
      auto hint = detail::region_hint_for(method, cues.entities);
      plan.instructions.push_back(Instruction::make(i, element, method, hint));
      kinds.push_back(efk::to_string(plan.instructions.back().element.kind));
    }
    std::string kind_list;
    for (std::size_t i = 0; i < kinds.size(); ++i)
      kind_list += (i ? ", " : "") + kinds[i];
    plan.rationale = "path " + std::to_string(k) + " of " + std::to_string(plan_count) +
                     " toward " + target.value() + " via " + kind_list;
    plan.validate();
    set.plans.push_back(std::move(plan));
  }
  set.validate();
  return set;
}

}  // namespace emoflow::planning

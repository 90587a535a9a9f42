#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "emoflow/efk.hpp"
#include "emoflow/emotion.hpp"
#include "emoflow/errors.hpp"
#include "emoflow/json_util.hpp"

namespace emoflow::planning {

using efk::ElementKind;

enum class EditingMethod {
  replace_object,
  add_object,
  remove_object,
  change_expression,
  change_filter,
  change_background,
  change_attribute,
};

inline constexpr std::array<EditingMethod, 7> kAllEditingMethods = {
    EditingMethod::replace_object,  EditingMethod::add_object,
    EditingMethod::remove_object,   EditingMethod::change_expression,
    EditingMethod::change_filter,   EditingMethod::change_background,
    EditingMethod::change_attribute};

inline std::string to_string(EditingMethod m) {
  switch (m) {
    case EditingMethod::replace_object: return "replace_object";
    case EditingMethod::add_object: return "add_object";
    case EditingMethod::remove_object: return "remove_object";
    case EditingMethod::change_expression: return "change_expression";
    case EditingMethod::change_filter: return "change_filter";
    case EditingMethod::change_background: return "change_background";
    case EditingMethod::change_attribute: return "change_attribute";
  }
  throw SchemaViolation("method", "unknown editing method");
}

inline EditingMethod editing_method_from_string(const std::string& s,
                                                const std::string& path = "method") {
  for (EditingMethod m : kAllEditingMethods)
    if (to_string(m) == s) return m;
  throw SchemaViolation(path, "unknown editing method: " + s);
}

/// Fixed element-kind → editing-method compatibility matrix.
inline std::set<EditingMethod> compatible_methods(ElementKind kind) {
  switch (kind) {
    case ElementKind::object:
      return {EditingMethod::replace_object, EditingMethod::add_object,
              EditingMethod::remove_object, EditingMethod::change_attribute};
    case ElementKind::background_scene:
      return {EditingMethod::change_background};
    case ElementKind::facial_expression:
      return {EditingMethod::change_expression};
    case ElementKind::color_tone:
      return {EditingMethod::change_filter};
    case ElementKind::attribute:
      return {EditingMethod::change_attribute};
    case ElementKind::action:
      return {EditingMethod::add_object, EditingMethod::change_attribute};
  }
  throw SchemaViolation("kind", "unknown element kind");
}

inline bool is_compatible(ElementKind kind, EditingMethod method) {
  auto methods = compatible_methods(kind);
  return methods.count(method) > 0;
}

/// The element leg of an instruction: either a knowledge-base factor node or
/// a free-text element proposed by the planner backend.
struct PlanElement {
  std::string element_id;  // node id, or "free:<description>" for free text
  ElementKind kind = ElementKind::object;
  std::string description;
  std::optional<std::string> node_id;  // set iff sourced from the knowledge base

  static PlanElement from_node(const efk::FactorNode& node) {
    return PlanElement{node.id, node.kind, node.description, node.id};
  }

  static PlanElement free_text(const std::string& description, ElementKind kind) {
    return PlanElement{"free:" + description, kind, description, std::nullopt};
  }

  bool operator==(const PlanElement& o) const {
    return element_id == o.element_id && kind == o.kind &&
           description == o.description && node_id == o.node_id;
  }

  Json to_json() const {
    Json j{{"id", element_id}, {"kind", efk::to_string(kind)}, {"description", description}};
    j["node_id"] = node_id ? Json(*node_id) : Json(nullptr);
    return j;
  }

  static PlanElement from_json(const Json& j, const std::string& path = "element") {
    PlanElement e;
    e.element_id = require_string(j, "id", path);
    e.kind = efk::element_kind_from_string(require_string(j, "kind", path), path + ".kind");
    e.description = require_string(j, "description", path);
    const Json& nid = require_field(j, "node_id", path);
    if (!nid.is_null()) e.node_id = nid.get<std::string>();
    return e;
  }
};

/// Deterministic natural-language directive for an (element, method) pair.
inline std::string format_instruction(const PlanElement& element, EditingMethod method,
                                      const std::optional<std::string>& region_hint = {}) {
  if (!is_compatible(element.kind, method))
    throw IncompatiblePair("method " + to_string(method) + " incompatible with kind " +
                           efk::to_string(element.kind));
  const std::string& desc = element.description;
  const std::string target = region_hint.value_or("object");
  switch (method) {
    case EditingMethod::change_background: return "replace the background with " + desc;
    case EditingMethod::add_object: return "add " + desc + " to the scene";
    case EditingMethod::remove_object: return "remove " + desc;
    case EditingMethod::replace_object: return "replace " + target + " with " + desc;
    case EditingMethod::change_expression: return "change the facial expression to " + desc;
    case EditingMethod::change_filter: return "apply a " + desc + " color tone";
    case EditingMethod::change_attribute: return "change " + target + " to be " + desc;
  }
  throw SchemaViolation("method", "unknown editing method");
}

struct Instruction {
  std::size_t index = 0;  // 1-based position in the plan
  PlanElement element;
  EditingMethod method = EditingMethod::add_object;
  std::string text;
  std::optional<std::string> region_hint;

  static Instruction make(std::size_t index, PlanElement element, EditingMethod method,
                          std::optional<std::string> region_hint = {}) {
    Instruction ins;
    ins.index = index;
    ins.method = method;
    ins.region_hint = std::move(region_hint);
    ins.text = format_instruction(element, method, ins.region_hint);
    ins.element = std::move(element);
    return ins;
  }

  bool operator==(const Instruction& o) const {
    return index == o.index && element == o.element && method == o.method &&
           text == o.text && region_hint == o.region_hint;
  }

  Json to_json() const {
    Json j{{"index", index},
           {"element", element.to_json()},
           {"method", to_string(method)},
           {"text", text}};
    j["region_hint"] = region_hint ? Json(*region_hint) : Json(nullptr);
    return j;
  }

  static Instruction from_json(const Json& j, const std::string& path = "instruction") {
    Instruction ins;
    ins.index = static_cast<std::size_t>(require_int(j, "index", path));
    ins.element = PlanElement::from_json(require_object(j, "element", path), path + ".element");
    ins.method = editing_method_from_string(require_string(j, "method", path), path + ".method");
    ins.text = require_string(j, "text", path);
    if (ins.text.empty()) throw SchemaViolation(path + ".text", "empty instruction text");
    const Json& rh = require_field(j, "region_hint", path);
    if (!rh.is_null()) ins.region_hint = rh.get<std::string>();
    if (!is_compatible(ins.element.kind, ins.method))
      throw SchemaViolation(path + ".method", "method incompatible with element kind");
    return ins;
  }
};

/// One ordered editing strategy P = (Ins_1, ..., Ins_N).
struct EditPlan {
  std::size_t plan_id = 0;  // 1-based branch index
  std::vector<Instruction> instructions;
  std::string rationale;

  /// Sorted (element-id, method) multiset; the plan-distinctness key.
  std::vector<std::pair<std::string, std::string>> pair_multiset() const {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const Instruction& ins : instructions)
      pairs.emplace_back(ins.element.element_id, to_string(ins.method));
    std::sort(pairs.begin(), pairs.end());
    return pairs;
  }

  void validate() const {
    if (instructions.empty())
      throw SchemaViolation("instructions", "plan must hold at least one instruction");
    for (std::size_t i = 0; i < instructions.size(); ++i) {
      if (instructions[i].index != i + 1)
        throw SchemaViolation("instructions[" + std::to_string(i) + "].index",
                              "indices must be contiguous from 1");
      if (instructions[i].text.empty())
        throw SchemaViolation("instructions[" + std::to_string(i) + "].text", "empty text");
    }
    auto pairs = pair_multiset();
    if (std::adjacent_find(pairs.begin(), pairs.end()) != pairs.end())
      throw SchemaViolation("instructions", "duplicate (element, method) pair in plan");
  }

  bool operator==(const EditPlan& o) const {
    return plan_id == o.plan_id && instructions == o.instructions && rationale == o.rationale;
  }

  Json to_json() const {
    Json ins = Json::array();
    for (const Instruction& i : instructions) ins.push_back(i.to_json());
    return Json{{"plan_id", plan_id}, {"instructions", ins}, {"rationale", rationale}};
  }

  static EditPlan from_json(const Json& j, const std::string& path = "plan") {
    EditPlan p;
    p.plan_id = static_cast<std::size_t>(require_int(j, "plan_id", path));
    const Json& ins = require_array(j, "instructions", path);
    for (std::size_t i = 0; i < ins.size(); ++i)
      p.instructions.push_back(Instruction::from_json(
          ins[i], path + ".instructions[" + std::to_string(i) + "]"));
    p.rationale = require_string(j, "rationale", path);
    p.validate();
    return p;
  }
};

/// K pairwise-distinct plans for one target emotion.
struct PlanSet {
  std::vector<EditPlan> plans;
  EmotionLabel target_emotion;

  void validate() const {
    for (const EditPlan& p : plans) p.validate();
    for (std::size_t a = 0; a < plans.size(); ++a)
      for (std::size_t b = a + 1; b < plans.size(); ++b)
        if (plans[a].pair_multiset() == plans[b].pair_multiset())
          throw SchemaViolation("plans", "plans " + std::to_string(a + 1) + " and " +
                                             std::to_string(b + 1) + " are not distinct");
  }
};

}  // namespace emoflow::planning

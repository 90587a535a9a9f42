#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <httplib.h>

#include "emoflow/efk.hpp"
#include "emoflow/emotion.hpp"
#include "emoflow/errors.hpp"
#include "emoflow/hash.hpp"
#include "emoflow/image.hpp"
#include "emoflow/json_util.hpp"
#include "emoflow/plan_types.hpp"
#include "emoflow/vec.hpp"

namespace emoflow::backends {

inline constexpr const char* kProtoVersion = "emoflow-proto/1";

inline constexpr std::array<std::string_view, 10> kCoreRoutes = {
    "/analyze", "/plan-propose", "/edit",     "/detect",   "/segment",
    "/validate", "/critique",    "/embed",    "/classify", "/describe"};

/// Adapter extension route, not part of the core contract.
inline constexpr std::string_view kRoutePerceptualDistance = "/perceptual-distance";

/// Connection settings for one backend service (or the in-process mock when
/// base_url is empty).
struct BackendProfile {
  std::string name = "mock";
  std::string base_url;  // empty => in-process deterministic mock
  int default_timeout_ms = 5000;
  std::map<std::string, int> route_timeouts_ms;
  int retry_count = 2;
  std::string idempotency_header = "X-Idempotency-Key";
  std::size_t dimension = 8;  // embedding dimension D served by this profile
  std::uint64_t mock_seed = 0;

  int timeout_for(const std::string& route) const {
    auto it = route_timeouts_ms.find(route);
    return it != route_timeouts_ms.end() ? it->second : default_timeout_ms;
  }

  void validate() const {
    if (default_timeout_ms <= 0)
      throw SchemaViolation("profile.default_timeout_ms", "timeouts must be > 0");
    for (const auto& [route, t] : route_timeouts_ms)
      if (t <= 0) throw SchemaViolation("profile.route_timeouts_ms", "timeouts must be > 0");
    if (retry_count < 0)
      throw SchemaViolation("profile.retry_count", "retry count must be >= 0");
    if (dimension == 0)
      throw SchemaViolation("profile.dimension", "dimension must be >= 1");
  }

  Json to_json() const {
    Json routes = Json::object();
    for (const auto& [route, t] : route_timeouts_ms) routes[route] = t;
    return Json{{"base_url", base_url},
                {"default_timeout_ms", default_timeout_ms},
                {"route_timeouts_ms", routes},
                {"retry_count", retry_count},
                {"idempotency_header", idempotency_header},
                {"dimension", dimension},
                {"mock_seed", mock_seed}};
  }

  static BackendProfile from_json(const std::string& name, const Json& j) {
    BackendProfile p;
    p.name = name;
    if (j.contains("base_url")) p.base_url = j.at("base_url").get<std::string>();
    if (j.contains("default_timeout_ms")) p.default_timeout_ms = j.at("default_timeout_ms").get<int>();
    if (j.contains("route_timeouts_ms"))
      for (const auto& [route, t] : j.at("route_timeouts_ms").items())
        p.route_timeouts_ms[route] = t.get<int>();
    if (j.contains("retry_count")) p.retry_count = j.at("retry_count").get<int>();
    if (j.contains("idempotency_header"))
      p.idempotency_header = j.at("idempotency_header").get<std::string>();
    if (j.contains("dimension")) p.dimension = j.at("dimension").get<std::size_t>();
    if (j.contains("mock_seed")) p.mock_seed = j.at("mock_seed").get<std::uint64_t>();
    p.validate();
    return p;
  }

  /// EMOFLOW_BACKEND_URL overrides the profile base URL when set.
  void apply_env_override() {
    if (const char* url = std::getenv("EMOFLOW_BACKEND_URL")) {
      if (*url != '\0') base_url = url;
    }
  }
};

/// Transport-level interface: one JSON request in, one JSON response out.
/// Implementations own the retry policy; callers see only the final outcome.
class BackendClient {
 public:
  virtual ~BackendClient() = default;
  virtual Json call(const std::string& route, const Json& request) = 0;
};

namespace detail {

struct Attempt {
  bool transport_ok = false;
  int status = 0;
  Json body;
};

inline std::string envelope_message(const Json& body) {
  if (body.is_object() && body.contains("error") && body.at("error").is_object()) {
    const Json& e = body.at("error");
    std::string code = e.contains("code") ? e.at("code").get<std::string>() : "?";
    std::string msg = e.contains("message") ? e.at("message").get<std::string>() : "";
    return code + ": " + msg;
  }
  return "no error envelope";
}

/// Shared retry loop: transport failures and 5xx retry up to retry_count
/// extra attempts; 4xx surfaces immediately as a malformed-request error.
template <typename AttemptFn>
Json call_with_retries(const std::string& route, int retry_count, AttemptFn&& attempt) {
  std::string last_error = "no attempt made";
  for (int i = 0; i <= retry_count; ++i) {
    Attempt a = attempt();
    if (!a.transport_ok) {
      last_error = "transport failure";
      continue;
    }
    if (a.status >= 500) {
      last_error = "status " + std::to_string(a.status) + " (" + envelope_message(a.body) + ")";
      continue;
    }
    if (a.status >= 400)
      throw BackendMalformedResponse(route + ": status " + std::to_string(a.status) + " (" +
                                     envelope_message(a.body) + ")");
    return a.body;
  }
  throw BackendUnavailable(route + ": " + last_error + " after " +
                           std::to_string(retry_count + 1) + " attempts");
}

}  // namespace detail

/// JSON-over-HTTP client. All routes are idempotent (responses are pure
/// functions of request content), so every request carries an idempotency
/// key derived from its canonical serialization.
class HttpBackendClient : public BackendClient {
 public:
  explicit HttpBackendClient(BackendProfile profile) : profile_(std::move(profile)) {
    profile_.validate();
    if (profile_.base_url.empty())
      throw SchemaViolation("profile.base_url", "http client requires a base URL");
  }

  const BackendProfile& profile() const noexcept { return profile_; }

  Json call(const std::string& route, const Json& request) override {
    const std::string body = canonical_dump(request);
    const std::string key = sha256_hex(body);
    const int timeout_ms = profile_.timeout_for(route);

    auto attempt = [&]() {
      detail::Attempt a;
      httplib::Client cli(profile_.base_url);
      cli.set_connection_timeout(0, timeout_ms * 1000);
      cli.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
      cli.set_write_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
      httplib::Headers headers{{profile_.idempotency_header, key}};
      auto res = cli.Post(route, headers, body, "application/json");
      if (!res) return a;  // connect/timeout failure
      a.transport_ok = true;
      a.status = res->status;
      if (!res->body.empty()) {
        try {
          a.body = Json::parse(res->body);
        } catch (const nlohmann::json::parse_error&) {
          if (a.status < 400)
            throw BackendMalformedResponse(route + ": response is not valid JSON");
        }
      }
      return a;
    };
    return detail::call_with_retries(route, profile_.retry_count, attempt);
  }

 private:
  BackendProfile profile_;
};

// ---------------------------------------------------------------------------
// Typed facade over the wire protocol. Each method builds the request for its
// route, injects the protocol version, and validates the response schema;
// violations surface as BackendMalformedResponse.
// ---------------------------------------------------------------------------

struct Entity {
  std::string name;
  double salience = 0.0;
};

struct AnalyzeResult {
  std::string scene_summary;
  std::vector<Entity> entities;
  EmotionLabel source_emotion;
  double source_confidence = 0.0;
};

struct ProposedPair {
  std::string element;
  efk::ElementKind kind = efk::ElementKind::object;
  planning::EditingMethod method = planning::EditingMethod::add_object;
};

struct Box {
  int x = 0, y = 0, w = 0, h = 0;
  double score = 0.0;

  Json to_json() const {
    return Json{{"x", x}, {"y", y}, {"w", w}, {"h", h}, {"score", score}};
  }
};

struct ValidationVerdict {
  bool ok = false;
  std::string reason;
};

struct CritiqueAssessment {
  bool has_distribution = false;      // true on the in-domain path
  EmotionDistribution distribution;   // sentinel when !has_distribution
  bool verdict = false;               // backend boolean (out-of-domain path)
  std::vector<std::string> rationale;
};

struct DiagnoseReply {
  bool effective = true;
  bool executed = true;
  std::string error_note;
  std::optional<ProposedPair> revised;
};

namespace detail {

template <typename F>
auto validated(const std::string& route, F&& parse) {
  try {
    return parse();
  } catch (const SchemaViolation& e) {
    throw BackendMalformedResponse(route + ": " + e.what());
  } catch (const InvalidDistribution& e) {
    throw BackendMalformedResponse(route + ": " + e.what());
  }
}

inline EmotionDistribution distribution_from_json(const Json& j, const std::string& path) {
  std::array<double, kEmotionCount> probs{};
  for (std::size_t i = 0; i < kEmotionCount; ++i) {
    std::string key(kCanonicalEmotions[i]);
    probs[i] = require_number(j, key, path);
  }
  return EmotionDistribution::from_probs(probs);
}

inline Json distribution_to_json(const EmotionDistribution& d) {
  Json j = Json::object();
  for (std::size_t i = 0; i < kEmotionCount; ++i)
    j[std::string(kCanonicalEmotions[i])] = d.at(i);
  return j;
}

inline ProposedPair proposed_pair_from_json(const Json& j, const std::string& path) {
  ProposedPair p;
  p.element = require_string(j, "element", path);
  if (p.element.empty()) throw SchemaViolation(path + ".element", "empty element text");
  p.kind = efk::element_kind_from_string(require_string(j, "kind", path), path + ".kind");
  p.method = planning::editing_method_from_string(require_string(j, "method", path),
                                                  path + ".method");
  if (!planning::is_compatible(p.kind, p.method))
    throw SchemaViolation(path + ".method", "suggested method incompatible with kind");
  return p;
}

}  // namespace detail

class Backends {
 public:
  Backends(std::shared_ptr<BackendClient> client, std::size_t dimension)
      : client_(std::move(client)), dimension_(dimension) {}

  const std::shared_ptr<BackendClient>& client() const noexcept { return client_; }
  std::size_t dimension() const noexcept { return dimension_; }

  AnalyzeResult analyze(const ImageArtifact& image) const {
    Json resp = call("/analyze", Json{{"image", image.to_json()}});
    return detail::validated("/analyze", [&] {
      AnalyzeResult r;
      r.scene_summary = require_string(resp, "scene_summary");
      if (r.scene_summary.empty())
        throw SchemaViolation("scene_summary", "empty scene summary");
      for (const Json& e : require_array(resp, "entities")) {
        Entity ent;
        ent.name = require_string(e, "name", "entities");
        ent.salience = require_number(e, "salience", "entities");
        if (ent.salience < 0.0 || ent.salience > 1.0)
          throw SchemaViolation("entities.salience", "salience out of [0,1]");
        r.entities.push_back(std::move(ent));
      }
      r.source_emotion = EmotionLabel::parse(require_string(resp, "source_emotion"));
      r.source_confidence = require_number(resp, "source_confidence");
      return r;
    });
  }

  Vec embed(const std::string& text) const {
    Json resp = call("/embed", Json{{"text", text}});
    return detail::validated("/embed", [&] {
      Vec v;
      for (const Json& x : require_array(resp, "embedding")) {
        if (!x.is_number()) throw SchemaViolation("embedding", "expected numbers");
        v.push_back(x.get<double>());
      }
      if (v.size() != dimension_)
        throw SchemaViolation("embedding", "dimension " + std::to_string(v.size()) +
                                               ", profile expects " +
                                               std::to_string(dimension_));
      if (!all_finite(v)) throw SchemaViolation("embedding", "non-finite component");
      return v;
    });
  }

  std::vector<ProposedPair> propose_elements(const EmotionLabel& target, const Json& cues,
                                             std::size_t count, std::uint64_t attempt) const {
    Json resp = call("/plan-propose", Json{{"mode", "propose"},
                                           {"target_emotion", target.value()},
                                           {"cues", cues},
                                           {"count", count},
                                           {"attempt", attempt}});
    return detail::validated("/plan-propose", [&] {
      std::vector<ProposedPair> out;
      const Json& suggestions = require_array(resp, "suggestions");
      for (std::size_t i = 0; i < suggestions.size(); ++i)
        out.push_back(detail::proposed_pair_from_json(
            suggestions[i], "suggestions[" + std::to_string(i) + "]"));
      return out;
    });
  }

  std::string revise_instruction_text(const Json& instruction, const std::string& reason,
                                      std::uint64_t attempt) const {
    Json resp = call("/plan-propose", Json{{"mode", "revise"},
                                           {"instruction", instruction},
                                           {"reason", reason},
                                           {"attempt", attempt}});
    return detail::validated("/plan-propose", [&] {
      std::string text = require_string(resp, "text");
      if (text.empty()) throw SchemaViolation("text", "empty revised text");
      return text;
    });
  }

  ImageArtifact edit(const std::string& tool, const ImageArtifact& image,
                     const std::string& directive, const std::optional<RleMask>& mask,
                     const std::optional<ImageArtifact>& reference) const {
    Json req{{"tool", tool}, {"image", image.to_json()}, {"directive", directive}};
    req["mask"] = mask ? mask->to_json() : Json(nullptr);
    req["reference"] = reference ? reference->to_json() : Json(nullptr);
    Json resp = call("/edit", req);
    return detail::validated("/edit", [&] {
      ImageArtifact out = ImageArtifact::from_json(require_object(resp, "image"));
      if (out.width != image.width || out.height != image.height)
        throw SchemaViolation("image", "edit did not preserve resolution");
      return out;
    });
  }

  std::vector<Box> detect(const ImageArtifact& image, const std::string& phrase) const {
    Json resp = call("/detect", Json{{"image", image.to_json()}, {"phrase", phrase}});
    return detail::validated("/detect", [&] {
      std::vector<Box> boxes;
      for (const Json& b : require_array(resp, "boxes")) {
        Box box;
        box.x = static_cast<int>(require_int(b, "x", "boxes"));
        box.y = static_cast<int>(require_int(b, "y", "boxes"));
        box.w = static_cast<int>(require_int(b, "w", "boxes"));
        box.h = static_cast<int>(require_int(b, "h", "boxes"));
        box.score = require_number(b, "score", "boxes");
        boxes.push_back(box);
      }
      return boxes;
    });
  }

  RleMask segment(const ImageArtifact& image, const Box& box) const {
    Json resp = call("/segment", Json{{"image", image.to_json()}, {"box", box.to_json()}});
    return detail::validated("/segment", [&] {
      RleMask mask = RleMask::from_json(require_object(resp, "mask"));
      mask.validate(image.width, image.height);
      return mask;
    });
  }

  ValidationVerdict validate_edit(const ImageArtifact& before, const ImageArtifact& after,
                                  const std::string& directive, const std::string& tool) const {
    Json resp = call("/validate", Json{{"before", before.to_json()},
                                       {"after", after.to_json()},
                                       {"directive", directive},
                                       {"tool", tool}});
    return detail::validated("/validate", [&] {
      ValidationVerdict v;
      std::string verdict = require_string(resp, "verdict");
      if (verdict == "ok") {
        v.ok = true;
      } else if (verdict == "failed") {
        v.ok = false;
        v.reason = require_string(resp, "reason");
      } else {
        throw SchemaViolation("verdict", "expected ok|failed, got " + verdict);
      }
      return v;
    });
  }

  CritiqueAssessment critique_assess(const ImageArtifact& image,
                                     const EmotionLabel& target) const {
    Json resp = call("/critique", Json{{"mode", "assess"},
                                       {"image", image.to_json()},
                                       {"target", target.value()}});
    return detail::validated("/critique", [&] {
      CritiqueAssessment a;
      for (const Json& r : require_array(resp, "rationale")) {
        if (!r.is_string()) throw SchemaViolation("rationale", "expected strings");
        a.rationale.push_back(r.get<std::string>());
      }
      if (a.rationale.empty()) throw SchemaViolation("rationale", "empty rationale");
      if (target.is_in_domain()) {
        a.has_distribution = true;
        a.distribution =
            detail::distribution_from_json(require_object(resp, "distribution"), "distribution");
      } else {
        const Json& v = require_field(resp, "verdict");
        if (!v.is_boolean()) throw SchemaViolation("verdict", "expected boolean");
        a.verdict = v.get<bool>();
        a.distribution = EmotionDistribution::sentinel();
      }
      return a;
    });
  }

  DiagnoseReply critique_diagnose(const ImageArtifact& image, const EmotionLabel& target,
                                  const Json& instruction) const {
    Json resp = call("/critique", Json{{"mode", "diagnose"},
                                       {"image", image.to_json()},
                                       {"target", target.value()},
                                       {"instruction", instruction}});
    return detail::validated("/critique", [&] {
      DiagnoseReply d;
      const Json& eff = require_field(resp, "effective");
      if (!eff.is_boolean()) throw SchemaViolation("effective", "expected boolean");
      d.effective = eff.get<bool>();
      if (d.effective) {
        const Json& ex = require_field(resp, "executed");
        if (!ex.is_boolean()) throw SchemaViolation("executed", "expected boolean");
        d.executed = ex.get<bool>();
        if (!d.executed) d.error_note = require_string(resp, "error_note");
      } else {
        d.revised = detail::proposed_pair_from_json(require_object(resp, "revised"), "revised");
      }
      return d;
    });
  }

  std::optional<ProposedPair> critique_escalate(const ImageArtifact& image,
                                                const EmotionLabel& target,
                                                const Json& plan) const {
    Json resp = call("/critique", Json{{"mode", "escalate"},
                                       {"image", image.to_json()},
                                       {"target", target.value()},
                                       {"plan", plan}});
    return detail::validated("/critique", [&]() -> std::optional<ProposedPair> {
      const Json& ins = require_field(resp, "instruction");
      if (ins.is_null()) return std::nullopt;
      return detail::proposed_pair_from_json(ins, "instruction");
    });
  }

  EmotionDistribution classify(const ImageArtifact& image) const {
    Json resp = call("/classify", Json{{"image", image.to_json()}});
    return detail::validated("/classify", [&] {
      return detail::distribution_from_json(require_object(resp, "distribution"),
                                            "distribution");
    });
  }

  efk::ClusterDescription describe_cluster(const EmotionLabel& emotion,
                                           const std::vector<std::string>& member_ids) const {
    Json resp = call("/describe", Json{{"emotion", emotion.value()},
                                       {"members", member_ids}});
    return detail::validated("/describe", [&] {
      efk::ClusterDescription d;
      d.description = require_string(resp, "description");
      if (d.description.empty()) throw SchemaViolation("description", "empty description");
      d.kind = efk::element_kind_from_string(require_string(resp, "kind"), "kind");
      return d;
    });
  }

  double perceptual_distance(const ImageArtifact& a, const ImageArtifact& b) const {
    Json resp = call(std::string(kRoutePerceptualDistance),
                     Json{{"a", a.to_json()}, {"b", b.to_json()}});
    return detail::validated(std::string(kRoutePerceptualDistance), [&] {
      double d = require_number(resp, "distance");
      if (d < 0.0) throw SchemaViolation("distance", "negative distance");
      return d;
    });
  }

 private:
  Json call(const std::string& route, Json request) const {
    request["proto"] = kProtoVersion;
    return client_->call(route, request);
  }

  std::shared_ptr<BackendClient> client_;
  std::size_t dimension_;
};

}  // namespace emoflow::backends

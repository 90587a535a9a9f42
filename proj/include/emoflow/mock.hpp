#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>

#include "emoflow/backend.hpp"
#include "emoflow/emotion.hpp"
#include "emoflow/errors.hpp"
#include "emoflow/hash.hpp"
#include "emoflow/image.hpp"
#include "emoflow/json_util.hpp"
#include "emoflow/plan_types.hpp"

namespace emoflow::backends {

/// One scripted behavior: matched requests get the canned response (or the
/// injected error). Matchers are pure predicates on request content, so the
/// mock stays deterministic and ordering-independent under concurrency.
struct MockScriptEntry {
  std::string route;
  std::optional<std::string> request_hash;       // exact canonical-request sha256
  std::optional<std::string> request_substring;  // substring of the canonical dump
  std::optional<Json> response;
  int error_status = 0;  // used when response is absent, e.g. 500
  std::string error_code = "Injected";
  std::string error_message = "injected failure";

  bool matches(const std::string& req_route, const std::string& dump,
               const std::string& hash) const {
    if (route != req_route) return false;
    if (request_hash && *request_hash != hash) return false;
    if (request_substring && dump.find(*request_substring) == std::string::npos) return false;
    return true;
  }

  Json to_json() const {
    Json match = Json::object();
    if (request_hash) match["request_hash"] = *request_hash;
    if (request_substring) match["request_substring"] = *request_substring;
    Json j{{"route", route}, {"match", match}};
    if (response) {
      j["response"] = *response;
    } else {
      j["error"] = Json{{"status", error_status},
                        {"code", error_code},
                        {"message", error_message}};
    }
    return j;
  }

  static MockScriptEntry from_json(const Json& j, const std::string& path) {
    MockScriptEntry e;
    e.route = require_string(j, "route", path);
    if (j.contains("match") && j.at("match").is_object()) {
      const Json& m = j.at("match");
      if (m.contains("request_hash")) e.request_hash = m.at("request_hash").get<std::string>();
      if (m.contains("request_substring"))
        e.request_substring = m.at("request_substring").get<std::string>();
    }
    if (j.contains("response")) {
      e.response = j.at("response");
    } else if (j.contains("error")) {
      const Json& err = j.at("error");
      e.error_status = static_cast<int>(require_int(err, "status", path + ".error"));
      if (err.contains("code")) e.error_code = err.at("code").get<std::string>();
      if (err.contains("message")) e.error_message = err.at("message").get<std::string>();
    } else {
      throw SchemaViolation(path, "entry needs a response or an error");
    }
    return e;
  }
};

struct MockScript {
  std::uint64_t seed = 0;
  std::vector<MockScriptEntry> entries;

  Json to_json() const {
    Json es = Json::array();
    for (const MockScriptEntry& e : entries) es.push_back(e.to_json());
    return Json{{"seed", seed}, {"entries", es}};
  }

  static MockScript from_json(const Json& j) {
    MockScript s;
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("entries")) {
      const Json& es = j.at("entries");
      for (std::size_t i = 0; i < es.size(); ++i)
        s.entries.push_back(
            MockScriptEntry::from_json(es[i], "entries[" + std::to_string(i) + "]"));
    }
    return s;
  }
};

struct MockLogEntry {
  std::string route;
  Json request;
  int status = 0;
};

/// Deterministic backend engine behind every mock transport. Responses are
/// pure functions of (script, seed, request content): scripted entries win,
/// everything else falls through to seeded per-route default generators.
class MockEngine {
 public:
  MockEngine(MockScript script, std::filesystem::path store_root, std::size_t dimension = 8)
      : script_(std::move(script)), store_(std::move(store_root)), dimension_(dimension) {}

  const BlobStore& store() const noexcept { return store_; }
  std::size_t dimension() const noexcept { return dimension_; }

  std::pair<int, Json> handle(const std::string& route, const Json& request) {
    auto result = dispatch(route, request);
    {
      std::lock_guard<std::mutex> lock(log_mutex_);
      log_.push_back({route, request, result.first});
    }
    return result;
  }

  std::size_t request_count(const std::string& route) const {
    std::lock_guard<std::mutex> lock(log_mutex_);
    std::size_t n = 0;
    for (const MockLogEntry& e : log_)
      if (e.route == route) ++n;
    return n;
  }

  std::vector<MockLogEntry> log() const {
    std::lock_guard<std::mutex> lock(log_mutex_);
    return log_;
  }

  void clear_log() {
    std::lock_guard<std::mutex> lock(log_mutex_);
    log_.clear();
  }

 private:
  static std::pair<int, Json> error_response(int status, const std::string& code,
                                             const std::string& message) {
    return {status, Json{{"error", Json{{"code", code}, {"message", message}}}}};
  }

  std::pair<int, Json> dispatch(const std::string& route, const Json& request) const {
    if (!request.is_object() || !request.contains("proto") ||
        request.at("proto") != kProtoVersion)
      return error_response(400, "BadProto",
                            std::string("request must carry proto ") + kProtoVersion);

    const std::string dump = canonical_dump(request);
    const std::string hash = sha256_hex(dump);

    for (const MockScriptEntry& entry : script_.entries) {
      if (!entry.matches(route, dump, hash)) continue;
      if (entry.response) return {200, *entry.response};
      return error_response(entry.error_status, entry.error_code, entry.error_message);
    }

    try {
      return defaults(route, request, dump);
    } catch (const Error& e) {
      return error_response(400, e.code(), e.what());
    }
  }

  /// Seeded stream for one request: every draw is a pure function of
  /// (seed, route, request content).
  struct Stream {
    std::uint64_t state;
    std::uint64_t next() { return splitmix64(state); }
    std::uint64_t pick(std::uint64_t modulus) { return next() % modulus; }
    double unit() {  // [0, 1)
      return static_cast<double>(next() >> 11) / 9007199254740992.0;
    }
  };

  Stream stream_for(const std::string& route, const std::string& dump) const {
    std::string key = std::to_string(script_.seed) + "|" + route + "|" + dump;
    return Stream{hex_prefix_u64(sha256_hex(key))};
  }

  static constexpr std::array<const char*, 8> kAdjectives = {
      "quiet", "vivid", "stormy", "golden", "misty", "bustling", "serene", "weathered"};
  static constexpr std::array<const char*, 8> kPlaces = {
      "harbor", "meadow", "alley", "rooftop", "shoreline", "orchard", "plaza", "courtyard"};
  static constexpr std::array<const char*, 8> kThings = {
      "window", "bench", "lantern", "bicycle", "doorway", "fence", "tree", "awning"};
  static constexpr std::array<const char*, 12> kElements = {
      "dark storm clouds", "warm golden light", "scattered wildflowers", "a flock of birds",
      "dense fog",         "neon signage",      "fresh snow",            "autumn leaves",
      "a winding path",    "billowing smoke",   "glowing embers",        "a distant mountain"};

  std::pair<int, Json> defaults(const std::string& route, const Json& request,
                                const std::string& dump) const {
    Stream rng = stream_for(route, dump);

    if (route == "/embed") {
      require_string(request, "text");
      Vec v(dimension_);
      for (double& x : v) x = rng.unit() * 2.0 - 1.0;
      return {200, Json{{"embedding", normalized(v)}}};
    }

    if (route == "/analyze") {
      ImageArtifact::from_json(require_object(request, "image"));
      std::string summary = std::string("a ") + kAdjectives[rng.pick(8)] + " " +
                            kPlaces[rng.pick(8)];
      std::size_t e1 = rng.pick(8);
      std::size_t e2 = (e1 + 1 + rng.pick(7)) % 8;
      Json entities = Json::array();
      entities.push_back(Json{{"name", kThings[e1]}, {"salience", 0.9}});
      entities.push_back(Json{{"name", kThings[e2]}, {"salience", 0.6}});
      return {200, Json{{"scene_summary", summary},
                        {"entities", entities},
                        {"source_emotion", std::string(kCanonicalEmotions[rng.pick(8)])},
                        {"source_confidence", 0.5 + static_cast<double>(rng.pick(40)) / 100.0}}};
    }

    if (route == "/plan-propose") {
      std::string mode = require_string(request, "mode");
      if (mode == "revise") {
        const Json& ins = require_object(request, "instruction");
        std::string text = require_string(ins, "text", "instruction");
        std::uint64_t attempt = request.contains("attempt")
                                    ? request.at("attempt").get<std::uint64_t>()
                                    : 0;
        return {200, Json{{"text", text + " (take " + std::to_string(attempt) + ")"}}};
      }
      std::size_t count = request.contains("count") ? request.at("count").get<std::size_t>() : 4;
      std::uint64_t base = rng.next();
      Json suggestions = Json::array();
      for (std::size_t i = 0; i < count; ++i) {
        std::string element = kElements[(base + i) % kElements.size()];
        efk::ElementKind kind = efk::kAllElementKinds[rng.pick(6)];
        auto methods = planning::compatible_methods(kind);
        std::size_t mi = rng.pick(methods.size());
        auto it = methods.begin();
        std::advance(it, static_cast<long>(mi));
        suggestions.push_back(Json{{"element", element},
                                   {"kind", efk::to_string(kind)},
                                   {"method", planning::to_string(*it)}});
      }
      return {200, Json{{"suggestions", suggestions}}};
    }

    if (route == "/edit") {
      ImageArtifact image = ImageArtifact::from_json(require_object(request, "image"));
      std::string tool = require_string(request, "tool");
      std::string directive = require_string(request, "directive");
      std::string bytes;
      try {
        bytes = BlobStore::read_artifact(image);
      } catch (const Error& e) {
        return error_response(400, "BadArtifact", e.what());
      }
      bytes += "\nEDIT tool=" + tool + " directive=" + directive;
      ImageArtifact out = store_.put(bytes, image.width, image.height);
      return {200, Json{{"image", out.to_json()}}};
    }

    if (route == "/detect") {
      ImageArtifact image = ImageArtifact::from_json(require_object(request, "image"));
      require_string(request, "phrase");
      int bw = std::max(8, image.width / 8);
      int bh = std::max(8, image.height / 8);
      int x = static_cast<int>(rng.pick(static_cast<std::uint64_t>(
          std::max(1, image.width - bw))));
      int y = static_cast<int>(rng.pick(static_cast<std::uint64_t>(
          std::max(1, image.height - bh))));
      Json boxes = Json::array();
      boxes.push_back(Json{{"x", x},
                           {"y", y},
                           {"w", bw},
                           {"h", bh},
                           {"score", 0.5 + static_cast<double>(rng.pick(50)) / 100.0}});
      return {200, Json{{"boxes", boxes}}};
    }

    if (route == "/segment") {
      ImageArtifact image = ImageArtifact::from_json(require_object(request, "image"));
      const Json& box = require_object(request, "box");
      int x = static_cast<int>(require_int(box, "x", "box"));
      int y = static_cast<int>(require_int(box, "y", "box"));
      int w = static_cast<int>(require_int(box, "w", "box"));
      int h = static_cast<int>(require_int(box, "h", "box"));
      x = std::clamp(x, 0, image.width);
      y = std::clamp(y, 0, image.height);
      w = std::clamp(w, 0, image.width - x);
      h = std::clamp(h, 0, image.height - y);
      RleMask mask = RleMask::rectangle(image.width, image.height, x, y, w, h);
      return {200, Json{{"mask", mask.to_json()}}};
    }

    if (route == "/validate") {
      ImageArtifact before = ImageArtifact::from_json(require_object(request, "before"), "before");
      ImageArtifact after = ImageArtifact::from_json(require_object(request, "after"), "after");
      require_string(request, "directive");
      if (before.content_hash == after.content_hash)
        return {200, Json{{"verdict", "failed"}, {"reason", "no visible change"}}};
      return {200, Json{{"verdict", "ok"}}};
    }

    if (route == "/critique") {
      std::string mode = require_string(request, "mode");
      ImageArtifact::from_json(require_object(request, "image"));
      std::string target = require_string(request, "target");
      bool in_domain = false;
      for (std::string_view e : kCanonicalEmotions)
        if (target == e) in_domain = true;

      if (mode == "assess") {
        Json rationale = Json::array(
            {std::string("inspect composition: ") + kAdjectives[rng.pick(8)] + " " +
                 kPlaces[rng.pick(8)],
             "weigh affective cues against target '" + target + "'",
             "conclude from dominant cues"});
        if (!in_domain)
          return {200, Json{{"verdict", true}, {"rationale", rationale}}};
        double target_mass = 0.55 + static_cast<double>(rng.pick(30)) / 100.0;
        double rest = (1.0 - target_mass) / 7.0;
        Json dist = Json::object();
        for (std::string_view e : kCanonicalEmotions)
          dist[std::string(e)] = (target == e) ? target_mass : rest;
        return {200, Json{{"distribution", dist}, {"rationale", rationale}}};
      }
      if (mode == "diagnose") {
        require_object(request, "instruction");
        return {200, Json{{"effective", true}, {"executed", true}}};
      }
      if (mode == "escalate") {
        std::string element = kElements[rng.pick(kElements.size())];
        efk::ElementKind kind = efk::kAllElementKinds[rng.pick(6)];
        auto methods = planning::compatible_methods(kind);
        auto it = methods.begin();
        std::advance(it, static_cast<long>(rng.pick(methods.size())));
        return {200, Json{{"instruction", Json{{"element", element},
                                               {"kind", efk::to_string(kind)},
                                               {"method", planning::to_string(*it)}}}}};
      }
      return error_response(400, "BadMode", "unknown critique mode: " + mode);
    }

    if (route == "/classify") {
      ImageArtifact::from_json(require_object(request, "image"));
      std::array<double, kEmotionCount> w{};
      double sum = 0.0;
      for (double& x : w) {
        x = 1.0 + static_cast<double>(rng.pick(1000)) / 250.0;
        sum += x;
      }
      Json dist = Json::object();
      for (std::size_t i = 0; i < kEmotionCount; ++i)
        dist[std::string(kCanonicalEmotions[i])] = w[i] / sum;
      return {200, Json{{"distribution", dist}}};
    }

    if (route == "/describe") {
      require_string(request, "emotion");
      const Json& members = require_array(request, "members");
      std::string description = std::string("recurring motif: ") +
                                kElements[rng.pick(kElements.size())] + " (" +
                                std::to_string(members.size()) + " exemplars)";
      return {200, Json{{"description", description},
                        {"kind", efk::to_string(efk::kAllElementKinds[rng.pick(6)])}}};
    }

    if (route == kRoutePerceptualDistance) {
      ImageArtifact a = ImageArtifact::from_json(require_object(request, "a"), "a");
      ImageArtifact b = ImageArtifact::from_json(require_object(request, "b"), "b");
      std::uint64_t xa = hex_prefix_u64(a.content_hash);
      std::uint64_t xb = hex_prefix_u64(b.content_hash);
      std::uint64_t x = xa ^ xb;
      int bits = 0;
      while (x) {
        x &= x - 1;
        ++bits;
      }
      return {200, Json{{"distance", static_cast<double>(bits) / 64.0}}};
    }

    return error_response(404, "UnknownRoute", "no such route: " + route);
  }

  MockScript script_;
  BlobStore store_;
  std::size_t dimension_;
  mutable std::mutex log_mutex_;
  std::vector<MockLogEntry> log_;
};

/// In-process transport over a MockEngine; applies the same retry policy as
/// the HTTP client so failure injection behaves identically.
class InProcessMockClient : public BackendClient {
 public:
  InProcessMockClient(std::shared_ptr<MockEngine> engine, int retry_count = 2)
      : engine_(std::move(engine)), retry_count_(retry_count) {}

  const std::shared_ptr<MockEngine>& engine() const noexcept { return engine_; }

  Json call(const std::string& route, const Json& request) override {
    auto attempt = [&]() {
      detail::Attempt a;
      auto [status, body] = engine_->handle(route, request);
      a.transport_ok = true;
      a.status = status;
      a.body = std::move(body);
      return a;
    };
    return detail::call_with_retries(route, retry_count_, attempt);
  }

 private:
  std::shared_ptr<MockEngine> engine_;
  int retry_count_;
};

/// HTTP frontend for a MockEngine; serves every protocol route.
class MockServer {
 public:
  explicit MockServer(std::shared_ptr<MockEngine> engine) : engine_(std::move(engine)) {
    std::vector<std::string> routes(kCoreRoutes.begin(), kCoreRoutes.end());
    routes.emplace_back(kRoutePerceptualDistance);
    for (const std::string& route : routes) {
      server_.Post(route, [this, route](const httplib::Request& req, httplib::Response& res) {
        Json body;
        try {
          body = Json::parse(req.body);
        } catch (const nlohmann::json::parse_error&) {
          res.status = 400;
          res.set_content(
              Json{{"error", Json{{"code", "BadRequest"}, {"message", "invalid JSON"}}}}.dump(),
              "application/json");
          return;
        }
        auto [status, payload] = engine_->handle(route, body);
        res.status = status;
        res.set_content(payload.dump(), "application/json");
      });
    }
  }

  ~MockServer() { stop(); }

  /// Binds and serves on 127.0.0.1; port 0 picks a free port. Returns the
  /// bound port.
  int start(int port = 0) {
    if (port == 0) {
      port_ = server_.bind_to_any_port("127.0.0.1");
      if (port_ < 0) throw BindFailure("cannot bind mock server to any port");
    } else {
      if (!server_.bind_to_port("127.0.0.1", port))
        throw BindFailure("cannot bind mock server to port " + std::to_string(port));
      port_ = port;
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    while (!server_.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const noexcept { return port_; }
  const std::shared_ptr<MockEngine>& engine() const noexcept { return engine_; }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  std::shared_ptr<MockEngine> engine_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

/// Builds the Backends facade for a profile: HTTP when a base URL is set
/// (possibly via EMOFLOW_BACKEND_URL), in-process mock otherwise.
struct BoundBackends {
  Backends backends;
  std::shared_ptr<MockEngine> engine;  // non-null only for the in-process mock
};

inline BoundBackends bind_backends(BackendProfile profile,
                                   const std::filesystem::path& mock_store,
                                   const MockScript& script = {}) {
  profile.apply_env_override();
  profile.validate();
  if (!profile.base_url.empty()) {
    auto client = std::make_shared<HttpBackendClient>(profile);
    return BoundBackends{Backends(client, profile.dimension), nullptr};
  }
  MockScript effective = script;
  if (effective.seed == 0) effective.seed = profile.mock_seed;
  auto engine = std::make_shared<MockEngine>(effective, mock_store, profile.dimension);
  auto client = std::make_shared<InProcessMockClient>(engine, profile.retry_count);
  return BoundBackends{Backends(client, profile.dimension), engine};
}

}  // namespace emoflow::backends

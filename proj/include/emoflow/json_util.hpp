#pragma once

#include <json.hpp>

#include <fstream>
#include <string>

#include "emoflow/errors.hpp"

namespace emoflow {

using Json = nlohmann::json;

/// Field accessors that report the offending field path on violation.
inline const Json& require_field(const Json& j, const std::string& key,
                                 const std::string& path = "") {
  std::string full = path.empty() ? key : path + "." + key;
  if (!j.is_object() || !j.contains(key))
    throw SchemaViolation(full, "missing required field");
  return j.at(key);
}

inline std::string require_string(const Json& j, const std::string& key,
                                  const std::string& path = "") {
  const Json& v = require_field(j, key, path);
  if (!v.is_string())
    throw SchemaViolation(path.empty() ? key : path + "." + key, "expected string");
  return v.get<std::string>();
}

inline double require_number(const Json& j, const std::string& key,
                             const std::string& path = "") {
  const Json& v = require_field(j, key, path);
  if (!v.is_number())
    throw SchemaViolation(path.empty() ? key : path + "." + key, "expected number");
  return v.get<double>();
}

inline std::int64_t require_int(const Json& j, const std::string& key,
                                const std::string& path = "") {
  const Json& v = require_field(j, key, path);
  if (!v.is_number_integer())
    throw SchemaViolation(path.empty() ? key : path + "." + key, "expected integer");
  return v.get<std::int64_t>();
}

inline const Json& require_array(const Json& j, const std::string& key,
                                 const std::string& path = "") {
  const Json& v = require_field(j, key, path);
  if (!v.is_array())
    throw SchemaViolation(path.empty() ? key : path + "." + key, "expected array");
  return v;
}

inline const Json& require_object(const Json& j, const std::string& key,
                                  const std::string& path = "") {
  const Json& v = require_field(j, key, path);
  if (!v.is_object())
    throw SchemaViolation(path.empty() ? key : path + "." + key, "expected object");
  return v;
}

/// Canonical serialization: nlohmann objects keep keys sorted, and doubles
/// use shortest round-trip formatting, so dump() is stable across runs.
inline std::string canonical_dump(const Json& j) { return j.dump(); }

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open for reading: " + path);
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaViolation(path, std::string("invalid JSON: ") + e.what());
  }
  return j;
}

}  // namespace emoflow

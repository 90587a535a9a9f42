#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace emoflow {

/// Base class for all emoflow errors. `code()` is the stable machine-readable
/// identifier used in wire error envelopes and CLI exit messages.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& m) : Error("DimensionMismatch", m) {}
};

struct ZeroVector : Error {
  explicit ZeroVector(const std::string& m) : Error("ZeroVector", m) {}
};

struct IoFailure : Error {
  explicit IoFailure(const std::string& m) : Error("IoFailure", m) {}
};

/// Carries the path of the offending field, e.g. "nodes[3].embedding".
class SchemaViolation : public Error {
 public:
  SchemaViolation(std::string field, const std::string& m)
      : Error("SchemaViolation", m + " (field: " + field + ")"), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct EmptyKnowledgeBase : Error {
  explicit EmptyKnowledgeBase(const std::string& m) : Error("EmptyKnowledgeBase", m) {}
};

struct IncompatiblePair : Error {
  explicit IncompatiblePair(const std::string& m) : Error("IncompatiblePair", m) {}
};

struct PlanningFailed : Error {
  explicit PlanningFailed(const std::string& m) : Error("PlanningFailed", m) {}
};

struct ToolUnavailable : Error {
  explicit ToolUnavailable(const std::string& m) : Error("ToolUnavailable", m) {}
};

struct BackendUnavailable : Error {
  explicit BackendUnavailable(const std::string& m) : Error("BackendUnavailable", m) {}
};

struct BackendMalformedResponse : Error {
  explicit BackendMalformedResponse(const std::string& m) : Error("BackendMalformedResponse", m) {}
};

struct InvalidDistribution : Error {
  explicit InvalidDistribution(const std::string& m) : Error("InvalidDistribution", m) {}
};

struct CorruptRunDirectory : Error {
  explicit CorruptRunDirectory(const std::string& m) : Error("CorruptRunDirectory", m) {}
};

struct BindFailure : Error {
  explicit BindFailure(const std::string& m) : Error("BindFailure", m) {}
};

}  // namespace emoflow

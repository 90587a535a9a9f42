#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "emoflow/errors.hpp"
#include "emoflow/hash.hpp"
#include "emoflow/json_util.hpp"

namespace emoflow {

/// Default working resolution for all pipeline images.
inline constexpr int kDefaultResolution = 512;

/// Opaque content-addressed image handle. Bytes live in a BlobStore; the
/// pipeline only ever moves references.
struct ImageArtifact {
  std::string uri;           // absolute path of the stored bytes
  std::string content_hash;  // sha256 hex of the stored bytes
  int width = kDefaultResolution;
  int height = kDefaultResolution;

  bool operator==(const ImageArtifact& o) const {
    return uri == o.uri && content_hash == o.content_hash && width == o.width &&
           height == o.height;
  }

  Json to_json() const {
    return Json{{"uri", uri},
                {"content_hash", content_hash},
                {"width", width},
                {"height", height}};
  }

  static ImageArtifact from_json(const Json& j, const std::string& path = "image") {
    ImageArtifact a;
    a.uri = require_string(j, "uri", path);
    a.content_hash = require_string(j, "content_hash", path);
    a.width = static_cast<int>(require_int(j, "width", path));
    a.height = static_cast<int>(require_int(j, "height", path));
    return a;
  }
};

/// Directory of content-addressed blobs: one file per object, named by its
/// sha256. Reads verify the digest, so silent corruption surfaces.
class BlobStore {
 public:
  BlobStore() = default;
  explicit BlobStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
  }

  const std::filesystem::path& root() const noexcept { return root_; }

  ImageArtifact put(const std::string& bytes, int width = kDefaultResolution,
                    int height = kDefaultResolution) const {
    std::string hash = sha256_hex(bytes);
    std::filesystem::path p = root_ / hash;
    if (!std::filesystem::exists(p)) {
      // unique temp name so concurrent writers of the same content cannot clash
      static std::atomic<std::uint64_t> counter{0};
      std::filesystem::path tmp =
          root_ / (hash + ".tmp" + std::to_string(counter.fetch_add(1)));
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoFailure("cannot write blob: " + tmp.string());
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      out.close();
      std::filesystem::rename(tmp, p);
    }
    return ImageArtifact{p.string(), hash, width, height};
  }

  std::string get(const std::string& content_hash) const {
    return read_verified(root_ / content_hash, content_hash);
  }

  /// Reads any artifact by its uri and verifies the recorded hash.
  static std::string read_artifact(const ImageArtifact& a) {
    return read_verified(a.uri, a.content_hash);
  }

  /// Ingests an external file (e.g. the job's source image).
  ImageArtifact ingest_file(const std::string& path, int width = kDefaultResolution,
                            int height = kDefaultResolution) const {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot read image: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    return put(bytes, width, height);
  }

 private:
  static std::string read_verified(const std::filesystem::path& p,
                                   const std::string& expected_hash) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoFailure("cannot read blob: " + p.string());
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    if (sha256_hex(bytes) != expected_hash)
      throw CorruptRunDirectory("blob hash mismatch: " + p.string());
    return bytes;
  }

  std::filesystem::path root_;
};

/// Run-length-encoded binary mask, row-major, counts alternating between
/// 0-pixels and 1-pixels starting with 0s. sum(counts) == width*height.
struct RleMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> counts;

  bool empty() const {
    // any 1-run present? counts[1], counts[3], ... are 1-runs
    for (std::size_t i = 1; i < counts.size(); i += 2)
      if (counts[i] > 0) return false;
    return true;
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  void validate(int image_w, int image_h) const {
    if (width != image_w || height != image_h)
      throw SchemaViolation("mask", "mask dimensions do not match image");
    if (total() != static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height))
      throw SchemaViolation("mask.counts", "run lengths do not cover the image");
  }

  Json to_json() const {
    return Json{{"width", width}, {"height", height}, {"counts", counts}};
  }

  static RleMask from_json(const Json& j, const std::string& path = "mask") {
    RleMask m;
    m.width = static_cast<int>(require_int(j, "width", path));
    m.height = static_cast<int>(require_int(j, "height", path));
    for (const auto& c : require_array(j, "counts", path)) {
      if (!c.is_number_unsigned() && !c.is_number_integer())
        throw SchemaViolation(path + ".counts", "expected unsigned run lengths");
      m.counts.push_back(c.get<std::uint32_t>());
    }
    return m;
  }

  /// Mask of a filled axis-aligned rectangle, with adjacent equal-value runs
  /// merged across row boundaries.
  static RleMask rectangle(int image_w, int image_h, int x, int y, int w, int h) {
    RleMask m;
    m.width = image_w;
    m.height = image_h;
    auto push = [&m](std::uint64_t n, bool value) {
      if (n == 0) return;
      bool next_is_one = m.counts.size() % 2 == 1;
      if (value == next_is_one) {
        m.counts.push_back(static_cast<std::uint32_t>(n));
      } else if (!m.counts.empty()) {
        m.counts.back() += static_cast<std::uint32_t>(n);
      } else {
        m.counts.push_back(0);  // leading zero-run of length 0, then the 1-run
        m.counts.push_back(static_cast<std::uint32_t>(n));
      }
    };
    for (int row = 0; row < image_h; ++row) {
      if (row < y || row >= y + h || w <= 0) {
        push(static_cast<std::uint64_t>(image_w), false);
      } else {
        push(static_cast<std::uint64_t>(x), false);
        push(static_cast<std::uint64_t>(w), true);
        push(static_cast<std::uint64_t>(image_w - x - w), false);
      }
    }
    return m;
  }
};

}  // namespace emoflow

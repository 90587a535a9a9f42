#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "emoflow/emotion.hpp"
#include "emoflow/errors.hpp"
#include "emoflow/image.hpp"
#include "emoflow/json_util.hpp"
#include "emoflow/vec.hpp"

namespace emoflow::metrics {

inline constexpr double kDefaultKlEpsilon = 1e-6;

/// Shift rule used by esr(): a pair counts as shifted iff the smoothed KL
/// divergence of (edit || source) is strictly positive and the target-emotion
/// mass strictly increased. Surfaced in report headers.
inline constexpr const char* kEsrRule =
    "shifted iff KL(edit||source) > 0 and edit[target] > source[target]";

/// KL(p || q) with epsilon smoothing: epsilon is added to every component of
/// both distributions, each is renormalized, then sum p'_i * ln(p'_i / q'_i).
/// Zero exactly when p == q before smoothing.
inline double kl_divergence(const EmotionDistribution& p, const EmotionDistribution& q,
                            double epsilon = kDefaultKlEpsilon) {
  if (!(epsilon > 0.0)) throw InvalidDistribution("epsilon must be > 0");
  if (p.is_sentinel() || q.is_sentinel())
    throw InvalidDistribution("kl_divergence on sentinel distribution");

  std::array<double, kEmotionCount> ps{}, qs{};
  double psum = 0.0, qsum = 0.0;
  for (std::size_t i = 0; i < kEmotionCount; ++i) {
    ps[i] = p.at(i) + epsilon;
    qs[i] = q.at(i) + epsilon;
    psum += ps[i];
    qsum += qs[i];
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < kEmotionCount; ++i)
    kl += (ps[i] / psum) * std::log((ps[i] / psum) / (qs[i] / qsum));
  return kl;
}

/// Increase in target-emotion probability mass from source to edit.
inline double emo_s(const EmotionDistribution& source, const EmotionDistribution& edited,
                    const EmotionLabel& target) {
  if (!target.is_in_domain())
    throw InvalidDistribution("emo_s requires an in-domain target");
  if (source.is_sentinel() || edited.is_sentinel())
    throw InvalidDistribution("emo_s on sentinel distribution");
  return edited.at(target) - source.at(target);
}

struct ShiftPair {
  EmotionDistribution source;
  EmotionDistribution edited;
  EmotionLabel target;
};

inline bool esr_shifted(const ShiftPair& pair, double epsilon = kDefaultKlEpsilon) {
  return kl_divergence(pair.edited, pair.source, epsilon) > 0.0 &&
         pair.edited.at(pair.target) > pair.source.at(pair.target);
}

/// Fraction of pairs whose emotion distribution shifted toward the target.
inline double esr(const std::vector<ShiftPair>& pairs, double epsilon = kDefaultKlEpsilon) {
  if (pairs.empty()) throw InvalidDistribution("esr requires at least one pair");
  std::size_t shifted = 0;
  for (const ShiftPair& pair : pairs)
    if (esr_shifted(pair, epsilon)) ++shifted;
  return static_cast<double>(shifted) / static_cast<double>(pairs.size());
}

using Classifier = std::function<EmotionDistribution(const ImageArtifact&)>;

/// Fraction of images whose classified argmax emotion (lexicographic
/// tie-break) equals the target.
inline double emo_a(const std::vector<ImageArtifact>& images, const EmotionLabel& target,
                    const Classifier& classify) {
  if (images.empty())
    throw InvalidDistribution("emo_a requires at least one image");
  if (!target.is_in_domain())
    throw InvalidDistribution("emo_a requires an in-domain target");
  std::size_t hits = 0;
  for (const ImageArtifact& img : images)
    if (classify(img).argmax() == target) ++hits;
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

/// Mean pairwise cosine distance (1 - cosine similarity) over unordered
/// non-self pairs.
inline double sem_d(const std::vector<Vec>& embeddings) {
  if (embeddings.size() < 2)
    throw DimensionMismatch("sem_d requires at least two embeddings");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
      sum += 1.0 - cosine_similarity(embeddings[i], embeddings[j]);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

/// Semantic consistency: cosine similarity of source and edit embeddings.
inline double clip_i(const Vec& source_embedding, const Vec& edit_embedding) {
  return cosine_similarity(source_embedding, edit_embedding);
}

using PerceptualDistance =
    std::function<double(const ImageArtifact&, const ImageArtifact&)>;

/// Mean pairwise perceptual distance over unordered non-self pairs; the
/// distance itself comes from an adapter backend.
inline double lpips_diversity(const std::vector<ImageArtifact>& images,
                              const PerceptualDistance& distance) {
  if (images.size() < 2)
    throw DimensionMismatch("lpips_diversity requires at least two images");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t j = i + 1; j < images.size(); ++j) {
      sum += distance(images[i], images[j]);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

/// Per-output row of the evaluation report.
struct SampleRow {
  std::string id;
  double emo_a_hit = 0.0;  // 0 or 1
  double emo_s = 0.0;
  double esr_shifted = 0.0;  // 0 or 1
  double clip_i = 0.0;
};

/// Per-run (set-level) row: diversity metrics computed over one output set.
struct SetRow {
  std::string id;
  std::optional<double> sem_d;
  std::optional<double> lpips;
};

struct MetricReport {
  double emo_a = 0.0;
  double emo_s = 0.0;
  double esr = 0.0;
  double clip_i = 0.0;
  std::optional<double> lpips;
  std::optional<double> sem_d;
  std::vector<SampleRow> samples;
  std::vector<SetRow> sets;

  /// Aggregates are the means of the per-sample/per-set columns.
  static MetricReport aggregate(std::vector<SampleRow> samples, std::vector<SetRow> sets) {
    MetricReport r;
    r.samples = std::move(samples);
    r.sets = std::move(sets);
    if (!r.samples.empty()) {
      double n = static_cast<double>(r.samples.size());
      for (const SampleRow& s : r.samples) {
        r.emo_a += s.emo_a_hit / n;
        r.emo_s += s.emo_s / n;
        r.esr += s.esr_shifted / n;
        r.clip_i += s.clip_i / n;
      }
    }
    double semd_sum = 0.0, lpips_sum = 0.0;
    std::size_t semd_n = 0, lpips_n = 0;
    for (const SetRow& s : r.sets) {
      if (s.sem_d) {
        semd_sum += *s.sem_d;
        ++semd_n;
      }
      if (s.lpips) {
        lpips_sum += *s.lpips;
        ++lpips_n;
      }
    }
    if (semd_n > 0) r.sem_d = semd_sum / static_cast<double>(semd_n);
    if (lpips_n > 0) r.lpips = lpips_sum / static_cast<double>(lpips_n);
    return r;
  }

  Json to_json() const {
    Json samples_json = Json::array();
    for (const SampleRow& s : samples)
      samples_json.push_back(Json{{"id", s.id},
                                  {"emo_a_hit", s.emo_a_hit},
                                  {"emo_s", s.emo_s},
                                  {"esr_shifted", s.esr_shifted},
                                  {"clip_i", s.clip_i}});
    Json sets_json = Json::array();
    for (const SetRow& s : sets) {
      Json row{{"id", s.id}};
      row["sem_d"] = s.sem_d ? Json(*s.sem_d) : Json(nullptr);
      row["lpips"] = s.lpips ? Json(*s.lpips) : Json(nullptr);
      sets_json.push_back(row);
    }
    Json j{{"esr_rule", kEsrRule},
           {"sample_count", samples.size()},
           {"set_count", sets.size()},
           {"emo_a", emo_a},
           {"emo_s", emo_s},
           {"esr", esr},
           {"clip_i", clip_i},
           {"samples", samples_json},
           {"sets", sets_json}};
    j["sem_d"] = sem_d ? Json(*sem_d) : Json(nullptr);
    j["lpips"] = lpips ? Json(*lpips) : Json(nullptr);
    return j;
  }
};

}  // namespace emoflow::metrics

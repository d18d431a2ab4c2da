#pragma once

// Representation analyses: entity-type similarity and prototype convergence.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fskv/corpus.hpp"
#include "fskv/fewshot.hpp"

namespace fskv {

struct SimilarityReport {
  std::vector<std::string> types;
  Matrix similarity;  // dot products of per-type mean mention embeddings
  std::vector<int> samples;  // mentions used per type
};

// Mention embedding = mean plain-encoder feature of a key or value span's
// tokens. Up to `samples_per_type` mentions per relation type are drawn
// without replacement. Throws Error(kValidation) naming a type without mentions.
SimilarityReport similarity_heatmap(const Model& model, const Corpus& corpus,
                                    int samples_per_type, std::uint64_t seed);
// Same, from precomputed per-type mean embeddings (rows).
Matrix similarity_matrix(const Matrix& type_means);

struct DistanceCurveReport {
  std::vector<int> shots;
  std::vector<double> raw;       // mean distance of K-shot prototypes to the centroid
  std::vector<double> relative;  // raw / raw at K = 5
  int repetitions = 0;
};

// For every (relation type, role) class of the corpus: centroid = mean inference
// feature of all its tokens; a K-shot prototype averages the class tokens of K
// distinct masked copies. Throws Error(kSampling) when K exceeds a class's
// copies and Error(kConfig) when 5 is not among `shots`.
DistanceCurveReport prototype_distance_curve(const Model& model, const Corpus& corpus,
                                             std::span<const int> shots, int repetitions,
                                             std::uint64_t seed);
// The same computation over precomputed per-copy class features: copies[c][j]
// holds the class-c token rows of the j-th copy containing class c.
DistanceCurveReport prototype_distance_curve(
    const std::vector<std::vector<Matrix>>& copies, std::span<const int> shots,
    int repetitions, std::uint64_t seed);

nlohmann::json similarity_report_to_json(const SimilarityReport& report);
nlohmann::json distance_curve_to_json(const DistanceCurveReport& report);

}  // namespace fskv

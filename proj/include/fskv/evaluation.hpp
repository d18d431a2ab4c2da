#pragma once

// Episode evaluation with span-level micro-F1.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fskv/corpus.hpp"
#include "fskv/fewshot.hpp"
#include "fskv/sampler.hpp"

namespace fskv {

struct SpanScore {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Scores from counts. Empty predictions give precision 0; empty gold gives
// recall 0; both empty count as perfect agreement.
SpanScore score_counts(std::size_t tp, std::size_t fp, std::size_t fn);

// Exact (start, end, entity type, role) matching.
SpanScore span_f1(std::span<const EntitySpan> predicted, std::span<const EntitySpan> gold);

// Spans for each query copy of an episode, in group then query order.
class EpisodePredictor {
 public:
  virtual ~EpisodePredictor() = default;
  virtual std::vector<std::vector<EntitySpan>> predict(const Episode& episode) = 0;
};

class ModelPredictor : public EpisodePredictor {
 public:
  explicit ModelPredictor(const Model& model, Decoder decoder = Decoder::kPrototype)
      : model_(model), decoder_(decoder) {}
  std::vector<std::vector<EntitySpan>> predict(const Episode& episode) override;

 private:
  const Model& model_;
  Decoder decoder_;
};

// Returns the gold spans; an upper bound for any predictor.
class OraclePredictor : public EpisodePredictor {
 public:
  std::vector<std::vector<EntitySpan>> predict(const Episode& episode) override;
};

struct ClassScore {
  std::string name;  // "<type>/Key" or "<type>/Value"
  SpanScore score;
};

struct EvalReport {
  EpisodeShape shape;
  int episodes = 0;
  std::uint64_t seed = 0;
  double mean_f1 = 0;
  double stdev_f1 = 0;  // sample standard deviation across episodes
  double mean_token_accuracy = 0;
  // Micro-F1 over non-O token labels, averaged across episodes.
  double mean_token_f1 = 0;
  std::vector<double> episode_f1;
  std::vector<ClassScore> per_class;  // pooled over all episodes, sorted by name
};

// Samples `episodes` episodes from the masked copies of `corpus` with the
// sampling stream of `seed`, scores each one and aggregates. Throws
// Error(kConfig) when episodes < 1.
EvalReport evaluate(EpisodePredictor& predictor, const Corpus& corpus,
                    const EpisodeShape& shape, int episodes, std::uint64_t seed);

nlohmann::json eval_report_to_json(const EvalReport& report);

}  // namespace fskv

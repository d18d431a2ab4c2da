#pragma once

// Prototype-based few-shot tagging: class layout of an episode, prototypes,
// distance classification, the NNShot baseline, the multi-task episode loss,
// AdamW training and finite-difference gradient verification.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fskv/corpus.hpp"
#include "fskv/encoder.hpp"
#include "fskv/sampler.hpp"
#include "fskv/tape.hpp"
#include "fskv/variational.hpp"

namespace fskv {

// kEntityRole merges B and I of one (type, role); kTag keeps one class per tag.
enum class PrototypeGranularity { kEntityRole, kTag };

struct ModelConfig {
  EncoderConfig encoder;
  VariationalConfig variational;
  bool use_roi = true;
  bool use_rectification = true;
  PrototypeGranularity granularity = PrototypeGranularity::kEntityRole;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct Model {
  ModelConfig config;
  ParameterSet params;
  std::uint64_t seed = 0;
};

// Encoder arrays, then ROI arrays when use_roi, then rectifier arrays when
// use_rectification.
Model init_model(const ModelConfig& config, std::uint64_t seed);

// Classes of one episode: index 0 is O, then per relation type (in episode
// order) key and value, each split into B and I under kTag.
struct EpisodeClasses {
  struct Info {
    std::string entity_type;  // empty for O
    Role role = Role::kKey;
    std::optional<Bio> bio;
  };
  std::vector<std::string> names;
  std::vector<Info> info;

  std::size_t size() const { return names.size(); }
};

EpisodeClasses episode_classes(const Episode& episode, PrototypeGranularity granularity);
// Gold class per token; -1 where the token's tag is not an episode class.
std::vector<int> token_classes(const Document& doc, const EpisodeClasses& classes);
// Runs of one predicted class become spans; under kTag a B class or a change
// of class opens a new span.
std::vector<EntitySpan> spans_from_classes(std::span<const int> predicted,
                                           const EpisodeClasses& classes);

struct PrototypeSet {
  std::vector<std::string> classes;
  Matrix prototypes;  // C x M
  Matrix rectified;   // C x M; empty when rectification is off
};

// Mean support feature per class. Throws Error(kEpisode) when a class has no
// support token or fewer than two classes exist.
PrototypeSet compute_prototypes(std::span<const Matrix> support_features,
                                std::span<const std::vector<int>> support_classes,
                                const std::vector<std::string>& class_names);
// n x C Euclidean distances to the rectified prototypes when present, else to
// the plain ones.
Matrix distances(const PrototypeSet& prototypes, const Matrix& query_features);

struct Classification {
  Matrix probabilities;
  std::vector<int> labels;
};
// softmax(-d) per row; label = argmin d with ties to the lowest index.
Classification classify(const Matrix& distances);

// Label of the nearest support token by squared distance; ties to the lowest class.
std::vector<int> nnshot_classify(std::span<const Matrix> support_features,
                                 std::span<const std::vector<int>> support_classes,
                                 const Matrix& query_features);

struct LossBreakdown {
  double l_rec = 0;
  double l_kl1 = 0;
  double l_re = 0;
  double l_kl2 = 0;
  double l_cls = 0;
  double total = 0;
  double alpha = 0;
  double beta = 0;

  // l_rec + alpha * l_kl1 + l_re + beta * l_kl2 + l_cls, left to right.
  double composed() const { return l_rec + alpha * l_kl1 + l_re + beta * l_kl2 + l_cls; }
};

nlohmann::json loss_to_json(const LossBreakdown& loss);

struct TrainConfig {
  EpisodeShape shape{4, 1, 1};
  int iterations = 5000;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double alpha = 2.5e-4;
  double beta = 2.5e-4;
  std::uint64_t seed = 0;
  bool teacher_forcing = true;
  bool shrink_augment = false;
  double shrink_probability = 0.5;
  double shrink_ratio = 0.15;
  int log_interval = 100;
  ModelConfig model;
};

void validate_train_config(const TrainConfig& config);
nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Training-mode loss (sampled latents, teacher forcing and shrink as
// configured); no gradient is taken.
LossBreakdown episode_loss(const Model& model, const Episode& episode, Rng& rng,
                           const TrainConfig& config);

struct OptimizerState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

OptimizerState init_optimizer(const ParameterSet& params, double learning_rate,
                              double weight_decay);

// One AdamW update from the gradients currently held in `params`. Throws
// Error(kNumeric) naming the first parameter with a non-finite gradient.
void adam_update(ParameterSet& params, OptimizerState& state);

// One AdamW step on the episode's total loss. Throws Error(kNumeric) naming
// the first parameter with a non-finite gradient.
LossBreakdown train_step(Model& model, OptimizerState& state, const Episode& episode,
                         const TrainConfig& config, Rng& rng);

struct TrainResult {
  Model model;
  std::vector<LossBreakdown> history;
};

using TrainLogger = std::function<void(int step, const LossBreakdown& loss)>;

// Samples config.iterations episodes from the masked copies of `corpus` and
// takes one step on each; `log` fires every log_interval steps.
TrainResult train(const Corpus& corpus, const TrainConfig& config,
                  const TrainLogger& log = {});

// Window regression alone: the encoder and ROI arrays are fitted to the golden
// window of every (document, relation) pair. The pooled feature does not see
// which relation is asked for, so documents should carry one relation each.
struct RoiFitConfig {
  int steps = 2000;
  int batch = 0;  // pairs per step; 0 takes every pair
  double learning_rate = 3e-3;  // cosine-decayed to zero over `steps`
  double weight_decay = 0.0;
  double alpha = 2.5e-4;
  LatentMode latent = LatentMode::kMean;
  std::uint64_t seed = 0;
};

// Returns l_rec + alpha * l_kl1 averaged over the batch, per step. Throws
// Error(kConfig) without the ROI module or pairs, Error(kNumeric) on divergence.
std::vector<double> fit_roi(Model& model, std::span<const Document> documents,
                            const RoiFitConfig& config);

// Mean IoU of the mean-mode predicted window against every golden window.
double mean_window_iou(const Model& model, std::span<const Document> documents);

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0;
  int coordinates = 0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double step = 0;
  double tolerance = 0;
  bool passed() const;
};

// relative error = |analytic - numeric| / max(|analytic| + |numeric|, floor).
inline constexpr double kGradCheckFloor = 1e-6;

// Central differences of the total loss with fixed noise and the prototype
// reconstruction target frozen at its base value, on `coordinates` entries per
// array (all entries of smaller arrays), nonzero-gradient entries first. When
// `corrupt` names an array, its analytic gradient is perturbed first.
GradCheckReport grad_check(const Model& model, const Episode& episode,
                           const TrainConfig& config, double step, double tolerance,
                           std::uint64_t seed, int coordinates = 20,
                           const std::optional<std::string>& corrupt = {});

// Inference on one episode: predicted windows and mean-mode latents.
struct EpisodeInference {
  EpisodeClasses classes;
  // Per query copy in group order: predicted class per token.
  std::vector<std::vector<int>> query_labels;
};

enum class Decoder { kPrototype, kNearestNeighbor };

// Inference-time token features of one copy (predicted window when ROI is on).
Matrix copy_features(const Model& model, const MaskedCopy& copy);

EpisodeInference infer_episode(const Model& model, const Episode& episode,
                               Decoder decoder = Decoder::kPrototype);

}  // namespace fskv

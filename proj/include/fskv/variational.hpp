#pragma once

// Golden windows, the ROI variational autoencoder, prototype rectification
// and the Gaussian-latent helpers they share.

#include <array>
#include <string_view>

#include "fskv/doc_model.hpp"
#include "fskv/rng.hpp"
#include "fskv/tape.hpp"

namespace fskv {

// (x1, y1, x2, y2) on the unit square.
using UnitWindow = std::array<double, 4>;

UnitWindow to_unit(const BoundingBox& box);
double window_iou(const UnitWindow& a, const UnitWindow& b);
double window_iou(const BoundingBox& a, const BoundingBox& b);

struct GoldenWindow {
  BoundingBox box;
  UnitWindow unit() const { return to_unit(box); }
};

// Envelope of every key and value token box of the relation. Throws
// Error(kAnnotation) when the relation is absent or has no spans.
GoldenWindow golden_window(const Document& doc, std::string_view relation_type);

struct GaussianLatent {
  RowVector mu;
  RowVector log_var;
};

enum class LatentMode { kSample, kMean };

// mean: mu. sample: mu + exp(log_var / 2) * eps with eps ~ N(0, I).
RowVector reparameterize(const GaussianLatent& latent, Rng& rng, LatentMode mode);
// 0.5 * sum(mu^2 + exp(log_var) - 1 - log_var).
double kl_std_normal(const GaussianLatent& latent);
// Mean squared error over the four coordinates.
double roi_loss(const UnitWindow& predicted, const UnitWindow& golden);

// Each side moves inward by an independent Uniform[0, ratio] share of the
// window's extent; ratio must lie in [0, 0.3].
UnitWindow shrink_window_augment(const UnitWindow& window, double ratio, Rng& rng);
// Integer form; rounds inward so the result stays inside `window`.
BoundingBox shrink_window_augment(const BoundingBox& window, double ratio, Rng& rng);

struct VariationalConfig {
  int roi_hidden = 128;
  int roi_latent = 32;
  int rect_hidden = 128;
  // Initial biases of the rectifier's latent heads. A positive mean bias
  // starts the gate sigmoid(z) mostly open, a negative log-variance bias
  // starts the gate noise small.
  double rect_gate_bias = 3.0;
  double rect_log_var_bias = -6.0;

  friend bool operator==(const VariationalConfig&, const VariationalConfig&) = default;
};

// "roi.*" arrays: pooled feature (dim) -> hidden -> latent heads; latent ->
// hidden -> 4 box units.
void add_roi_params(ParameterSet& params, int dim, const VariationalConfig& config, Rng& rng);
// "rect.*" arrays: prototype (dim) -> hidden -> latent heads of size dim;
// latent -> hidden -> dim reconstruction.
void add_rectifier_params(ParameterSet& params, int dim, const VariationalConfig& config,
                          Rng& rng);

// Row-wise reparameterization on a tape; noise is drawn per entry in sample mode.
Var reparameterize(Tape& tape, Var mu, Var log_var, Rng& rng, LatentMode mode);

struct RoiOutputs {
  Var window;  // 1 x 4 ordered box on the unit square
  Var mu;
  Var log_var;
};

// `pooled` is 1 x dim (the mean of a document's token features).
RoiOutputs roi_forward(Bindings& bindings, Var pooled, Rng& rng, LatentMode mode);

struct RectifierOutputs {
  Var rectified;  // prototypes * sigmoid(latent)
  Var mu;
  Var log_var;
  Var reconstruction;
};

// One latent row per prototype row.
RectifierOutputs rectify_prototypes(Bindings& bindings, Var prototypes, Rng& rng,
                                    LatentMode mode);

// Gradient-free conveniences over a single vector.
struct RoiPrediction {
  UnitWindow window;
  GaussianLatent latent;
};
RoiPrediction roi_forward(const ParameterSet& params, const RowVector& pooled, Rng& rng,
                          LatentMode mode);

struct RectifiedPrototype {
  RowVector rectified;
  GaussianLatent latent;
  RowVector reconstruction;
};
RectifiedPrototype rectify_prototype(const ParameterSet& params, const RowVector& prototype,
                                     Rng& rng, LatentMode mode);

}  // namespace fskv

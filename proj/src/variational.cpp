#include "fskv/variational.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fskv/encoder.hpp"
#include "fskv/error.hpp"

namespace fskv {

UnitWindow to_unit(const BoundingBox& b) {
  const double s = kPageScale;
  return {b.x1 / s, b.y1 / s, b.x2 / s, b.y2 / s};
}

double window_iou(const UnitWindow& a, const UnitWindow& b) {
  const double iw = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
  const double ih = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
  const double inter = iw * ih;
  const double uni =
      (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return inter / uni;
}

double window_iou(const BoundingBox& a, const BoundingBox& b) {
  return window_iou(to_unit(a), to_unit(b));
}

GoldenWindow golden_window(const Document& doc, std::string_view relation_type) {
  const auto* rel = doc.find_relation(relation_type);
  if (!rel) {
    throw Error(ErrorKind::kAnnotation, "document '" + doc.id + "' has no relation '" +
                                            std::string(relation_type) + "'");
  }
  BoundingBox out{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(),
                  std::numeric_limits<int>::min(), std::numeric_limits<int>::min()};
  bool any = false;
  auto cover = [&](const std::vector<EntitySpan>& spans) {
    for (const auto& s : spans) {
      for (std::size_t i = s.start; i < s.end && i < doc.tokens.size(); ++i) {
        const auto& b = doc.tokens[i].box;
        out.x1 = std::min(out.x1, b.x1);
        out.y1 = std::min(out.y1, b.y1);
        out.x2 = std::max(out.x2, b.x2);
        out.y2 = std::max(out.y2, b.y2);
        any = true;
      }
    }
  };
  cover(rel->key_spans);
  cover(rel->value_spans);
  if (!any) {
    throw Error(ErrorKind::kAnnotation, "relation '" + std::string(relation_type) +
                                            "' in document '" + doc.id + "' has no tokens");
  }
  return {out};
}

RowVector reparameterize(const GaussianLatent& latent, Rng& rng, LatentMode mode) {
  if (mode == LatentMode::kMean) return latent.mu;
  RowVector out(latent.mu.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out(i) = latent.mu(i) + std::exp(0.5 * latent.log_var(i)) * rng.normal();
  }
  return out;
}

double kl_std_normal(const GaussianLatent& l) {
  return 0.5 * (l.mu.array().square() + l.log_var.array().exp() - 1.0 - l.log_var.array()).sum();
}

double roi_loss(const UnitWindow& a, const UnitWindow& b) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / 4.0;
}

namespace {

void check_ratio(double ratio) {
  if (!(ratio >= 0.0 && ratio <= 0.3)) {
    throw Error(ErrorKind::kConfig, "shrink ratio must lie in [0, 0.3]");
  }
}

}  // namespace

UnitWindow shrink_window_augment(const UnitWindow& w, double ratio, Rng& rng) {
  check_ratio(ratio);
  const double dx = w[2] - w[0];
  const double dy = w[3] - w[1];
  // Draw order fixed: left, top, right, bottom.
  const double l = rng.uniform(0.0, ratio);
  const double t = rng.uniform(0.0, ratio);
  const double r = rng.uniform(0.0, ratio);
  const double b = rng.uniform(0.0, ratio);
  return {w[0] + l * dx, w[1] + t * dy, w[2] - r * dx, w[3] - b * dy};
}

BoundingBox shrink_window_augment(const BoundingBox& w, double ratio, Rng& rng) {
  if (!w.valid()) throw Error(ErrorKind::kValidation, "invalid window");
  const auto u = shrink_window_augment(to_unit(w), ratio, rng);
  const double s = kPageScale;
  BoundingBox out{static_cast<int>(std::ceil(u[0] * s - 1e-9)),
                  static_cast<int>(std::ceil(u[1] * s - 1e-9)),
                  static_cast<int>(std::floor(u[2] * s + 1e-9)),
                  static_cast<int>(std::floor(u[3] * s + 1e-9))};
  out.x1 = std::clamp(out.x1, w.x1, w.x2);
  out.y1 = std::clamp(out.y1, w.y1, w.y2);
  out.x2 = std::clamp(out.x2, out.x1, w.x2);
  out.y2 = std::clamp(out.y2, out.y1, w.y2);
  return out;
}

void add_roi_params(ParameterSet& ps, int dim, const VariationalConfig& c, Rng& rng) {
  add_linear_params(ps, "roi.enc", dim, c.roi_hidden, rng);
  add_linear_params(ps, "roi.mu", c.roi_hidden, c.roi_latent, rng);
  add_linear_params(ps, "roi.logvar", c.roi_hidden, c.roi_latent, rng);
  add_linear_params(ps, "roi.dec", c.roi_latent, c.roi_hidden, rng);
  add_linear_params(ps, "roi.out", c.roi_hidden, 4, rng);
}

void add_rectifier_params(ParameterSet& ps, int dim, const VariationalConfig& c, Rng& rng) {
  add_linear_params(ps, "rect.enc", dim, c.rect_hidden, rng);
  add_linear_params(ps, "rect.mu", c.rect_hidden, dim, rng);
  add_linear_params(ps, "rect.logvar", c.rect_hidden, dim, rng);
  add_linear_params(ps, "rect.dec", dim, c.rect_hidden, rng);
  add_linear_params(ps, "rect.out", c.rect_hidden, dim, rng);
  ps.at("rect.mu.b").value.setConstant(c.rect_gate_bias);
  ps.at("rect.logvar.b").value.setConstant(c.rect_log_var_bias);
}

Var reparameterize(Tape& t, Var mu, Var log_var, Rng& rng, LatentMode mode) {
  if (mode == LatentMode::kMean) return mu;
  const Matrix& m = t.value(mu);
  Matrix eps(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
  Var std_dev = op::exp(t, op::scale(t, log_var, 0.5));
  return op::add(t, mu, op::mul(t, std_dev, t.constant(std::move(eps))));
}

namespace {

Var dense(Bindings& b, const std::string& name, Var x) {
  return op::linear(b.tape(), x, b(name + ".w"), b(name + ".b"));
}

}  // namespace

RoiOutputs roi_forward(Bindings& b, Var pooled, Rng& rng, LatentMode mode) {
  Tape& t = b.tape();
  if (!t.value(pooled).allFinite()) {
    throw Error(ErrorKind::kNumeric, "non-finite pooled feature entering the ROI encoder");
  }
  Var h = op::tanh(t, dense(b, "roi.enc", pooled));
  Var mu = dense(b, "roi.mu", h);
  Var lv = dense(b, "roi.logvar", h);
  Var z = reparameterize(t, mu, lv, rng, mode);
  Var units = op::sigmoid(t, dense(b, "roi.out", op::tanh(t, dense(b, "roi.dec", z))));
  Var window = op::ordered_box(t, units);
  if (!t.value(window).allFinite()) {
    throw Error(ErrorKind::kNumeric, "non-finite ROI window prediction");
  }
  return {window, mu, lv};
}

RectifierOutputs rectify_prototypes(Bindings& b, Var prototypes, Rng& rng, LatentMode mode) {
  Tape& t = b.tape();
  Var h = op::tanh(t, dense(b, "rect.enc", prototypes));
  Var mu = dense(b, "rect.mu", h);
  Var lv = dense(b, "rect.logvar", h);
  Var z = reparameterize(t, mu, lv, rng, mode);
  Var rectified = op::mul(t, prototypes, op::sigmoid(t, z));
  Var recon = dense(b, "rect.out", op::tanh(t, dense(b, "rect.dec", z)));
  return {rectified, mu, lv, recon};
}

RoiPrediction roi_forward(const ParameterSet& params, const RowVector& pooled, Rng& rng,
                          LatentMode mode) {
  Tape t(false);
  Bindings b(t, params);
  const auto out = roi_forward(b, t.constant(pooled), rng, mode);
  const Matrix& w = t.value(out.window);
  return {{w(0, 0), w(0, 1), w(0, 2), w(0, 3)},
          {t.value(out.mu).row(0), t.value(out.log_var).row(0)}};
}

RectifiedPrototype rectify_prototype(const ParameterSet& params, const RowVector& prototype,
                                     Rng& rng, LatentMode mode) {
  Tape t(false);
  Bindings b(t, params);
  const auto out = rectify_prototypes(b, t.constant(prototype), rng, mode);
  return {t.value(out.rectified).row(0),
          {t.value(out.mu).row(0), t.value(out.log_var).row(0)},
          t.value(out.reconstruction).row(0)};
}

}  // namespace fskv

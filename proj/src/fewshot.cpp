#include "fskv/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <utility>

#include "fskv/error.hpp"

namespace fskv {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string granularity_name(PrototypeGranularity g) {
  return g == PrototypeGranularity::kTag ? "tag" : "entity_role";
}

PrototypeGranularity parse_granularity(const std::string& s) {
  if (s == "tag") return PrototypeGranularity::kTag;
  if (s == "entity_role") return PrototypeGranularity::kEntityRole;
  throw Error(ErrorKind::kConfig, "unknown prototype granularity '" + s + "'");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  return {{"encoder", encoder_config_to_json(c.encoder)},
          {"roi_hidden", c.variational.roi_hidden},
          {"roi_latent", c.variational.roi_latent},
          {"rect_hidden", c.variational.rect_hidden},
          {"rect_gate_bias", c.variational.rect_gate_bias},
          {"rect_log_var_bias", c.variational.rect_log_var_bias},
          {"use_roi", c.use_roi},
          {"use_rectification", c.use_rectification},
          {"granularity", granularity_name(c.granularity)}};
}

ModelConfig model_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, "model config must be an object");
  ModelConfig c;
  if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"));
  c.variational.roi_hidden = get_or(j, "roi_hidden", c.variational.roi_hidden);
  c.variational.roi_latent = get_or(j, "roi_latent", c.variational.roi_latent);
  c.variational.rect_hidden = get_or(j, "rect_hidden", c.variational.rect_hidden);
  c.variational.rect_gate_bias = get_or(j, "rect_gate_bias", c.variational.rect_gate_bias);
  c.variational.rect_log_var_bias =
      get_or(j, "rect_log_var_bias", c.variational.rect_log_var_bias);
  c.use_roi = get_or(j, "use_roi", c.use_roi);
  c.use_rectification = get_or(j, "use_rectification", c.use_rectification);
  c.granularity = parse_granularity(get_or<std::string>(j, "granularity", "entity_role"));
  if (c.variational.roi_hidden <= 0 || c.variational.roi_latent <= 0 ||
      c.variational.rect_hidden <= 0) {
    throw Error(ErrorKind::kConfig, "variational dims must be positive");
  }
  return c;
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  validate_encoder_config(config.encoder);
  Model m;
  m.config = config;
  m.seed = seed;
  Rng rng(derive_seed(seed, Stream::kInit));
  add_encoder_params(m.params, config.encoder, rng);
  if (config.use_roi) add_roi_params(m.params, config.encoder.dim, config.variational, rng);
  if (config.use_rectification) {
    add_rectifier_params(m.params, config.encoder.dim, config.variational, rng);
  }
  return m;
}

void validate_train_config(const TrainConfig& c) {
  if (c.shape.n <= 0 || c.shape.n % 2 != 0) {
    throw Error(ErrorKind::kConfig, "N must be a positive even number");
  }
  if (c.shape.k < 1 || c.shape.k_prime < 1) {
    throw Error(ErrorKind::kConfig, "K and K' must be at least 1");
  }
  if (c.iterations < 0) throw Error(ErrorKind::kConfig, "iterations must be >= 0");
  if (!(c.alpha >= 0) || !(c.beta >= 0)) {
    throw Error(ErrorKind::kConfig, "alpha and beta must be >= 0");
  }
  if (!(c.learning_rate >= 0) || !(c.weight_decay >= 0)) {
    throw Error(ErrorKind::kConfig, "learning rate and weight decay must be >= 0");
  }
  if (!(c.shrink_probability >= 0 && c.shrink_probability <= 1)) {
    throw Error(ErrorKind::kConfig, "shrink probability must lie in [0, 1]");
  }
  if (!(c.shrink_ratio >= 0 && c.shrink_ratio <= 0.3)) {
    throw Error(ErrorKind::kConfig, "shrink ratio must lie in [0, 0.3]");
  }
  if (c.log_interval <= 0) throw Error(ErrorKind::kConfig, "log interval must be positive");
  validate_encoder_config(c.model.encoder);
}

json train_config_to_json(const TrainConfig& c) {
  return {{"n", c.shape.n},
          {"k", c.shape.k},
          {"k_prime", c.shape.k_prime},
          {"iterations", c.iterations},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"seed", c.seed},
          {"teacher_forcing", c.teacher_forcing},
          {"shrink_augment", c.shrink_augment},
          {"shrink_probability", c.shrink_probability},
          {"shrink_ratio", c.shrink_ratio},
          {"log_interval", c.log_interval},
          {"model", model_config_to_json(c.model)}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, "train config must be an object");
  TrainConfig c;
  c.shape.n = get_or(j, "n", c.shape.n);
  c.shape.k = get_or(j, "k", c.shape.k);
  c.shape.k_prime = get_or(j, "k_prime", c.shape.k_prime);
  c.iterations = get_or(j, "iterations", c.iterations);
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
  c.weight_decay = get_or(j, "weight_decay", c.weight_decay);
  c.alpha = get_or(j, "alpha", c.alpha);
  c.beta = get_or(j, "beta", c.beta);
  c.seed = get_or(j, "seed", c.seed);
  c.teacher_forcing = get_or(j, "teacher_forcing", c.teacher_forcing);
  c.shrink_augment = get_or(j, "shrink_augment", c.shrink_augment);
  c.shrink_probability = get_or(j, "shrink_probability", c.shrink_probability);
  c.shrink_ratio = get_or(j, "shrink_ratio", c.shrink_ratio);
  c.log_interval = get_or(j, "log_interval", c.log_interval);
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  validate_train_config(c);
  return c;
}

json loss_to_json(const LossBreakdown& l) {
  return {{"l_rec", l.l_rec}, {"l_kl1", l.l_kl1}, {"l_re", l.l_re}, {"l_kl2", l.l_kl2},
          {"l_cls", l.l_cls}, {"total", l.total}, {"alpha", l.alpha}, {"beta", l.beta}};
}

// ---------------------------------------------------------------------------
// Episode classes

EpisodeClasses episode_classes(const Episode& episode, PrototypeGranularity granularity) {
  EpisodeClasses out;
  out.names.push_back("O");
  out.info.push_back({});
  for (const auto& g : episode.groups) {
    for (Role role : {Role::kKey, Role::kValue}) {
      const std::string base = g.relation_type + "/" + std::string(role_name(role));
      if (granularity == PrototypeGranularity::kEntityRole) {
        out.names.push_back(base);
        out.info.push_back({g.relation_type, role, std::nullopt});
      } else {
        out.names.push_back("B-" + base);
        out.info.push_back({g.relation_type, role, Bio::kBegin});
        out.names.push_back("I-" + base);
        out.info.push_back({g.relation_type, role, Bio::kInside});
      }
    }
  }
  return out;
}

std::vector<int> token_classes(const Document& doc, const EpisodeClasses& classes) {
  std::vector<int> out(doc.tokens.size(), 0);
  for (const auto& rel : doc.relations) {
    for (const auto* spans : {&rel.key_spans, &rel.value_spans}) {
      for (const auto& s : *spans) {
        for (std::size_t i = s.start; i < s.end && i < out.size(); ++i) {
          const Bio bio = i == s.start ? Bio::kBegin : Bio::kInside;
          int found = -1;
          for (std::size_t c = 1; c < classes.size(); ++c) {
            const auto& info = classes.info[c];
            if (info.entity_type == s.entity_type && info.role == s.role &&
                (!info.bio || *info.bio == bio)) {
              found = static_cast<int>(c);
              break;
            }
          }
          out[i] = found;
        }
      }
    }
  }
  return out;
}

std::vector<EntitySpan> spans_from_classes(std::span<const int> predicted,
                                           const EpisodeClasses& classes) {
  std::vector<EntitySpan> out;
  const EpisodeClasses::Info* open = nullptr;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const int c = predicted[i];
    const auto* info = c > 0 ? &classes.info[static_cast<std::size_t>(c)] : nullptr;
    bool continues = false;
    if (info && open && !out.empty() && out.back().end == i &&
        info->entity_type == open->entity_type && info->role == open->role) {
      // Merged classes continue any same-class run; tag classes need an I.
      continues = !info->bio || *info->bio == Bio::kInside;
    }
    if (continues) {
      out.back().end = i + 1;
    } else if (info) {
      out.push_back({i, i + 1, info->role, info->entity_type});
    }
    open = info;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prototypes and classification

PrototypeSet compute_prototypes(std::span<const Matrix> support_features,
                                std::span<const std::vector<int>> support_classes,
                                const std::vector<std::string>& class_names) {
  if (support_features.size() != support_classes.size()) {
    throw Error(ErrorKind::kEpisode, "support features and tags are misaligned");
  }
  const auto num = static_cast<Eigen::Index>(class_names.size());
  if (num < 2) throw Error(ErrorKind::kEpisode, "an episode needs at least two classes");
  Eigen::Index dim = -1;
  for (const auto& f : support_features) {
    if (dim < 0) dim = f.cols();
    if (f.cols() != dim) throw Error(ErrorKind::kEpisode, "support feature widths differ");
  }
  if (dim < 0) throw Error(ErrorKind::kEpisode, "empty support set");
  PrototypeSet out;
  out.classes = class_names;
  out.prototypes = Matrix::Zero(num, dim);
  std::vector<double> counts(class_names.size(), 0.0);
  for (std::size_t d = 0; d < support_features.size(); ++d) {
    const auto& f = support_features[d];
    const auto& cls = support_classes[d];
    if (static_cast<std::size_t>(f.rows()) != cls.size()) {
      throw Error(ErrorKind::kEpisode, "support features and tags are misaligned");
    }
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      const int c = cls[static_cast<std::size_t>(i)];
      if (c < 0) continue;
      out.prototypes.row(c) += f.row(i);
      counts[static_cast<std::size_t>(c)] += 1.0;
    }
  }
  for (Eigen::Index c = 0; c < num; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw Error(ErrorKind::kEpisode,
                  "class '" + class_names[static_cast<std::size_t>(c)] + "' has no support token");
    }
    out.prototypes.row(c) /= counts[static_cast<std::size_t>(c)];
  }
  return out;
}

Matrix distances(const PrototypeSet& p, const Matrix& q) {
  const Matrix& protos = p.rectified.size() > 0 ? p.rectified : p.prototypes;
  if (protos.cols() != q.cols()) {
    throw Error(ErrorKind::kEpisode, "query feature width " + std::to_string(q.cols()) +
                                         " differs from prototype width " +
                                         std::to_string(protos.cols()));
  }
  Matrix d(q.rows(), protos.rows());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index c = 0; c < protos.rows(); ++c) d(i, c) = (q.row(i) - protos.row(c)).norm();
  }
  return d;
}

Classification classify(const Matrix& d) {
  Classification out;
  out.probabilities.resize(d.rows(), d.cols());
  out.labels.resize(static_cast<std::size_t>(d.rows()));
  for (Eigen::Index r = 0; r < d.rows(); ++r) {
    const double m = d.row(r).minCoeff();
    out.probabilities.row(r) = (-(d.row(r).array() - m)).exp().matrix();
    out.probabilities.row(r) /= out.probabilities.row(r).sum();
    int best = 0;
    for (Eigen::Index c = 1; c < d.cols(); ++c) {
      if (d(r, c) < d(r, best)) best = static_cast<int>(c);
    }
    out.labels[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

std::vector<int> nnshot_classify(std::span<const Matrix> support_features,
                                 std::span<const std::vector<int>> support_classes,
                                 const Matrix& q) {
  std::vector<int> out(static_cast<std::size_t>(q.rows()), -1);
  std::vector<double> best(out.size(), std::numeric_limits<double>::infinity());
  for (std::size_t d = 0; d < support_features.size(); ++d) {
    const auto& f = support_features[d];
    for (Eigen::Index s = 0; s < f.rows(); ++s) {
      const int c = support_classes[d][static_cast<std::size_t>(s)];
      if (c < 0) continue;
      for (Eigen::Index i = 0; i < q.rows(); ++i) {
        const double dist = (q.row(i) - f.row(s)).squaredNorm();
        auto& b = best[static_cast<std::size_t>(i)];
        auto& o = out[static_cast<std::size_t>(i)];
        if (dist < b || (dist == b && c < o)) {
          b = dist;
          o = c;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Episode forward pass

namespace {

struct CopyFeatures {
  Var features;
  std::optional<Var> l_rec;
  std::optional<Var> l_kl1;
};

// `training` selects sampled latents and golden-window supervision.
CopyFeatures encode_copy(Bindings& b, const Model& m, const MaskedCopy& copy, bool support,
                         const TrainConfig* training, Rng& rng) {
  Tape& t = b.tape();
  const auto& enc = m.config.encoder;
  const EncoderInput input = prepare_inputs(copy.document, enc.vocab);
  if (input.size() == 0) {
    throw Error(ErrorKind::kEpisode, "document '" + copy.source_doc_id + "' has no tokens");
  }
  if (!m.config.use_roi) return {encode(b, enc, input), {}, {}};

  const LatentMode mode = training ? LatentMode::kSample : LatentMode::kMean;
  const Var plain = encode(b, enc, input);
  const RoiOutputs roi = roi_forward(b, op::mean_rows(t, plain), rng, mode);
  CopyFeatures out;
  Var window = roi.window;
  if (training) {
    const UnitWindow golden = golden_window(copy.document, copy.relation_type).unit();
    Matrix g(1, 4);
    g << golden[0], golden[1], golden[2], golden[3];
    out.l_rec = op::mse(t, roi.window, t.constant(g));
    out.l_kl1 = op::kl_std_normal(t, roi.mu, roi.log_var);
    if (support && training->teacher_forcing) {
      UnitWindow injected = golden;
      if (training->shrink_augment && rng.bernoulli(training->shrink_probability)) {
        injected = shrink_window_augment(golden, training->shrink_ratio, rng);
      }
      Matrix w(1, 4);
      w << injected[0], injected[1], injected[2], injected[3];
      window = t.constant(w);
    }
  }
  const Var full = encode(b, enc, input, window);
  out.features = op::slice_rows(t, full, 0, static_cast<Eigen::Index>(input.size()));
  return out;
}

struct LossVars {
  Var l_rec, l_kl1, l_re, l_kl2, l_cls, total;
  Var prototypes;
};

Var zero(Tape& t) { return t.constant(Matrix::Zero(1, 1)); }

Var mean_of(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) return zero(t);
  const std::vector<double> w(parts.size(), 1.0 / static_cast<double>(parts.size()));
  return op::linear_combination(t, parts, w);
}

void check_term(const Tape& t, Var v, const char* name) {
  if (!std::isfinite(t.scalar(v))) {
    throw Error(ErrorKind::kNumeric, std::string("loss term ") + name + " is not finite");
  }
}

// The reconstruction target is the prototype value with no gradient; a
// `frozen_target` replaces it so finite differences see the same surrogate.
LossVars forward_loss(Bindings& b, const Model& m, const Episode& ep, Rng& rng,
                      const TrainConfig& cfg, const Matrix* frozen_target = nullptr) {
  Tape& t = b.tape();
  const EpisodeClasses classes = episode_classes(ep, m.config.granularity);
  std::vector<Var> recs, kls, support_feats, query_feats;
  std::vector<int> support_cls, query_cls;
  for (const auto& g : ep.groups) {
    for (const auto& c : g.support) {
      auto f = encode_copy(b, m, c, true, &cfg, rng);
      support_feats.push_back(f.features);
      if (f.l_rec) recs.push_back(*f.l_rec);
      if (f.l_kl1) kls.push_back(*f.l_kl1);
      const auto cls = token_classes(c.document, classes);
      support_cls.insert(support_cls.end(), cls.begin(), cls.end());
    }
  }
  for (const auto& g : ep.groups) {
    for (const auto& c : g.query) {
      auto f = encode_copy(b, m, c, false, &cfg, rng);
      query_feats.push_back(f.features);
      if (f.l_rec) recs.push_back(*f.l_rec);
      if (f.l_kl1) kls.push_back(*f.l_kl1);
      const auto cls = token_classes(c.document, classes);
      query_cls.insert(query_cls.end(), cls.begin(), cls.end());
    }
  }
  std::vector<int> counts(classes.size(), 0);
  for (int c : support_cls) {
    if (c >= 0) ++counts[static_cast<std::size_t>(c)];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw Error(ErrorKind::kEpisode, "class '" + classes.names[c] + "' has no support token");
    }
  }

  LossVars out;
  out.l_rec = mean_of(t, recs);
  out.l_kl1 = mean_of(t, kls);
  const Var support = op::concat_rows(t, support_feats);
  const Var protos =
      op::class_means(t, support, support_cls, static_cast<int>(classes.size()));
  out.prototypes = protos;
  Var used = protos;
  if (m.config.use_rectification) {
    const auto r = rectify_prototypes(b, protos, rng, LatentMode::kSample);
    used = r.rectified;
    const Matrix target = frozen_target ? *frozen_target : t.value(protos);
    out.l_re = op::mse(t, r.reconstruction, t.constant(target));
    out.l_kl2 = op::kl_std_normal(t, r.mu, r.log_var);
  } else {
    out.l_re = zero(t);
    out.l_kl2 = zero(t);
  }
  const Var query = op::concat_rows(t, query_feats);
  const Var logits = op::scale(t, op::pairwise_distance(t, query, used), -1.0);
  out.l_cls = op::cross_entropy(t, logits, query_cls);

  check_term(t, out.l_rec, "l_rec");
  check_term(t, out.l_kl1, "l_kl1");
  check_term(t, out.l_re, "l_re");
  check_term(t, out.l_kl2, "l_kl2");
  check_term(t, out.l_cls, "l_cls");
  const std::array<Var, 5> parts{out.l_rec, out.l_kl1, out.l_re, out.l_kl2, out.l_cls};
  const std::array<double, 5> coeffs{1.0, cfg.alpha, 1.0, cfg.beta, 1.0};
  out.total = op::linear_combination(t, parts, coeffs);
  return out;
}

LossBreakdown breakdown(const Tape& t, const LossVars& v, const TrainConfig& cfg) {
  LossBreakdown l;
  l.l_rec = t.scalar(v.l_rec);
  l.l_kl1 = t.scalar(v.l_kl1);
  l.l_re = t.scalar(v.l_re);
  l.l_kl2 = t.scalar(v.l_kl2);
  l.l_cls = t.scalar(v.l_cls);
  l.total = t.scalar(v.total);
  l.alpha = cfg.alpha;
  l.beta = cfg.beta;
  return l;
}

}  // namespace

LossBreakdown episode_loss(const Model& model, const Episode& episode, Rng& rng,
                           const TrainConfig& config) {
  Tape t(false);
  Bindings b(t, model.params);
  return breakdown(t, forward_loss(b, model, episode, rng, config), config);
}

// ---------------------------------------------------------------------------
// Optimisation

OptimizerState init_optimizer(const ParameterSet& params, double learning_rate,
                              double weight_decay) {
  OptimizerState s;
  s.learning_rate = learning_rate;
  s.weight_decay = weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& v = params[i].value;
    s.first_moment.push_back(Matrix::Zero(v.rows(), v.cols()));
    s.second_moment.push_back(Matrix::Zero(v.rows(), v.cols()));
  }
  return s;
}

void adam_update(ParameterSet& params, OptimizerState& s) {
  if (s.first_moment.size() != params.size()) {
    throw Error(ErrorKind::kConfig, "optimizer state does not match the parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].grad.allFinite()) {
      throw Error(ErrorKind::kNumeric,
                  "non-finite gradient for parameter '" + params[i].name + "'");
    }
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto m = s.first_moment[i].array();
    auto v2 = s.second_moment[i].array();
    const auto g = p.grad.array();
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v2 = s.beta2 * v2 + (1.0 - s.beta2) * g.square();
    p.value.array() -= s.learning_rate * ((m / c1) / ((v2 / c2).sqrt() + s.epsilon) +
                                          s.weight_decay * p.value.array());
  }
}

LossBreakdown train_step(Model& model, OptimizerState& s, const Episode& episode,
                         const TrainConfig& config, Rng& rng) {
  if (s.first_moment.size() != model.params.size()) {
    throw Error(ErrorKind::kConfig, "optimizer state does not match the parameters");
  }
  model.params.zero_grad();
  Tape t(true);
  Bindings b(t, model.params);
  const LossVars v = forward_loss(b, model, episode, rng, config);
  t.backward(v.total);
  adam_update(model.params, s);
  return breakdown(t, v, config);
}

TrainResult train(const Corpus& corpus, const TrainConfig& config, const TrainLogger& log) {
  validate_train_config(config);
  TrainResult out;
  out.model = init_model(config.model, config.seed);
  if (config.iterations == 0) return out;
  const auto extended = extend_corpus(corpus);
  OptimizerState state =
      init_optimizer(out.model.params, config.learning_rate, config.weight_decay);
  Rng sampling(derive_seed(config.seed, Stream::kSampling));
  out.history.reserve(static_cast<std::size_t>(config.iterations));
  for (int step = 0; step < config.iterations; ++step) {
    const Episode ep = sample_episode(extended, config.shape, sampling);
    Rng noise(derive_seed(config.seed, Stream::kNoise, static_cast<std::uint64_t>(step)));
    out.history.push_back(train_step(out.model, state, ep, config, noise));
    if (log && (step + 1) % config.log_interval == 0) log(step + 1, out.history.back());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Window regression

namespace {

struct WindowTarget {
  const Document* document;
  Matrix golden;  // 1 x 4 unit window
};

std::vector<WindowTarget> window_targets(std::span<const Document> documents) {
  std::vector<WindowTarget> out;
  for (const auto& d : documents) {
    for (const auto& r : d.relations) {
      const UnitWindow g = golden_window(d, r.relation_type).unit();
      Matrix m(1, 4);
      m << g[0], g[1], g[2], g[3];
      out.push_back({&d, std::move(m)});
    }
  }
  return out;
}

}  // namespace

std::vector<double> fit_roi(Model& model, std::span<const Document> documents,
                            const RoiFitConfig& config) {
  if (!model.config.use_roi) throw Error(ErrorKind::kConfig, "the model has no ROI module");
  if (config.steps < 0 || config.batch < 0 || !(config.learning_rate > 0.0) ||
      config.weight_decay < 0.0 || config.alpha < 0.0) {
    throw Error(ErrorKind::kConfig, "invalid ROI fit settings");
  }
  const auto targets = window_targets(documents);
  if (targets.empty()) throw Error(ErrorKind::kConfig, "no golden windows to fit");
  const auto& enc = model.config.encoder;
  std::vector<EncoderInput> inputs;
  for (const auto& tg : targets) inputs.push_back(prepare_inputs(*tg.document, enc.vocab));

  OptimizerState state = init_optimizer(model.params, config.learning_rate, config.weight_decay);
  Rng sampling(derive_seed(config.seed, Stream::kSampling));
  const std::size_t batch = config.batch == 0
                                ? targets.size()
                                : std::min<std::size_t>(config.batch, targets.size());
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    std::vector<std::size_t> picked(batch);
    if (batch == targets.size()) {
      std::iota(picked.begin(), picked.end(), std::size_t{0});
    } else {
      for (auto& i : picked) i = sampling.below(targets.size());
    }
    Rng noise(derive_seed(config.seed, Stream::kNoise, static_cast<std::uint64_t>(step)));
    model.params.zero_grad();
    Tape t(true);
    Bindings b(t, model.params);
    std::vector<Var> terms;
    std::vector<double> weights;
    for (auto i : picked) {
      const Var h = encode(b, enc, inputs[i]);
      const RoiOutputs roi = roi_forward(b, op::mean_rows(t, h), noise, config.latent);
      terms.push_back(op::mse(t, roi.window, t.constant(targets[i].golden)));
      terms.push_back(op::kl_std_normal(t, roi.mu, roi.log_var));
      weights.push_back(1.0 / static_cast<double>(batch));
      weights.push_back(config.alpha / static_cast<double>(batch));
    }
    const Var loss = op::linear_combination(t, terms, weights);
    if (!std::isfinite(t.scalar(loss))) {
      throw Error(ErrorKind::kNumeric, "ROI fit loss is not finite");
    }
    losses.push_back(t.scalar(loss));
    t.backward(loss);
    state.learning_rate = config.learning_rate * 0.5 *
                          (1.0 + std::cos(std::numbers::pi * step / config.steps));
    adam_update(model.params, state);
  }
  return losses;
}

double mean_window_iou(const Model& model, std::span<const Document> documents) {
  if (!model.config.use_roi) throw Error(ErrorKind::kConfig, "the model has no ROI module");
  const auto targets = window_targets(documents);
  if (targets.empty()) throw Error(ErrorKind::kConfig, "no golden windows to score");
  Rng unused(0);
  double sum = 0.0;
  for (const auto& tg : targets) {
    const Matrix h = encode(model.params, model.config.encoder,
                            prepare_inputs(*tg.document, model.config.encoder.vocab));
    const RowVector pooled = h.colwise().mean();
    const UnitWindow w = roi_forward(model.params, pooled, unused, LatentMode::kMean).window;
    const auto& g = tg.golden;
    sum += window_iou(w, UnitWindow{g(0, 0), g(0, 1), g(0, 2), g(0, 3)});
  }
  return sum / static_cast<double>(targets.size());
}

// ---------------------------------------------------------------------------
// Gradient check

bool GradCheckReport::passed() const {
  return !entries.empty() &&
         std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

GradCheckReport grad_check(const Model& model, const Episode& episode,
                           const TrainConfig& config, double step, double tolerance,
                           std::uint64_t seed, int coordinates,
                           const std::optional<std::string>& corrupt) {
  Model work = model;
  const std::uint64_t noise_seed = derive_seed(seed, Stream::kNoise);
  Matrix target;
  auto loss_at = [&] {
    Rng rng(noise_seed);
    Tape t(false);
    Bindings b(t, std::as_const(work.params));
    return t.scalar(forward_loss(b, work, episode, rng, config, &target).total);
  };

  work.params.zero_grad();
  {
    Rng rng(noise_seed);
    Tape t(true);
    Bindings b(t, work.params);
    const LossVars v = forward_loss(b, work, episode, rng, config);
    target = t.value(v.prototypes);
    t.backward(v.total);
  }
  if (corrupt) {
    auto& g = work.params.at(*corrupt).grad;
    g = (2.0 * g.array() + 1e-2).matrix();
  }

  GradCheckReport report;
  report.step = step;
  report.tolerance = tolerance;
  Rng pick(derive_seed(seed, Stream::kGradCheck));
  for (std::size_t a = 0; a < work.params.size(); ++a) {
    auto& p = work.params[a];
    const auto size = static_cast<std::size_t>(p.value.size());
    std::vector<std::size_t> chosen;
    if (size <= static_cast<std::size_t>(coordinates)) {
      chosen.resize(size);
      std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    } else {
      // Coordinates with a nonzero analytic gradient first, so sparse arrays
      // such as embedding tables are exercised where they matter.
      std::vector<std::size_t> nonzero, rest;
      for (std::size_t i = 0; i < size; ++i) {
        (p.grad.data()[i] != 0.0 ? nonzero : rest).push_back(i);
      }
      pick.shuffle(nonzero.begin(), nonzero.end());
      pick.shuffle(rest.begin(), rest.end());
      for (std::size_t i = 0; i < nonzero.size() && chosen.size() < std::size_t(coordinates); ++i) {
        chosen.push_back(nonzero[i]);
      }
      for (std::size_t i = 0; i < rest.size() && chosen.size() < std::size_t(coordinates); ++i) {
        chosen.push_back(rest[i]);
      }
    }
    GradCheckEntry e;
    e.name = p.name;
    for (auto i : chosen) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + step;
      const double up = loss_at();
      x = saved - step;
      const double down = loss_at();
      x = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p.grad.data()[i];
      const double denom = std::max(std::abs(analytic) + std::abs(numeric), kGradCheckFloor);
      e.max_relative_error = std::max(e.max_relative_error, std::abs(analytic - numeric) / denom);
      ++e.coordinates;
    }
    e.passed = e.max_relative_error <= tolerance;
    report.entries.push_back(std::move(e));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Inference

Matrix copy_features(const Model& model, const MaskedCopy& copy) {
  Rng unused(0);
  Tape t(false);
  Bindings b(t, model.params);
  return t.value(encode_copy(b, model, copy, false, nullptr, unused).features);
}

EpisodeInference infer_episode(const Model& model, const Episode& episode, Decoder decoder) {
  EpisodeInference out;
  out.classes = episode_classes(episode, model.config.granularity);
  Rng unused(0);
  Tape t(false);
  Bindings b(t, model.params);

  std::vector<Matrix> support_feats;
  std::vector<std::vector<int>> support_cls;
  for (const auto& g : episode.groups) {
    for (const auto& c : g.support) {
      support_feats.push_back(t.value(encode_copy(b, model, c, true, nullptr, unused).features));
      support_cls.push_back(token_classes(c.document, out.classes));
    }
  }
  PrototypeSet protos = compute_prototypes(support_feats, support_cls, out.classes.names);
  if (model.config.use_rectification) {
    const auto r = rectify_prototypes(b, t.constant(protos.prototypes), unused, LatentMode::kMean);
    protos.rectified = t.value(r.rectified);
  }
  for (const auto& g : episode.groups) {
    for (const auto& c : g.query) {
      const Matrix q = t.value(encode_copy(b, model, c, false, nullptr, unused).features);
      if (decoder == Decoder::kNearestNeighbor) {
        out.query_labels.push_back(nnshot_classify(support_feats, support_cls, q));
      } else {
        out.query_labels.push_back(classify(distances(protos, q)).labels);
      }
    }
  }
  return out;
}

}  // namespace fskv

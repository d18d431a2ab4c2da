#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fskv/error.hpp"
#include "fskv/fewshot.hpp"
#include "support.hpp"

using namespace fskv;
using namespace fskv::testing;

namespace {

ModelConfig tiny_model(bool roi = true, bool rect = true) {
  ModelConfig m;
  m.encoder = {8, 1, 2, 97};
  m.variational.roi_hidden = 16;
  m.variational.roi_latent = 4;
  m.variational.rect_hidden = 16;
  m.use_roi = roi;
  m.use_rectification = rect;
  return m;
}

TrainConfig tiny_train(bool roi = true, bool rect = true) {
  TrainConfig c;
  c.model = tiny_model(roi, rect);
  c.iterations = 20;
  c.log_interval = 5;
  c.seed = 3;
  return c;
}

const Corpus& small_corpus() {
  static const Corpus c = generate_synthetic(default_synthetic_config(4, 24, 11));
  return c;
}

Episode small_episode(std::uint64_t seed, EpisodeShape shape = {4, 1, 1}) {
  Rng rng(seed);
  return sample_episode(extend_corpus(small_corpus()), shape, rng);
}

Matrix rows(std::initializer_list<std::initializer_list<double>> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()),
           static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : values) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST_CASE("prototypes are class means of support tokens") {
  const std::vector<Matrix> feats{rows({{1, 0}, {3, 2}, {9, 9}}), rows({{5, 4}})};
  const std::vector<std::vector<int>> cls{{0, 1, -1}, {1}};
  const auto p = compute_prototypes(feats, cls, {"O", "A"});
  CHECK(p.prototypes == rows({{1, 0}, {4, 3}}));
  CHECK(p.rectified.size() == 0);

  CHECK_THROWS_AS(compute_prototypes(feats, cls, {"O", "A", "B"}), Error);
  CHECK_THROWS_AS(compute_prototypes(feats, cls, {"O"}), Error);
  const std::vector<std::vector<int>> short_cls{{0, 1}, {1}};
  CHECK_THROWS_AS(compute_prototypes(feats, short_cls, {"O", "A"}), Error);
}

TEST_CASE("distances and classification") {
  PrototypeSet p{{"O", "A"}, rows({{0, 0}, {6, 8}}), {}};
  const Matrix d = distances(p, rows({{3, 4}, {0, 0}}));
  CHECK(d == rows({{5, 5}, {0, 10}}));
  const auto c = classify(d);
  // Equal distances resolve to the lower class index.
  CHECK(c.labels == std::vector<int>{0, 0});
  CHECK(c.probabilities(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c.probabilities(1, 1) == doctest::Approx(1 / (1 + std::exp(10.0))).epsilon(1e-12));

  p.rectified = rows({{6, 8}, {0, 0}});
  CHECK(classify(distances(p, rows({{0, 0}}))).labels == std::vector<int>{1});
  CHECK_THROWS_AS(distances(p, rows({{0, 0, 0}})), Error);
}

TEST_CASE("nearest-neighbour decoding matches brute force") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Matrix> feats;
    std::vector<std::vector<int>> cls;
    for (int d = 0; d < 3; ++d) {
      Matrix f(5, 3);
      std::vector<int> c;
      for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
      for (int i = 0; i < 5; ++i) c.push_back(static_cast<int>(rng.between(-1, 3)));
      feats.push_back(f);
      cls.push_back(c);
    }
    Matrix q(4, 3);
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = rng.normal();
    const auto got = nnshot_classify(feats, cls, q);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      double best = INFINITY;
      int label = -1;
      for (std::size_t d = 0; d < feats.size(); ++d) {
        for (Eigen::Index s = 0; s < 5; ++s) {
          if (cls[d][static_cast<std::size_t>(s)] < 0) continue;
          const double dist = (q.row(i) - feats[d].row(s)).norm();
          if (dist < best) {
            best = dist;
            label = cls[d][static_cast<std::size_t>(s)];
          }
        }
      }
      CHECK(got[static_cast<std::size_t>(i)] == label);
    }
  }
}

TEST_CASE("with one support token per class nearest-neighbour equals prototypes") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix support(4, 3), q(6, 3);
    for (Eigen::Index i = 0; i < support.size(); ++i) support.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = rng.normal();
    const std::vector<Matrix> feats{support};
    const std::vector<std::vector<int>> cls{{0, 1, 2, 3}};
    const auto p = compute_prototypes(feats, cls, {"O", "A", "B", "C"});
    CHECK(nnshot_classify(feats, cls, q) == classify(distances(p, q)).labels);
  }
}

TEST_CASE("episode classes and token classes") {
  const auto ep = small_episode(4);
  const auto merged = episode_classes(ep, PrototypeGranularity::kEntityRole);
  const auto tags = episode_classes(ep, PrototypeGranularity::kTag);
  REQUIRE(merged.size() == 5);
  REQUIRE(tags.size() == 9);
  const auto& t0 = ep.groups[0].relation_type;
  CHECK(merged.names[0] == "O");
  CHECK(merged.names[1] == t0 + "/Key");
  CHECK(merged.names[2] == t0 + "/Value");
  CHECK(tags.names[1] == "B-" + t0 + "/Key");
  CHECK(tags.names[2] == "I-" + t0 + "/Key");

  auto index_of = [&](const std::string& name) {
    return static_cast<int>(std::find(merged.names.begin(), merged.names.end(), name) -
                            merged.names.begin());
  };
  for (const auto& g : ep.groups) {
    for (const auto& copy : g.support) {
      const auto cls = token_classes(copy.document, merged);
      std::vector<int> expected(cls.size(), 0);
      for (const auto& s : copy.document.all_spans()) {
        const int c = index_of(s.entity_type + "/" + std::string(role_name(s.role)));
        for (std::size_t i = s.start; i < s.end; ++i) expected[i] = c;
      }
      CHECK(cls == expected);
    }
  }
}

TEST_CASE("spans from predicted classes") {
  Episode ep;
  ep.groups.push_back({"A", {}, {}});
  const auto merged = episode_classes(ep, PrototypeGranularity::kEntityRole);
  const std::vector<int> a{0, 1, 1, 2, 0, 2};
  const auto s = spans_from_classes(a, merged);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == span(1, 3, Role::kKey, "A"));
  CHECK(s[1] == span(3, 4, Role::kValue, "A"));
  CHECK(s[2] == span(5, 6, Role::kValue, "A"));

  const auto tags = episode_classes(ep, PrototypeGranularity::kTag);
  // B-key I-key B-key I-value O I-key
  const std::vector<int> b{1, 2, 1, 4, 0, 2};
  const auto t = spans_from_classes(b, tags);
  REQUIRE(t.size() == 4);
  CHECK(t[0] == span(0, 2, Role::kKey, "A"));
  CHECK(t[1] == span(2, 3, Role::kKey, "A"));
  CHECK(t[2] == span(3, 4, Role::kValue, "A"));
  CHECK(t[3] == span(5, 6, Role::kKey, "A"));
}

TEST_CASE("model parameters follow the ablation flags") {
  const auto full = init_model(tiny_model(), 1);
  const auto plain = init_model(tiny_model(false, false), 1);
  CHECK(full.params.contains("roi.mu.w"));
  CHECK(full.params.contains("rect.mu.w"));
  CHECK_FALSE(plain.params.contains("roi.mu.w"));
  CHECK_FALSE(plain.params.contains("rect.mu.w"));
  CHECK(init_model(tiny_model(), 1).params == full.params);
  CHECK_FALSE(init_model(tiny_model(), 2).params == full.params);
}

TEST_CASE("loss breakdown composes the total") {
  auto cfg = tiny_train();
  const auto model = init_model(cfg.model, 5);
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(s);
    const auto l = episode_loss(model, small_episode(s), rng, cfg);
    CHECK(std::abs(l.total - l.composed()) <= 1e-12);
    CHECK(l.l_rec > 0);
    CHECK(l.l_kl1 >= 0);
    CHECK(l.l_kl2 >= 0);
    CHECK(l.l_cls > 0);
  }
  cfg.model = tiny_model(false, false);
  Rng rng(0);
  const auto l = episode_loss(init_model(cfg.model, 5), small_episode(0), rng, cfg);
  CHECK(l.l_rec == 0);
  CHECK(l.l_kl1 == 0);
  CHECK(l.l_re == 0);
  CHECK(l.l_kl2 == 0);
  CHECK(l.total == l.l_cls);
}

TEST_CASE("a zero learning rate leaves the parameters unchanged") {
  auto cfg = tiny_train();
  auto model = init_model(cfg.model, 6);
  const auto before = model.params;
  auto state = init_optimizer(model.params, 0.0, 0.0);
  Rng rng(1);
  train_step(model, state, small_episode(1), cfg, rng);
  CHECK(model.params == before);
  CHECK(state.step == 1);
}

TEST_CASE("repeated steps on one episode drive its loss down") {
  auto cfg = tiny_train(false, false);
  cfg.model.encoder = {16, 1, 2, 97};
  auto model = init_model(cfg.model, 7);
  auto state = init_optimizer(model.params, 3e-3, 0.0);
  const auto ep = small_episode(7);
  Rng rng(1);
  const double first = train_step(model, state, ep, cfg, rng).l_cls;
  double last = first;
  for (int i = 0; i < 100; ++i) last = train_step(model, state, ep, cfg, rng).l_cls;
  // One mean prototype cannot fit the many-mode O class, so the loss
  // plateaus well above zero; most of it is still removed.
  CHECK(last < 0.3 * first);
}

TEST_CASE("training is deterministic and zero iterations return the initial model") {
  const auto cfg = tiny_train();
  int logged = 0;
  const auto a = train(small_corpus(), cfg, [&](int step, const LossBreakdown& l) {
    CHECK(step % cfg.log_interval == 0);
    CHECK(std::abs(l.total - l.composed()) <= 1e-12);
    ++logged;
  });
  CHECK(logged == cfg.iterations / cfg.log_interval);
  const auto b = train(small_corpus(), cfg);
  CHECK(a.model.params == b.model.params);
  CHECK(a.history.size() == 20);

  auto zero = cfg;
  zero.iterations = 0;
  const auto z = train(small_corpus(), zero);
  CHECK(z.history.empty());
  CHECK(z.model.params == init_model(cfg.model, cfg.seed).params);
}

TEST_CASE("train config validation and json") {
  auto cfg = tiny_train();
  cfg.shrink_augment = true;
  CHECK(train_config_to_json(train_config_from_json(train_config_to_json(cfg))) ==
        train_config_to_json(cfg));
  using Mutation = void (*)(TrainConfig&);
  const std::vector<Mutation> mutations{[](TrainConfig& c) { c.iterations = -1; },
                                         [](TrainConfig& c) { c.learning_rate = -1; },
                                         [](TrainConfig& c) { c.shrink_ratio = 0.5; },
                                         [](TrainConfig& c) { c.shape.n = 3; },
                                         [](TrainConfig& c) { c.model.encoder.heads = 3; }};
  for (Mutation bad : mutations) {
    auto c = tiny_train();
    bad(c);
    try {
      validate_train_config(c);
      FAIL("expected a config error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kConfig);
    }
  }
}

TEST_CASE("analytic gradients match central differences") {
  const auto cfg = tiny_train();
  const auto model = init_model(cfg.model, 8);
  const auto ep = small_episode(8);
  const auto report = grad_check(model, ep, cfg, 1e-4, 1e-3, 9, 8);
  CHECK(report.passed());
  CHECK(report.entries.size() == model.params.size());
  for (const auto& e : report.entries) {
    CHECK_MESSAGE(e.passed, e.name << " error " << e.max_relative_error);
    CHECK(e.coordinates > 0);
  }

  // A corrupted gradient is caught in exactly the named array.
  const auto bad = grad_check(model, ep, cfg, 1e-4, 1e-3, 9, 8, std::string("rect.mu.b"));
  CHECK_FALSE(bad.passed());
  for (const auto& e : bad.entries) CHECK(e.passed == (e.name != "rect.mu.b"));
}

TEST_CASE("inference shapes and decoders") {
  const auto model = init_model(tiny_model(), 10);
  const auto ep = small_episode(10, {4, 2, 2});
  for (auto decoder : {Decoder::kPrototype, Decoder::kNearestNeighbor}) {
    const auto inf = infer_episode(model, ep, decoder);
    REQUIRE(inf.query_labels.size() == 4);
    std::size_t q = 0;
    for (const auto& g : ep.groups) {
      for (const auto& copy : g.query) {
        const auto& labels = inf.query_labels[q++];
        CHECK(labels.size() == copy.document.tokens.size());
        for (int l : labels) CHECK((l >= 0 && l < 5));
      }
    }
    CHECK(infer_episode(model, ep, decoder).query_labels == inf.query_labels);
  }
}

TEST_CASE("window regression fits a handful of documents") {
  auto sc = default_synthetic_config(4, 6, 21);
  sc.relations_per_doc = {1, 1};
  const Corpus corpus = generate_synthetic(sc);
  Model model = init_model(tiny_model(true, false), 4);
  const double before = mean_window_iou(model, corpus.documents);

  RoiFitConfig cfg;
  cfg.steps = 300;
  cfg.learning_rate = 1e-2;
  const auto losses = fit_roi(model, corpus.documents, cfg);
  REQUIRE(losses.size() == 300);
  CHECK(losses.back() < 0.1 * losses.front());
  const double after = mean_window_iou(model, corpus.documents);
  CHECK(after > before);
  CHECK((after >= 0.0 && after <= 1.0));

  // Same settings, same parameters.
  Model again = init_model(tiny_model(true, false), 4);
  CHECK(fit_roi(again, corpus.documents, cfg) == losses);
  CHECK(again.params == model.params);

  // Mini-batches and zero steps.
  Model batched = init_model(tiny_model(true, false), 4);
  cfg.steps = 3;
  cfg.batch = 2;
  CHECK(fit_roi(batched, corpus.documents, cfg).size() == 3);
  cfg.steps = 0;
  Model idle = init_model(tiny_model(true, false), 4);
  CHECK(fit_roi(idle, corpus.documents, cfg).empty());
  CHECK(idle.params == init_model(tiny_model(true, false), 4).params);
}

TEST_CASE("window regression rejects unusable inputs") {
  Model plain = init_model(tiny_model(false, false), 4);
  const auto docs = small_corpus().documents;
  auto kind_of = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kIo;
  };
  CHECK(kind_of([&] { fit_roi(plain, docs, {}); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { mean_window_iou(plain, docs); }) == ErrorKind::kConfig);
  Model roi = init_model(tiny_model(), 4);
  CHECK(kind_of([&] { fit_roi(roi, std::span<const Document>{}, {}); }) == ErrorKind::kConfig);
  RoiFitConfig bad;
  bad.learning_rate = 0.0;
  CHECK(kind_of([&] { fit_roi(roi, docs, bad); }) == ErrorKind::kConfig);
}

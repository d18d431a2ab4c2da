#include <doctest.h>

#include <cmath>

#include "fskv/analysis.hpp"
#include "fskv/error.hpp"

using namespace fskv;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an fskv::Error");
  return ErrorKind::kIo;
}

// classes x copies blocks of random token rows around a class offset.
std::vector<std::vector<Matrix>> random_copies(int classes, int copies, Rng& rng) {
  std::vector<std::vector<Matrix>> out(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    for (int j = 0; j < copies; ++j) {
      Matrix m(1 + static_cast<Eigen::Index>(rng.below(3)), 4);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = c + rng.normal();
      out[static_cast<std::size_t>(c)].push_back(m);
    }
  }
  return out;
}

Model small_model() {
  ModelConfig mc;
  mc.encoder = {8, 1, 2, 97};
  mc.variational.roi_latent = 4;
  return init_model(mc, 1);
}

}  // namespace

TEST_CASE("similarity matrix") {
  Rng rng(1);
  Matrix means(5, 3);
  for (Eigen::Index i = 0; i < means.size(); ++i) means.data()[i] = rng.normal();
  const Matrix s = similarity_matrix(means);
  CHECK(s == s.transpose());
  CHECK(s(1, 3) == doctest::Approx(means.row(1).dot(means.row(3))).epsilon(1e-14));

  const Matrix same = similarity_matrix(Matrix::Constant(3, 2, 2.0));
  CHECK(same == Matrix::Constant(3, 3, 8.0));
}

TEST_CASE("similarity heatmap over a corpus") {
  const auto corpus = generate_synthetic(default_synthetic_config(4, 30, 2));
  const auto r = similarity_heatmap(small_model(), corpus, 10, 3);
  CHECK(r.types == corpus.schema.entity_types);
  CHECK(r.similarity.rows() == 4);
  CHECK(r.similarity == r.similarity.transpose());
  for (int n : r.samples) CHECK((n >= 1 && n <= 10));
  CHECK(similarity_heatmap(small_model(), corpus, 10, 3).similarity == r.similarity);

  auto missing = corpus;
  missing.schema.entity_types.push_back("Unseen");
  CHECK(kind_of([&] { similarity_heatmap(small_model(), missing, 10, 3); }) ==
        ErrorKind::kValidation);
  CHECK(kind_of([&] { similarity_heatmap(small_model(), corpus, 0, 3); }) == ErrorKind::kConfig);
}

TEST_CASE("distance curve normalisation and shape") {
  Rng rng(2);
  const auto copies = random_copies(6, 12, rng);
  const std::vector<int> shots{1, 2, 3, 4, 5};
  const auto r = prototype_distance_curve(copies, shots, 200, 4);
  REQUIRE(r.relative.size() == 5);
  CHECK(r.relative[4] == 1.0);
  for (std::size_t i = 1; i < r.raw.size(); ++i) CHECK(r.raw[i] <= r.raw[i - 1]);
  CHECK(r.relative[0] > 1.0);

  const auto again = prototype_distance_curve(copies, shots, 200, 4);
  CHECK(again.raw == r.raw);
}

TEST_CASE("a prototype over every copy sits on the centroid") {
  Rng rng(3);
  const auto copies = random_copies(3, 5, rng);
  const std::vector<int> shots{5};
  const auto r = prototype_distance_curve(copies, shots, 10, 1);
  CHECK(r.raw[0] <= 1e-12);
}

TEST_CASE("distance curve errors") {
  Rng rng(4);
  const auto copies = random_copies(2, 4, rng);
  const std::vector<int> shots{1, 5};
  CHECK(kind_of([&] { prototype_distance_curve(copies, shots, 10, 1); }) == ErrorKind::kSampling);
  const std::vector<int> no_five{1, 2};
  CHECK(kind_of([&] { prototype_distance_curve(copies, no_five, 10, 1); }) == ErrorKind::kConfig);
  CHECK(kind_of([&] { prototype_distance_curve(copies, shots, 0, 1); }) == ErrorKind::kConfig);
}

TEST_CASE("distance curve from a model") {
  const auto corpus = generate_synthetic(default_synthetic_config(4, 40, 5));
  const std::vector<int> shots{1, 2, 3, 4, 5};
  const auto r = prototype_distance_curve(small_model(), corpus, shots, 50, 6);
  CHECK(r.relative[4] == 1.0);
  CHECK(r.repetitions == 50);
  for (double v : r.raw) CHECK(std::isfinite(v));
  const auto j = distance_curve_to_json(r);
  CHECK(j["relative"].size() == 5);
}

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "fskv/corpus.hpp"
#include "fskv/error.hpp"
#include "fskv/sampler.hpp"
#include "support.hpp"

using namespace fskv;
using namespace fskv::testing;
using nlohmann::json;

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

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fskv_test_" + name);
}

Corpus toy_corpus() {
  Corpus c;
  c.schema.entity_types = {"Cash"};
  c.schema.coarse_groups["Cash"] = "amount";
  c.documents = {cash_doc("a"), cash_doc("b")};
  return c;
}

}  // namespace

TEST_CASE("save and load round trip") {
  const auto path = temp_path("roundtrip.json");
  const Corpus c = generate_synthetic(default_synthetic_config(6, 20, 4));
  save_corpus(c, path);
  CHECK(load_corpus(path) == c);

  save_corpus(Corpus{}, path);
  CHECK(load_corpus(path).documents.empty());
  std::filesystem::remove(path);
}

TEST_CASE("invalid document is named on load") {
  auto j = corpus_to_json(toy_corpus());
  j["documents"][1]["relations"][0]["value_spans"][0] = json::array({2, 9});
  try {
    corpus_from_json(j);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kValidation);
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(kind_of([] { corpus_from_json(json{{"documents", 3}}); }) == ErrorKind::kParse);
  CHECK(kind_of([] { load_corpus(temp_path("missing.json")); }) == ErrorKind::kIo);
}

TEST_CASE("cord-like conversion") {
  const json doc = {
      {"meta", {{"image_size", {{"width", 500}, {"height", 1000}}}}},
      {"valid_line",
       {{{"category", "total.total_price"},
         {"words",
          {{{"text", "TOTAL"}, {"is_key", 1}, {"box", {0, 0, 100, 20}}},
           {{"text", "12.00"}, {"is_key", 0}, {"box", {200, 0, 250, 20}}}}}},
        {{"category", "menu.nm"},
         {"words", {{{"text", "Tea"}, {"is_key", 0}, {"box", {0, 100, 50, 120}}}}}}}}};
  const Corpus c = corpus_from_cord_json(json::array({doc}));
  REQUIRE(c.documents.size() == 1);
  const auto& d = c.documents[0];
  CHECK(d.tokens[0].box == BoundingBox{0, 0, 200, 20});
  CHECK(d.tokens[1].box == BoundingBox{400, 0, 500, 20});
  const auto* total = d.find_relation("total.total_price");
  REQUIRE(total != nullptr);
  CHECK(total->key_spans.size() == 1);
  CHECK(total->value_spans.size() == 1);
  // A group without key words keeps value spans only.
  const auto* menu = d.find_relation("menu.nm");
  REQUIRE(menu != nullptr);
  CHECK(menu->key_spans.empty());
  CHECK(c.schema.coarse_groups.at("menu.nm") == "menu");
}

TEST_CASE("stats") {
  CHECK(corpus_stats(Corpus{}) == CorpusStats{});
  const auto cfg = default_synthetic_config(2, 10, 1);
  const auto c = generate_synthetic(cfg);
  const auto s = corpus_stats(c);
  std::size_t tokens = 0;
  for (const auto& d : c.documents) tokens += d.tokens.size();
  CHECK(s.doc_count == 10);
  CHECK(s.box_count == tokens);
  CHECK(s.entity_type_count == 4);
  CHECK(s.relation_type_count == 2);
}

TEST_CASE("synthetic generation is deterministic and valid") {
  const auto cfg = default_synthetic_config(10, 60, 9);
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  CHECK(corpus_to_json(a).dump() == corpus_to_json(b).dump());
  CHECK_NOTHROW(validate_corpus(a));
  for (const auto& d : a.documents) {
    CHECK(d.relations.size() >= 1);
    CHECK(d.relations.size() <= 4);
    for (const auto& r : d.relations) {
      CHECK(r.key_spans.size() == 1);
      CHECK(r.value_spans.size() == 1);
    }
  }
  auto other = cfg;
  other.seed = 10;
  CHECK(corpus_to_json(generate_synthetic(other)).dump() != corpus_to_json(a).dump());
}

TEST_CASE("synthetic key centers follow the configured means") {
  const auto cfg = default_synthetic_config(10, 1000, 21);
  const auto c = generate_synthetic(cfg);
  std::map<std::string, std::vector<Point2>> centers;
  for (const auto& d : c.documents) {
    for (const auto& r : d.relations) {
      const auto& s = r.key_spans.front();
      const auto& first = d.tokens[s.start].box;
      const auto& last = d.tokens[s.end - 1].box;
      centers[r.relation_type].push_back(
          {(first.x1 + last.x2) / 2.0 / kPageScale, (first.y1 + last.y2) / 2.0 / kPageScale});
    }
  }
  for (const auto& rel : cfg.relations) {
    const auto& pts = centers[rel.name];
    REQUIRE(pts.size() > 100);
    double mx = 0, my = 0;
    for (const auto& p : pts) {
      mx += p.x;
      my += p.y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    const double n = std::sqrt(static_cast<double>(pts.size()));
    // Integer box coordinates add at most half a unit of rounding bias.
    const double slack = 0.5 / kPageScale;
    CHECK(std::abs(mx - rel.key_mean.x) <= 3 * rel.key_std.x / n + slack);
    CHECK(std::abs(my - rel.key_mean.y) <= 3 * rel.key_std.y / n + slack);
  }
}

TEST_CASE("infeasible placement is a generation error") {
  auto cfg = default_synthetic_config(2, 3, 0);
  cfg.relations[0].key_mean = {-5, -5};
  cfg.placement_retries = 5;
  cfg.relations_per_doc = {2, 2};
  CHECK(kind_of([&] { generate_synthetic(cfg); }) == ErrorKind::kGeneration);
  cfg = default_synthetic_config(2, 3, 0);
  cfg.left_right_fraction = 1.5;
  CHECK(kind_of([&] { generate_synthetic(cfg); }) == ErrorKind::kConfig);
}

TEST_CASE("synthetic config json round trip") {
  const auto cfg = default_synthetic_config(5, 17, 3);
  const auto back = synthetic_config_from_json(synthetic_config_to_json(cfg));
  CHECK(synthetic_config_to_json(back) == synthetic_config_to_json(cfg));
}

TEST_CASE("inter split keeps groups and separates fine types") {
  const auto corpus = generate_synthetic(default_synthetic_config(10, 80, 2));
  const auto part = partition_types(corpus.schema, SplitMode::kInter, 0.6);
  std::set<std::string> train(part.train.begin(), part.train.end());
  std::set<std::string> train_groups, test_groups;
  for (const auto& t : part.train) train_groups.insert(corpus.schema.coarse_groups.at(t));
  for (const auto& t : part.test) {
    CHECK_FALSE(train.count(t));
    test_groups.insert(corpus.schema.coarse_groups.at(t));
  }
  CHECK(train_groups == test_groups);
  CHECK(part.train.size() == 6);
  CHECK(part.test.size() == 4);

  const auto [tr, te] = split_inter_intra(corpus, SplitMode::kInter, 0.6);
  CHECK(tr.documents.size() + te.documents.size() == extend_corpus(corpus).size());
  for (const auto& d : tr.documents) {
    REQUIRE(d.relations.size() == 1);
    CHECK(train.count(d.relations[0].relation_type));
  }
  for (const auto& d : te.documents) {
    REQUIRE(d.relations.size() == 1);
    CHECK_FALSE(train.count(d.relations[0].relation_type));
  }
}

TEST_CASE("intra split separates coarse groups") {
  const auto corpus = generate_synthetic(default_synthetic_config(12, 40, 2));
  const auto part = partition_types(corpus.schema, SplitMode::kIntra, 0.5);
  std::set<std::string> train_groups;
  for (const auto& t : part.train) train_groups.insert(corpus.schema.coarse_groups.at(t));
  for (const auto& t : part.test) CHECK_FALSE(train_groups.count(corpus.schema.coarse_groups.at(t)));
  CHECK_FALSE(part.test.empty());

  LabelSchema single{{"A", "B"}, {{"A", "g"}, {"B", "g"}}};
  CHECK(kind_of([&] { partition_types(single, SplitMode::kIntra, 0.5); }) == ErrorKind::kSplit);
  LabelSchema lonely{{"A", "B", "C"}, {{"A", "g"}, {"B", "g"}, {"C", "h"}}};
  CHECK(kind_of([&] { partition_types(lonely, SplitMode::kInter, 0.5); }) == ErrorKind::kSplit);
}

TEST_CASE("published partition of the 22 shipping-document types") {
  const auto intra = seab_partition(SplitMode::kIntra);
  CHECK(intra.train == std::vector<int>{1, 2, 3, 9, 10, 11, 12, 13, 14, 15, 16, 19});
  CHECK(intra.test == std::vector<int>{4, 5, 6, 7, 8, 17, 18, 20, 21, 22});
  CHECK(seab_relation_types().size() == 22);
  for (auto mode : {SplitMode::kInter, SplitMode::kIntra}) {
    const auto p = seab_partition(mode);
    std::set<int> all(p.train.begin(), p.train.end());
    all.insert(p.test.begin(), p.test.end());
    CHECK(all.size() == 22);
  }
}

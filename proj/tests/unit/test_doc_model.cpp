#include <doctest.h>

#include <algorithm>

#include "fskv/doc_model.hpp"
#include "fskv/error.hpp"
#include "support.hpp"

using namespace fskv;
using namespace fskv::testing;

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

std::vector<EntitySpan> sorted(std::vector<EntitySpan> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("label space ordering") {
  const auto one = collapse_label_space({{"Cash"}, {}});
  CHECK(one.labels() == std::vector<std::string>{"O", "Cash-Key-B", "Cash-Key-I",
                                                 "Cash-Value-B", "Cash-Value-I"});
  CHECK(collapse_label_space({{"Cash", "Consignee"}, {}}).size() == 9);
  CHECK(kind_of([] { collapse_label_space({}); }) == ErrorKind::kSchema);
  CHECK(kind_of([] { collapse_label_space({{"A", "A"}, {}}); }) == ErrorKind::kSchema);
}

TEST_CASE("label space size is 4 per type plus O") {
  for (std::size_t n = 1; n <= 30; ++n) {
    LabelSchema s;
    for (std::size_t i = 0; i < n; ++i) s.entity_types.push_back("T" + std::to_string(i));
    const auto space = collapse_label_space(s);
    REQUIRE(space.size() == 4 * n + 1);
    for (std::uint32_t l = 1; l < space.size(); ++l) {
      const auto t = space.label_type(l);
      CHECK(space.label(t, space.label_role(l), space.label_bio(l)) == l);
    }
  }
}

TEST_CASE("encode tags") {
  const auto space = collapse_label_space({{"Cash", "Total"}, {}});
  Document d;
  d.id = "x";
  d.tokens = {tok("Cash", 0, 0, 10, 10), tok("Paid", 12, 0, 20, 10), tok("5", 30, 0, 40, 10)};
  d.relations.push_back({"Cash", {span(0, 2, Role::kKey, "Cash")},
                         {span(2, 3, Role::kValue, "Cash")}});
  const auto tags = encode_tags(d, space);
  CHECK(tags.labels == std::vector<std::uint32_t>{space.label(0, Role::kKey, Bio::kBegin),
                                                  space.label(0, Role::kKey, Bio::kInside),
                                                  space.label(0, Role::kValue, Bio::kBegin)});
  CHECK(encode_tags(d, space, "Total").labels == std::vector<std::uint32_t>{0, 0, 0});

  d.relations.push_back({"Total", {span(1, 2, Role::kKey, "Total")}, {}});
  CHECK(kind_of([&] { encode_tags(d, space); }) == ErrorKind::kAnnotation);
}

TEST_CASE("filter keeps one relation") {
  const auto space = collapse_label_space({{"A", "B"}, {}});
  Document d;
  d.id = "x";
  for (int i = 0; i < 4; ++i) d.tokens.push_back(tok("t", 0, 0, 1, 1));
  d.relations.push_back({"A", {span(0, 1, Role::kKey, "A")}, {span(1, 2, Role::kValue, "A")}});
  d.relations.push_back({"B", {span(2, 3, Role::kKey, "B")}, {span(3, 4, Role::kValue, "B")}});
  const auto tags = encode_tags(d, space, "A");
  CHECK(tags.labels[2] == 0);
  CHECK(tags.labels[3] == 0);
  CHECK(tags.labels[0] != 0);
}

TEST_CASE("decode spans") {
  const auto space = collapse_label_space({{"Cash"}, {}});
  const auto kb = space.label(0, Role::kKey, Bio::kBegin);
  const auto ki = space.label(0, Role::kKey, Bio::kInside);
  CHECK(decode_spans({{kb, ki, 0}}, space) ==
        std::vector<EntitySpan>{span(0, 2, Role::kKey, "Cash")});
  // A stray I opens a span.
  CHECK(decode_spans({{ki, 0}}, space) ==
        std::vector<EntitySpan>{span(0, 1, Role::kKey, "Cash")});
  // B after B starts a new span.
  CHECK(decode_spans({{kb, kb}}, space).size() == 2);
}

TEST_CASE("encode then decode reproduces the span set") {
  const std::vector<std::string> types{"A", "B", "C", "D"};
  const auto space = collapse_label_space({types, {}});
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const auto doc = random_document(rng, types, "r" + std::to_string(trial));
    REQUIRE(validate_document(doc).empty());
    CHECK(sorted(decode_spans(encode_tags(doc, space), space)) == sorted(doc.all_spans()));
    for (const auto& rel : doc.relations) {
      const auto t = *space.type_index(rel.relation_type);
      for (auto l : encode_tags(doc, space, rel.relation_type).labels) {
        CHECK((l == 0 || space.label_type(l) == t));
      }
    }
  }
}

TEST_CASE("validate document") {
  CHECK(validate_document(cash_doc()).empty());

  auto d = cash_doc();
  d.relations[0].value_spans[0].end = 4;
  CHECK(validate_document(d).size() == 1);

  d = cash_doc();
  d.tokens[0].box = {300, 0, 200, 10};
  CHECK(validate_document(d).size() == 1);

  d = cash_doc();
  d.relations.push_back({"Total", {span(0, 1, Role::kKey, "Total")}, {}});
  CHECK(validate_document(d).size() == 1);
}

TEST_CASE("mask document") {
  auto d = cash_doc();
  d.tokens.push_back(tok("Total", 0, 300, 50, 320));
  d.relations.push_back({"Total", {span(3, 4, Role::kKey, "Total")}, {}});
  const auto m = mask_document(d, "Cash");
  CHECK(m.tokens == d.tokens);
  REQUIRE(m.relations.size() == 1);
  CHECK(m.relations[0].relation_type == "Cash");
  CHECK(mask_document(m, "Cash") == m);
  CHECK(kind_of([&] { mask_document(d, "Menu"); }) == ErrorKind::kMask);
}

TEST_CASE("normalize boxes") {
  const std::vector<RawBox> raw{{0, 0, 640, 480}, {320, 240, 320, 240}};
  const auto out = normalize_boxes(raw, 640, 480);
  CHECK(out[0] == BoundingBox{0, 0, 1000, 1000});
  CHECK(out[1] == BoundingBox{500, 500, 500, 500});
  const std::vector<RawBox> bad{{-1, 0, 10, 10}};
  CHECK(kind_of([&] { normalize_boxes(bad, 640, 480); }) == ErrorKind::kInput);
  CHECK(kind_of([&] { normalize_boxes(raw, 0, 480); }) == ErrorKind::kInput);
}

TEST_CASE("normalize boxes is monotone and idempotent on the page scale") {
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const double a = rng.uniform(0, 800), b = rng.uniform(0, 800);
    const std::vector<RawBox> raw{{std::min(a, b), 0, std::max(a, b), 0}};
    const auto n = normalize_boxes(raw, 800, 600)[0];
    CHECK(n.x1 <= n.x2);
    const std::vector<RawBox> again{{double(n.x1), double(n.y1), double(n.x2), double(n.y2)}};
    CHECK(normalize_boxes(again, kPageScale, kPageScale)[0] == n);
  }
}

#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <string>
#include <vector>

#include "fskv/corpus.hpp"
#include "fskv/doc_model.hpp"
#include "fskv/rng.hpp"

namespace fskv::testing {

inline Token tok(std::string text, int x1, int y1, int x2, int y2) {
  return {std::move(text), {x1, y1, x2, y2}};
}

inline EntitySpan span(std::size_t start, std::size_t end, Role role, std::string type) {
  return {start, end, role, std::move(type)};
}

// "Cash : 12.00": key [0,1), value [2,3).
inline Document cash_doc(std::string id = "d0") {
  Document d;
  d.id = std::move(id);
  d.tokens = {tok("Cash", 100, 100, 200, 120), tok(":", 205, 100, 210, 120),
              tok("12.00", 220, 100, 400, 120)};
  d.relations.push_back({"Cash", {span(0, 1, Role::kKey, "Cash")},
                         {span(2, 3, Role::kValue, "Cash")}});
  return d;
}

// Random valid document: tokens on a grid, relations over disjoint runs.
inline Document random_document(Rng& rng, const std::vector<std::string>& types,
                                std::string id) {
  Document d;
  d.id = std::move(id);
  const auto n = static_cast<std::size_t>(rng.between(1, 24));
  for (std::size_t i = 0; i < n; ++i) {
    const int x = static_cast<int>(rng.between(0, 900));
    const int y = static_cast<int>(rng.between(0, 980));
    d.tokens.push_back(tok("w" + std::to_string(rng.below(50)), x, y,
                           x + static_cast<int>(rng.between(0, 100)),
                           y + static_cast<int>(rng.between(0, 20))));
  }
  std::size_t pos = 0;
  for (const auto& type : types) {
    if (pos >= n || rng.bernoulli(0.3)) continue;
    RelationAnnotation rel{type, {}, {}};
    for (Role role : {Role::kKey, Role::kValue}) {
      if (pos >= n) break;
      pos += static_cast<std::size_t>(rng.below(3));
      if (pos >= n) break;
      const auto len = static_cast<std::size_t>(rng.between(1, 3));
      const auto end = std::min(n, pos + len);
      (role == Role::kKey ? rel.key_spans : rel.value_spans).push_back(span(pos, end, role, type));
      pos = end;
    }
    if (!rel.key_spans.empty() || !rel.value_spans.empty()) d.relations.push_back(rel);
  }
  return d;
}

}  // namespace fskv::testing

#include "fskv/sampler.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "fskv/error.hpp"

namespace fskv {

using nlohmann::json;

MaskedCopy mask(const Document& doc, std::string_view keep) {
  return {doc.id, std::string(keep), mask_document(doc, keep)};
}

std::vector<MaskedCopy> extend_corpus(const Corpus& corpus) {
  std::vector<MaskedCopy> out;
  for (const auto& doc : corpus.documents) {
    for (const auto& rel : doc.relations) {
      out.push_back(mask(doc, rel.relation_type));
    }
  }
  return out;
}

std::vector<std::string> Episode::relation_types() const {
  std::vector<std::string> out;
  for (const auto& g : groups) out.push_back(g.relation_type);
  return out;
}

Episode sample_episode(std::span<const MaskedCopy> extended,
                       const EpisodeShape& shape, Rng& rng) {
  if (shape.n <= 0 || shape.n % 2 != 0) {
    throw Error(ErrorKind::kSampling, "N must be a positive even number");
  }
  if (shape.k < 1 || shape.k_prime < 1) {
    throw Error(ErrorKind::kSampling, "K and K' must be at least 1");
  }
  const std::size_t ways = static_cast<std::size_t>(shape.n / 2);
  const std::size_t need =
      static_cast<std::size_t>(shape.k) + static_cast<std::size_t>(shape.k_prime);

  // Feasibility: a type can complete only with K + K' distinct copies.
  std::vector<std::string> type_order;
  std::map<std::string, std::size_t> counts;
  for (const auto& c : extended) {
    if (counts[c.relation_type]++ == 0) type_order.push_back(c.relation_type);
  }
  std::set<std::string> feasible;
  std::string deficient;
  for (const auto& t : type_order) {
    if (counts[t] >= need) {
      feasible.insert(t);
    } else {
      if (!deficient.empty()) deficient += ", ";
      deficient += "'" + t + "' (" + std::to_string(counts[t]) + " copies)";
    }
  }
  if (feasible.size() < ways) {
    throw Error(ErrorKind::kSampling,
                "need " + std::to_string(ways) + " relation types with at least " +
                    std::to_string(need) + " copies each, found " +
                    std::to_string(feasible.size()) +
                    (deficient.empty() ? std::string() : "; deficient: " + deficient));
  }

  struct Group {
    std::string type;
    std::vector<std::size_t> support;
    std::vector<std::size_t> query;
  };
  std::vector<Group> groups;
  std::map<std::string, std::size_t> group_of;
  std::set<std::size_t> used;

  auto complete = [&] {
    if (groups.size() != ways) return false;
    for (const auto& g : groups) {
      if (g.support.size() != static_cast<std::size_t>(shape.k) ||
          g.query.size() != static_cast<std::size_t>(shape.k_prime)) {
        return false;
      }
    }
    return true;
  };

  const std::size_t stall_limit = std::max<std::size_t>(10000, 100 * extended.size());
  std::size_t stalled = 0;
  while (!complete()) {
    const std::size_t i = rng.below(extended.size());
    const auto& type = extended[i].relation_type;
    bool progress = false;
    auto it = group_of.find(type);
    if (it == group_of.end() && groups.size() < ways && feasible.count(type)) {
      it = group_of.emplace(type, groups.size()).first;
      groups.push_back({type, {}, {}});
      progress = true;
    }
    if (it != group_of.end() && !used.count(i)) {
      auto& g = groups[it->second];
      if (g.support.size() < static_cast<std::size_t>(shape.k)) {
        g.support.push_back(i);
        used.insert(i);
        progress = true;
      } else if (g.query.size() < static_cast<std::size_t>(shape.k_prime)) {
        g.query.push_back(i);
        used.insert(i);
        progress = true;
      }
    }
    if (progress) {
      stalled = 0;
    } else if (++stalled > stall_limit) {
      std::string lacking = "unknown";
      for (const auto& g : groups) {
        if (g.support.size() < static_cast<std::size_t>(shape.k) ||
            g.query.size() < static_cast<std::size_t>(shape.k_prime)) {
          lacking = g.type;
          break;
        }
      }
      throw Error(ErrorKind::kSampling,
                  "sampling made no progress; relation type '" + lacking +
                      "' could not be filled");
    }
  }

  Episode ep;
  ep.shape = shape;
  for (const auto& g : groups) {
    EpisodeGroup out{g.type, {}, {}};
    for (auto i : g.support) out.support.push_back(extended[i]);
    for (auto i : g.query) out.query.push_back(extended[i]);
    ep.groups.push_back(std::move(out));
  }
  return ep;
}

std::vector<std::string> episode_violations(const Episode& ep) {
  std::vector<std::string> out;
  const auto& s = ep.shape;
  if (s.n <= 0 || s.n % 2 != 0) out.push_back("N is not a positive even number");
  if (ep.groups.size() != static_cast<std::size_t>(s.n / 2)) {
    out.push_back("episode has " + std::to_string(ep.groups.size()) +
                  " relation types, expected " + std::to_string(s.n / 2));
  }
  std::set<std::string> types;
  std::set<std::pair<std::string, std::string>> support_keys;
  std::set<std::pair<std::string, std::string>> query_keys;
  for (const auto& g : ep.groups) {
    if (!types.insert(g.relation_type).second) {
      out.push_back("relation type '" + g.relation_type + "' appears twice");
    }
    if (g.support.size() != static_cast<std::size_t>(s.k)) {
      out.push_back("support group '" + g.relation_type + "' has " +
                    std::to_string(g.support.size()) + " copies, expected " +
                    std::to_string(s.k));
    }
    if (g.query.size() != static_cast<std::size_t>(s.k_prime)) {
      out.push_back("query group '" + g.relation_type + "' has " +
                    std::to_string(g.query.size()) + " copies, expected " +
                    std::to_string(s.k_prime));
    }
    auto check_copy = [&](const MaskedCopy& c, auto& keys, const char* side) {
      if (c.relation_type != g.relation_type) {
        out.push_back(std::string(side) + " copy of '" + c.source_doc_id +
                      "' filed under the wrong relation type");
      }
      if (c.document.relations.size() != 1 ||
          c.document.relations.front().relation_type != g.relation_type) {
        out.push_back(std::string(side) + " copy of '" + c.source_doc_id +
                      "' is not masked to '" + g.relation_type + "'");
      }
      if (!keys.insert({c.source_doc_id, c.relation_type}).second) {
        out.push_back(std::string(side) + " copy of '" + c.source_doc_id +
                      "' repeated");
      }
    };
    for (const auto& c : g.support) check_copy(c, support_keys, "support");
    for (const auto& c : g.query) check_copy(c, query_keys, "query");
  }
  for (const auto& key : support_keys) {
    if (query_keys.count(key)) {
      out.push_back("copy ('" + key.first + "', '" + key.second +
                    "') is in both support and query");
    }
  }
  return out;
}

namespace {

json copy_to_json(const MaskedCopy& c) {
  json j = document_to_json(c.document);
  j["source_doc_id"] = c.source_doc_id;
  return j;
}

MaskedCopy copy_from_json(const json& j, const std::string& type) {
  MaskedCopy c;
  c.document = document_from_json(j);
  c.source_doc_id = j.value("source_doc_id", c.document.id);
  c.relation_type = type;
  return c;
}

}  // namespace

json episode_to_json(const Episode& ep) {
  json support = json::object();
  json query = json::object();
  for (const auto& g : ep.groups) {
    json s = json::array();
    json q = json::array();
    for (const auto& c : g.support) s.push_back(copy_to_json(c));
    for (const auto& c : g.query) q.push_back(copy_to_json(c));
    support[g.relation_type] = std::move(s);
    query[g.relation_type] = std::move(q);
  }
  return {{"n", ep.shape.n},
          {"k", ep.shape.k},
          {"k_prime", ep.shape.k_prime},
          {"support", std::move(support)},
          {"query", std::move(query)}};
}

Episode episode_from_json(const json& j) {
  try {
    Episode ep;
    ep.shape = {j.at("n").get<int>(), j.at("k").get<int>(), j.at("k_prime").get<int>()};
    for (const auto& [type, copies] : j.at("support").items()) {
      EpisodeGroup g{type, {}, {}};
      for (const auto& c : copies) g.support.push_back(copy_from_json(c, type));
      if (j.at("query").contains(type)) {
        for (const auto& c : j.at("query").at(type)) {
          g.query.push_back(copy_from_json(c, type));
        }
      }
      ep.groups.push_back(std::move(g));
    }
    return ep;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("episode: ") + e.what());
  }
}

}  // namespace fskv

#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fskv/corpus.hpp"
#include "fskv/rng.hpp"

namespace fskv {

// A document copy that keeps annotations of exactly one relation type.
struct MaskedCopy {
  std::string source_doc_id;
  std::string relation_type;
  Document document;

  friend bool operator==(const MaskedCopy&, const MaskedCopy&) = default;
};

MaskedCopy mask(const Document& doc, std::string_view keep);

// One copy per (document, relation) in document order, then relation order.
std::vector<MaskedCopy> extend_corpus(const Corpus& corpus);

struct EpisodeShape {
  int n = 4;        // entity classes (key + value), so n/2 relation types
  int k = 1;        // support copies per relation type
  int k_prime = 1;  // query copies per relation type
};

// Support and query copies of one relation type.
struct EpisodeGroup {
  std::string relation_type;
  std::vector<MaskedCopy> support;
  std::vector<MaskedCopy> query;
};

struct Episode {
  EpisodeShape shape;
  // In order of first draw.
  std::vector<EpisodeGroup> groups;

  std::vector<std::string> relation_types() const;
};

// Relation-wise N-way K-shot sampling: copies are drawn uniformly from the
// extended set and fill support groups first, then query groups. Throws
// Error(kSampling) naming the deficient relation type when the request cannot
// be met.
Episode sample_episode(std::span<const MaskedCopy> extended,
                       const EpisodeShape& shape, Rng& rng);

// Every broken Episode invariant, empty when the episode is sound.
std::vector<std::string> episode_violations(const Episode& episode);

nlohmann::json episode_to_json(const Episode& episode);
Episode episode_from_json(const nlohmann::json& j);

}  // namespace fskv

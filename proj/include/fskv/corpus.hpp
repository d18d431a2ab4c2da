#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fskv/doc_model.hpp"

namespace fskv {

struct Corpus {
  LabelSchema schema;
  std::vector<Document> documents;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct CorpusStats {
  std::size_t doc_count = 0;
  std::size_t box_count = 0;
  std::size_t entity_type_count = 0;
  std::size_t relation_type_count = 0;

  friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

enum class CorpusFormat { kCanonical, kCordLike };

CorpusFormat parse_corpus_format(std::string_view name);

// Canonical JSON <-> Corpus. from_json validates every document.
nlohmann::json document_to_json(const Document& doc);
Document document_from_json(const nlohmann::json& j);
nlohmann::json corpus_to_json(const Corpus& corpus);
Corpus corpus_from_json(const nlohmann::json& j);

// Converts CORD-style annotations (lines of words, each line carrying a
// category and group id, words flagged is_key) into a validated corpus.
Corpus corpus_from_cord_json(const nlohmann::json& j);

// Throws Error(kValidation) naming the first invalid document.
void validate_corpus(const Corpus& corpus);

Corpus load_corpus(const std::filesystem::path& path,
                   CorpusFormat format = CorpusFormat::kCanonical);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// Types are counted over annotations actually present; every relation type
// contributes a Key and a Value entity type.
CorpusStats corpus_stats(const Corpus& corpus);

// ---------------------------------------------------------------------------
// Synthetic corpora

struct Point2 {
  double x = 0;
  double y = 0;
};

enum class ValueKind { kAmount, kDate, kCode, kWords };

struct SyntheticRelation {
  std::string name;
  std::string coarse_group;
  // Each phrase is whitespace-tokenized; one is drawn per occurrence.
  std::vector<std::string> key_phrases;
  ValueKind value_kind = ValueKind::kWords;
  // Vocabulary for kWords values.
  std::vector<std::string> value_words;
  // Key entity center on the unit page square.
  Point2 key_mean;
  Point2 key_std{0.03, 0.03};
  // Distance between key and value edges along the arrangement axis, and
  // the jitter of the value across that axis.
  double value_gap_mean = 0.02;
  double value_gap_std = 0.005;
  double value_cross_std = 0.004;
};

struct IntRange {
  int min = 0;
  int max = 0;
};

struct SyntheticConfig {
  std::vector<SyntheticRelation> relations;
  int docs = 100;
  IntRange relations_per_doc{1, 4};
  // Token count of kWords values.
  IntRange value_tokens{1, 3};
  IntRange distractor_tokens{4, 12};
  // Probability that a value sits right of its key rather than below.
  double left_right_fraction = 0.5;
  int page_width = 1000;
  int page_height = 1414;
  int placement_retries = 200;
  std::uint64_t seed = 0;
};

// Built-in catalog: `num_types` relation types (at most 12) spread over four
// coarse groups, interleaved so any prefix covers groups evenly.
SyntheticConfig default_synthetic_config(std::size_t num_types, int docs,
                                         std::uint64_t seed);

void validate_synthetic_config(const SyntheticConfig& config);
nlohmann::json synthetic_config_to_json(const SyntheticConfig& config);
// Missing fields fall back to default_synthetic_config values.
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

Corpus generate_synthetic(const SyntheticConfig& config);

// ---------------------------------------------------------------------------
// Transfer splits

enum class SplitMode { kInter, kIntra };

SplitMode parse_split_mode(std::string_view name);

struct TypePartition {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

// Type-level partition used by split_inter_intra.
TypePartition partition_types(const LabelSchema& schema, SplitMode mode,
                              double train_fraction_of_types);

// Each (document, relation) becomes a masked copy placed on the side that
// owns its relation type. Copy ids are "<doc id>#<relation type>".
std::pair<Corpus, Corpus> split_inter_intra(const Corpus& corpus,
                                            SplitMode mode,
                                            double train_fraction_of_types);

// The 22 SEAB relation types (1-based ids), their coarse groups and the
// published inter/intra partitions by id.
struct SeabPartition {
  std::vector<int> train;
  std::vector<int> test;
};
const std::vector<std::string>& seab_relation_types();
const std::vector<std::string>& seab_coarse_groups();
SeabPartition seab_partition(SplitMode mode);

}  // namespace fskv

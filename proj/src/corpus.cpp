#include "fskv/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fskv/error.hpp"
#include "fskv/rng.hpp"

namespace fskv {

using nlohmann::json;

namespace {

template <typename F>
auto parse_guard(const std::string& what, F&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, what + ": " + e.what());
  }
}

json spans_to_json(const std::vector<EntitySpan>& spans) {
  json out = json::array();
  for (const auto& s : spans) out.push_back({s.start, s.end});
  return out;
}

std::vector<EntitySpan> spans_from_json(const json& j, Role role,
                                        const std::string& type) {
  std::vector<EntitySpan> out;
  for (const auto& s : j) {
    if (!s.is_array() || s.size() != 2) {
      throw Error(ErrorKind::kParse, "span must be a [start, end] pair");
    }
    const auto start = s[0].get<long long>();
    const auto end = s[1].get<long long>();
    if (start < 0 || end < 0) {
      throw Error(ErrorKind::kParse, "span indices must be non-negative");
    }
    out.push_back({static_cast<std::size_t>(start),
                   static_cast<std::size_t>(end), role, type});
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "canonical") return CorpusFormat::kCanonical;
  if (name == "cord-like" || name == "cord") return CorpusFormat::kCordLike;
  throw Error(ErrorKind::kInput, "unknown corpus format '" + std::string(name) +
                                     "' (expected canonical or cord-like)");
}

json document_to_json(const Document& doc) {
  json tokens = json::array();
  for (const auto& t : doc.tokens) {
    tokens.push_back(
        {{"text", t.text}, {"box", {t.box.x1, t.box.y1, t.box.x2, t.box.y2}}});
  }
  json relations = json::array();
  for (const auto& r : doc.relations) {
    relations.push_back({{"type", r.relation_type},
                         {"key_spans", spans_to_json(r.key_spans)},
                         {"value_spans", spans_to_json(r.value_spans)}});
  }
  return {{"id", doc.id},
          {"page_width", doc.page_width},
          {"page_height", doc.page_height},
          {"tokens", std::move(tokens)},
          {"relations", std::move(relations)}};
}

Document document_from_json(const json& j) {
  return parse_guard("document", [&] {
    Document doc;
    doc.id = j.at("id").get<std::string>();
    doc.page_width = j.value("page_width", kPageScale);
    doc.page_height = j.value("page_height", kPageScale);
    for (const auto& t : j.at("tokens")) {
      const auto& b = t.at("box");
      if (!b.is_array() || b.size() != 4) {
        throw Error(ErrorKind::kParse,
                    "document '" + doc.id + "': box must have 4 coordinates");
      }
      doc.tokens.push_back({t.at("text").get<std::string>(),
                            {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(),
                             b[3].get<int>()}});
    }
    if (j.contains("relations")) {
      for (const auto& r : j.at("relations")) {
        RelationAnnotation rel;
        rel.relation_type = r.at("type").get<std::string>();
        rel.key_spans = spans_from_json(r.value("key_spans", json::array()),
                                        Role::kKey, rel.relation_type);
        rel.value_spans = spans_from_json(r.value("value_spans", json::array()),
                                          Role::kValue, rel.relation_type);
        doc.relations.push_back(std::move(rel));
      }
    }
    return doc;
  });
}

json corpus_to_json(const Corpus& corpus) {
  json docs = json::array();
  for (const auto& d : corpus.documents) docs.push_back(document_to_json(d));
  json groups = json::object();
  for (const auto& [type, group] : corpus.schema.coarse_groups) {
    groups[type] = group;
  }
  return {{"schema",
           {{"entity_types", corpus.schema.entity_types},
            {"coarse_groups", std::move(groups)}}},
          {"documents", std::move(docs)}};
}

Corpus corpus_from_json(const json& j) {
  Corpus corpus = parse_guard("corpus", [&] {
    Corpus c;
    const auto& schema = j.at("schema");
    c.schema.entity_types =
        schema.at("entity_types").get<std::vector<std::string>>();
    if (schema.contains("coarse_groups")) {
      c.schema.coarse_groups =
          schema.at("coarse_groups").get<std::map<std::string, std::string>>();
    }
    for (const auto& d : j.at("documents")) {
      c.documents.push_back(document_from_json(d));
    }
    return c;
  });
  validate_corpus(corpus);
  return corpus;
}

void validate_corpus(const Corpus& corpus) {
  std::set<std::string> types;
  for (const auto& t : corpus.schema.entity_types) {
    if (!types.insert(t).second) {
      throw Error(ErrorKind::kValidation,
                  "schema lists entity type '" + t + "' twice");
    }
  }
  std::set<std::string> ids;
  for (const auto& doc : corpus.documents) {
    const auto violations = validate_document(doc);
    if (!violations.empty()) {
      throw Error(ErrorKind::kValidation,
                  "document '" + doc.id + "' is invalid: " +
                      violations.front().location + ": " +
                      violations.front().message);
    }
    if (!ids.insert(doc.id).second) {
      throw Error(ErrorKind::kValidation,
                  "document '" + doc.id + "' is invalid: duplicate id");
    }
    for (const auto& rel : doc.relations) {
      if (!types.count(rel.relation_type)) {
        throw Error(ErrorKind::kValidation,
                    "document '" + doc.id + "' is invalid: relation type '" +
                        rel.relation_type + "' not in schema");
      }
    }
  }
}

Corpus corpus_from_cord_json(const json& j) {
  const json* docs = &j;
  if (j.is_object()) docs = &j.at("documents");
  Corpus corpus;
  std::set<std::string> known_types;
  std::size_t index = 0;
  for (const auto& src : *docs) {
    Document doc = parse_guard("cord-like document", [&] {
      Document d;
      char fallback[32];
      std::snprintf(fallback, sizeof fallback, "doc-%06zu", index);
      d.id = src.contains("id") ? src.at("id").get<std::string>() : fallback;
      const auto& size = src.at("meta").at("image_size");
      d.page_width = size.at("width").get<int>();
      d.page_height = size.at("height").get<int>();

      struct Pending {
        std::string category;
        std::vector<RawBox> boxes;
        std::vector<std::string> texts;
        std::vector<bool> is_key;
      };
      std::vector<Pending> lines;
      for (const auto& line : src.at("valid_line")) {
        Pending p;
        p.category = line.value("category", std::string());
        for (const auto& w : line.at("words")) {
          RawBox box;
          if (w.contains("quad")) {
            const auto& q = w.at("quad");
            const double xs[] = {q.at("x1").get<double>(), q.at("x2").get<double>(),
                                 q.at("x3").get<double>(), q.at("x4").get<double>()};
            const double ys[] = {q.at("y1").get<double>(), q.at("y2").get<double>(),
                                 q.at("y3").get<double>(), q.at("y4").get<double>()};
            box = {*std::min_element(xs, xs + 4), *std::min_element(ys, ys + 4),
                   *std::max_element(xs, xs + 4), *std::max_element(ys, ys + 4)};
          } else {
            const auto& b = w.at("box");
            box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                   b[3].get<double>()};
          }
          auto text = w.at("text").get<std::string>();
          if (text.empty()) continue;
          p.boxes.push_back(box);
          p.texts.push_back(std::move(text));
          p.is_key.push_back(w.value("is_key", 0) != 0);
        }
        lines.push_back(std::move(p));
      }
      // Lines of one category form one relation; runs of is_key words become
      // key spans, the remaining runs value spans.
      std::map<std::string, std::size_t> rel_index;
      for (const auto& line : lines) {
        const auto boxes = normalize_boxes(line.boxes, d.page_width, d.page_height);
        const std::size_t base = d.tokens.size();
        for (std::size_t i = 0; i < boxes.size(); ++i) {
          d.tokens.push_back({line.texts[i], boxes[i]});
        }
        if (line.category.empty() || boxes.empty()) continue;
        auto [it, inserted] = rel_index.emplace(line.category, d.relations.size());
        if (inserted) d.relations.push_back({line.category, {}, {}});
        auto& rel = d.relations[it->second];
        std::size_t run = 0;
        for (std::size_t i = 1; i <= boxes.size(); ++i) {
          if (i == boxes.size() || line.is_key[i] != line.is_key[run]) {
            const Role role = line.is_key[run] ? Role::kKey : Role::kValue;
            EntitySpan span{base + run, base + i, role, line.category};
            (role == Role::kKey ? rel.key_spans : rel.value_spans).push_back(span);
            run = i;
          }
        }
      }
      return d;
    });
    for (const auto& rel : doc.relations) {
      if (known_types.insert(rel.relation_type).second) {
        corpus.schema.entity_types.push_back(rel.relation_type);
        const auto dot = rel.relation_type.find('.');
        corpus.schema.coarse_groups[rel.relation_type] =
            rel.relation_type.substr(0, dot);
      }
    }
    corpus.documents.push_back(std::move(doc));
    ++index;
  }
  validate_corpus(corpus);
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  const std::string text = read_file(path);
  json j = parse_guard("'" + path.string() + "'",
                       [&] { return json::parse(text); });
  return format == CorpusFormat::kCanonical ? corpus_from_json(j)
                                            : corpus_from_cord_json(j);
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  out << corpus_to_json(corpus).dump() << '\n';
  if (!out) throw Error(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats stats;
  std::set<std::string> types;
  stats.doc_count = corpus.documents.size();
  for (const auto& doc : corpus.documents) {
    stats.box_count += doc.tokens.size();
    for (const auto& rel : doc.relations) types.insert(rel.relation_type);
  }
  stats.relation_type_count = types.size();
  stats.entity_type_count = 2 * types.size();
  return stats;
}

// ---------------------------------------------------------------------------
// Synthetic corpora

namespace {

struct CatalogEntry {
  const char* name;
  const char* group;
  std::vector<std::string> key_phrases;
  ValueKind kind;
};

const std::vector<std::string>& party_words() {
  static const std::vector<std::string> words = {
      "Acme",    "Global",  "Pacific", "Ocean",   "Trading", "Logistics",
      "Ltd",     "Co",      "Express", "Marine",  "Import",  "Export",
      "Shanghai", "Harbor", "United",  "Northern", "Star",   "Freight"};
  return words;
}

const std::vector<std::string>& vessel_words() {
  static const std::vector<std::string> words = {
      "Ever", "Maersk", "Horizon", "Pearl", "Aurora", "Atlantic", "Voyager",
      "Spirit", "Glory", "Dawn"};
  return words;
}

const std::vector<std::string>& distractor_words() {
  static const std::vector<std::string> words = {
      "page", "item", "qty", "description", "note", "the", "of", "and",
      "for", "copy", "original", "signature", "stamp", "terms", "line",
      "unit", "thank", "you", "remarks", "per"};
  return words;
}

// Interleaved so that every prefix spreads over the four coarse groups.
const std::vector<CatalogEntry>& catalog() {
  static const std::vector<CatalogEntry> entries = {
      {"Shipper", "party", {"Shipper", "Shipper Name", "Exporter"}, ValueKind::kWords},
      {"Total", "amount", {"Total", "Total Amount", "Grand Total"}, ValueKind::kAmount},
      {"IssueDate", "date", {"Issue Date", "Invoice Date", "Dated"}, ValueKind::kDate},
      {"InvoiceNo", "code", {"Invoice No", "Invoice Number", "Inv No"}, ValueKind::kCode},
      {"Consignee", "party", {"Consignee", "Ship To", "Receiver"}, ValueKind::kWords},
      {"Tax", "amount", {"Tax", "VAT", "Tax Amount"}, ValueKind::kAmount},
      {"DueDate", "date", {"Due Date", "Payment Due", "Pay By"}, ValueKind::kDate},
      {"OrderCode", "code", {"Order Code", "PO Number", "Order Ref"}, ValueKind::kCode},
      {"Subtotal", "amount", {"Subtotal", "Sub Total", "Net Amount"}, ValueKind::kAmount},
      {"NotifyParty", "party", {"Notify Party", "Notify", "Also Notify"}, ValueKind::kWords},
      {"Cash", "amount", {"Cash", "Cash Paid", "Tendered"}, ValueKind::kAmount},
      {"Vessel", "code", {"Vessel", "Vessel Name", "Carrier"}, ValueKind::kWords},
  };
  return entries;
}

std::string value_kind_name(ValueKind kind) {
  switch (kind) {
    case ValueKind::kAmount: return "amount";
    case ValueKind::kDate: return "date";
    case ValueKind::kCode: return "code";
    case ValueKind::kWords: return "words";
  }
  return "words";
}

ValueKind value_kind_from_name(const std::string& name) {
  if (name == "amount") return ValueKind::kAmount;
  if (name == "date") return ValueKind::kDate;
  if (name == "code") return ValueKind::kCode;
  if (name == "words") return ValueKind::kWords;
  throw Error(ErrorKind::kConfig, "unknown value kind '" + name + "'");
}

std::vector<std::string> split_words(const std::string& phrase) {
  std::vector<std::string> out;
  std::istringstream in(phrase);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

// Normalized-unit text metrics.
constexpr int kCharWidth = 9;
constexpr int kTokenHeight = 14;
constexpr int kWordGap = 6;
constexpr int kBlockMargin = 4;

int text_width(const std::string& text) {
  return kCharWidth * static_cast<int>(std::max<std::size_t>(text.size(), 1));
}

struct Block {
  std::vector<Token> tokens;
  BoundingBox box;
  int relation = -1;  // index into the document's relation list
  Role role = Role::kKey;
};

// Lays words out left to right starting at (x1, y1).
Block layout_words(const std::vector<std::string>& words, int x1, int y1) {
  Block b;
  int x = x1;
  for (const auto& w : words) {
    const int width = text_width(w);
    b.tokens.push_back({w, {x, y1, x + width, y1 + kTokenHeight}});
    x += width + kWordGap;
  }
  b.box = {x1, y1, x - kWordGap, y1 + kTokenHeight};
  return b;
}

int phrase_width(const std::vector<std::string>& words) {
  int w = -kWordGap;
  for (const auto& s : words) w += text_width(s) + kWordGap;
  return w;
}

bool on_page(const BoundingBox& b) {
  return b.x1 >= 0 && b.y1 >= 0 && b.x2 <= kPageScale && b.y2 <= kPageScale;
}

bool collides(const BoundingBox& b, const std::vector<Block>& blocks) {
  for (const auto& o : blocks) {
    if (b.x1 < o.box.x2 + kBlockMargin && o.box.x1 < b.x2 + kBlockMargin &&
        b.y1 < o.box.y2 + kBlockMargin && o.box.y1 < b.y2 + kBlockMargin) {
      return true;
    }
  }
  return false;
}

std::vector<std::string> draw_value(const SyntheticRelation& rel,
                                    const SyntheticConfig& config, Rng& rng) {
  char buf[64];
  switch (rel.value_kind) {
    case ValueKind::kAmount:
      std::snprintf(buf, sizeof buf, "%lld.%02lld", rng.between(1, 9999),
                    rng.between(0, 99));
      return {buf};
    case ValueKind::kDate:
      std::snprintf(buf, sizeof buf, "%lld-%02lld-%02lld", rng.between(2015, 2024),
                    rng.between(1, 12), rng.between(1, 28));
      return {buf};
    case ValueKind::kCode: {
      std::string prefix;
      for (char c : rel.name) {
        if (std::isupper(static_cast<unsigned char>(c))) prefix += c;
      }
      if (prefix.empty()) prefix = "X";
      std::snprintf(buf, sizeof buf, "%s-%05lld", prefix.c_str(),
                    rng.between(0, 99999));
      return {buf};
    }
    case ValueKind::kWords: {
      const auto& vocab = rel.value_words;
      const int n = static_cast<int>(
          rng.between(config.value_tokens.min, config.value_tokens.max));
      std::vector<std::string> out;
      for (int i = 0; i < n; ++i) out.push_back(vocab[rng.below(vocab.size())]);
      return out;
    }
  }
  return {"?"};
}

int to_units(double unit_coord) {
  return static_cast<int>(std::lround(unit_coord * kPageScale));
}

Document generate_document(const SyntheticConfig& config, std::size_t index) {
  Rng rng(derive_seed(config.seed, Stream::kGeneration, index));
  char id[32];
  std::snprintf(id, sizeof id, "synth-%06zu", index);
  Document doc;
  doc.id = id;
  doc.page_width = config.page_width;
  doc.page_height = config.page_height;

  const int type_count = static_cast<int>(config.relations.size());
  const int max_rel = std::min(config.relations_per_doc.max, type_count);
  const int min_rel = std::min(config.relations_per_doc.min, max_rel);
  const int n_rel = static_cast<int>(rng.between(min_rel, max_rel));
  std::vector<std::size_t> order(config.relations.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());

  std::vector<Block> blocks;
  for (int r = 0; r < n_rel; ++r) {
    const auto& rel = config.relations[order[static_cast<std::size_t>(r)]];
    bool placed = false;
    for (int attempt = 0; attempt < config.placement_retries && !placed; ++attempt) {
      const auto key_words =
          split_words(rel.key_phrases[rng.below(rel.key_phrases.size())]);
      const auto value_words = draw_value(rel, config, rng);
      const double cx = rng.normal(rel.key_mean.x, rel.key_std.x);
      const double cy = rng.normal(rel.key_mean.y, rel.key_std.y);
      const bool left_right = rng.bernoulli(config.left_right_fraction);
      const double gap =
          std::max(0.005, rng.normal(rel.value_gap_mean, rel.value_gap_std));
      const double cross = rng.normal(0.0, rel.value_cross_std);

      const int kw = phrase_width(key_words);
      const int kx = to_units(cx) - kw / 2;
      const int ky = to_units(cy) - kTokenHeight / 2;
      Block key = layout_words(key_words, kx, ky);
      Block value;
      if (left_right) {
        value = layout_words(value_words, key.box.x2 + to_units(gap),
                             ky + to_units(cross));
      } else {
        value = layout_words(value_words, kx + to_units(cross),
                             key.box.y2 + to_units(gap));
      }
      if (!on_page(key.box) || !on_page(value.box) || collides(key.box, blocks) ||
          collides(value.box, blocks)) {
        continue;
      }
      key.relation = value.relation = r;
      key.role = Role::kKey;
      value.role = Role::kValue;
      blocks.push_back(std::move(key));
      blocks.push_back(std::move(value));
      doc.relations.push_back({rel.name, {}, {}});
      placed = true;
    }
    if (!placed) {
      throw Error(ErrorKind::kGeneration,
                  "document " + std::to_string(index) + ": could not place '" +
                      rel.name + "' after " +
                      std::to_string(config.placement_retries) + " attempts");
    }
  }

  const int distractors = static_cast<int>(
      rng.between(config.distractor_tokens.min, config.distractor_tokens.max));
  const auto& filler = distractor_words();
  for (int i = 0; i < distractors; ++i) {
    std::string text;
    if (rng.bernoulli(0.25)) {
      text = std::to_string(rng.between(1, 999));
    } else {
      text = filler[rng.below(filler.size())];
    }
    const int w = text_width(text);
    for (int attempt = 0; attempt < 30; ++attempt) {
      const int x = static_cast<int>(rng.between(0, kPageScale - w));
      const int y = static_cast<int>(rng.between(0, kPageScale - kTokenHeight));
      Block b = layout_words({text}, x, y);
      if (collides(b.box, blocks)) continue;
      blocks.push_back(std::move(b));
      break;
    }
  }

  // Reading order: coarse line buckets, then left to right. Blocks stay
  // contiguous so every entity is a contiguous token range.
  std::stable_sort(blocks.begin(), blocks.end(), [](const Block& a, const Block& b) {
    const int la = (a.box.y1 + a.box.y2) / 2 / 16;
    const int lb = (b.box.y1 + b.box.y2) / 2 / 16;
    if (la != lb) return la < lb;
    return a.box.x1 < b.box.x1;
  });
  for (const auto& b : blocks) {
    const std::size_t start = doc.tokens.size();
    doc.tokens.insert(doc.tokens.end(), b.tokens.begin(), b.tokens.end());
    if (b.relation < 0) continue;
    auto& rel = doc.relations[static_cast<std::size_t>(b.relation)];
    EntitySpan span{start, doc.tokens.size(), b.role, rel.relation_type};
    (b.role == Role::kKey ? rel.key_spans : rel.value_spans).push_back(span);
  }
  return doc;
}

}  // namespace

SyntheticConfig default_synthetic_config(std::size_t num_types, int docs,
                                         std::uint64_t seed) {
  const auto& entries = catalog();
  if (num_types == 0 || num_types > entries.size()) {
    throw Error(ErrorKind::kConfig, "synthetic catalog offers 1.." +
                                        std::to_string(entries.size()) +
                                        " relation types");
  }
  SyntheticConfig config;
  config.docs = docs;
  config.seed = seed;
  for (std::size_t i = 0; i < num_types; ++i) {
    const auto& e = entries[i];
    SyntheticRelation rel;
    rel.name = e.name;
    rel.coarse_group = e.group;
    rel.key_phrases = e.key_phrases;
    rel.value_kind = e.kind;
    if (e.kind == ValueKind::kWords) {
      rel.value_words = std::string(e.group) == "party" ? party_words() : vessel_words();
    }
    // Two columns of six anchor rows.
    rel.key_mean = {i % 2 == 0 ? 0.12 : 0.56, 0.08 + 0.14 * static_cast<double>((i / 2) % 6)};
    rel.key_std = {0.03, 0.025};
    config.relations.push_back(std::move(rel));
  }
  return config;
}

void validate_synthetic_config(const SyntheticConfig& config) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::kConfig, msg); };
  if (config.relations.empty()) fail("synthetic config needs relation types");
  if (config.docs < 0) fail("docs must be >= 0");
  auto check_range = [&](const IntRange& r, int lo, const char* what) {
    if (r.min < lo || r.max < r.min) fail(std::string("invalid range for ") + what);
  };
  check_range(config.relations_per_doc, 1, "relations_per_doc");
  check_range(config.value_tokens, 1, "value_tokens");
  check_range(config.distractor_tokens, 0, "distractor_tokens");
  if (!(config.left_right_fraction >= 0 && config.left_right_fraction <= 1)) {
    fail("left_right_fraction must lie in [0, 1]");
  }
  if (config.page_width <= 0 || config.page_height <= 0) fail("page size must be positive");
  if (config.placement_retries <= 0) fail("placement_retries must be positive");
  std::set<std::string> names;
  for (const auto& r : config.relations) {
    if (r.name.empty() || !names.insert(r.name).second) {
      fail("relation names must be unique and non-empty");
    }
    if (r.key_phrases.empty()) fail("relation '" + r.name + "' has no key phrases");
    for (const auto& p : r.key_phrases) {
      if (split_words(p).empty()) fail("relation '" + r.name + "' has an empty key phrase");
    }
    if (r.value_kind == ValueKind::kWords && r.value_words.empty()) {
      fail("relation '" + r.name + "' needs value_words");
    }
    if (!(r.key_std.x > 0 && r.key_std.y > 0 && r.value_gap_std > 0 &&
          r.value_cross_std > 0)) {
      fail("relation '" + r.name + "': standard deviations must be > 0");
    }
  }
}

json synthetic_config_to_json(const SyntheticConfig& c) {
  json rels = json::array();
  for (const auto& r : c.relations) {
    rels.push_back({{"name", r.name},
                    {"coarse_group", r.coarse_group},
                    {"key_phrases", r.key_phrases},
                    {"value_kind", value_kind_name(r.value_kind)},
                    {"value_words", r.value_words},
                    {"key_mean", {r.key_mean.x, r.key_mean.y}},
                    {"key_std", {r.key_std.x, r.key_std.y}},
                    {"value_gap_mean", r.value_gap_mean},
                    {"value_gap_std", r.value_gap_std},
                    {"value_cross_std", r.value_cross_std}});
  }
  return {{"relations", rels},
          {"docs", c.docs},
          {"relations_per_doc", {c.relations_per_doc.min, c.relations_per_doc.max}},
          {"value_tokens", {c.value_tokens.min, c.value_tokens.max}},
          {"distractor_tokens", {c.distractor_tokens.min, c.distractor_tokens.max}},
          {"left_right_fraction", c.left_right_fraction},
          {"page_width", c.page_width},
          {"page_height", c.page_height},
          {"placement_retries", c.placement_retries},
          {"seed", c.seed}};
}

SyntheticConfig synthetic_config_from_json(const json& j) {
  return parse_guard("synthetic config", [&] {
    const auto num_types = j.value("num_types", std::size_t{10});
    SyntheticConfig c = default_synthetic_config(
        j.contains("relations") ? 1 : num_types, j.value("docs", 100),
        j.value("seed", std::uint64_t{0}));
    auto range = [&](const char* key, IntRange& r) {
      if (j.contains(key)) r = {j.at(key)[0].get<int>(), j.at(key)[1].get<int>()};
    };
    range("relations_per_doc", c.relations_per_doc);
    range("value_tokens", c.value_tokens);
    range("distractor_tokens", c.distractor_tokens);
    c.left_right_fraction = j.value("left_right_fraction", c.left_right_fraction);
    c.page_width = j.value("page_width", c.page_width);
    c.page_height = j.value("page_height", c.page_height);
    c.placement_retries = j.value("placement_retries", c.placement_retries);
    if (j.contains("relations")) {
      c.relations.clear();
      for (const auto& r : j.at("relations")) {
        SyntheticRelation rel;
        rel.name = r.at("name").get<std::string>();
        rel.coarse_group = r.value("coarse_group", rel.name);
        rel.key_phrases = r.at("key_phrases").get<std::vector<std::string>>();
        rel.value_kind = value_kind_from_name(r.value("value_kind", std::string("words")));
        rel.value_words = r.value("value_words", std::vector<std::string>{});
        rel.key_mean = {r.at("key_mean")[0].get<double>(), r.at("key_mean")[1].get<double>()};
        if (r.contains("key_std")) {
          rel.key_std = {r.at("key_std")[0].get<double>(), r.at("key_std")[1].get<double>()};
        }
        rel.value_gap_mean = r.value("value_gap_mean", rel.value_gap_mean);
        rel.value_gap_std = r.value("value_gap_std", rel.value_gap_std);
        rel.value_cross_std = r.value("value_cross_std", rel.value_cross_std);
        c.relations.push_back(std::move(rel));
      }
    }
    validate_synthetic_config(c);
    return c;
  });
}

Corpus generate_synthetic(const SyntheticConfig& config) {
  validate_synthetic_config(config);
  Corpus corpus;
  for (const auto& r : config.relations) {
    corpus.schema.entity_types.push_back(r.name);
    corpus.schema.coarse_groups[r.name] = r.coarse_group;
  }
  corpus.documents.reserve(static_cast<std::size_t>(config.docs));
  for (int i = 0; i < config.docs; ++i) {
    corpus.documents.push_back(generate_document(config, static_cast<std::size_t>(i)));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Splits

SplitMode parse_split_mode(std::string_view name) {
  if (name == "inter") return SplitMode::kInter;
  if (name == "intra") return SplitMode::kIntra;
  throw Error(ErrorKind::kInput,
              "unknown split mode '" + std::string(name) + "' (inter|intra)");
}

TypePartition partition_types(const LabelSchema& schema, SplitMode mode,
                              double fraction) {
  if (!(fraction > 0 && fraction < 1)) {
    throw Error(ErrorKind::kSplit, "train fraction must lie in (0, 1)");
  }
  // Groups in order of first appearance among the entity types.
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<std::string>> members;
  for (const auto& type : schema.entity_types) {
    auto it = schema.coarse_groups.find(type);
    if (it == schema.coarse_groups.end()) {
      throw Error(ErrorKind::kSplit, "entity type '" + type + "' has no coarse group");
    }
    if (!members.count(it->second)) group_order.push_back(it->second);
    members[it->second].push_back(type);
  }
  auto ceil_count = [&](std::size_t n) {
    return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  };

  TypePartition out;
  if (mode == SplitMode::kIntra) {
    if (group_order.size() < 2) {
      throw Error(ErrorKind::kSplit, "intra split needs at least two coarse groups");
    }
    const std::size_t target = ceil_count(schema.entity_types.size());
    std::size_t taken = 0;
    std::size_t train_groups = 0;
    while (train_groups < group_order.size() - 1 && (train_groups == 0 || taken < target)) {
      taken += members[group_order[train_groups]].size();
      ++train_groups;
    }
    for (std::size_t g = 0; g < group_order.size(); ++g) {
      auto& dst = g < train_groups ? out.train : out.test;
      for (const auto& t : members[group_order[g]]) dst.push_back(t);
    }
  } else {
    for (const auto& g : group_order) {
      const auto& m = members[g];
      if (m.size() < 2) {
        throw Error(ErrorKind::kSplit, "inter split: coarse group '" + g +
                                           "' has fewer than two fine types");
      }
      const std::size_t t = std::clamp<std::size_t>(ceil_count(m.size()), 1, m.size() - 1);
      for (std::size_t i = 0; i < m.size(); ++i) {
        (i < t ? out.train : out.test).push_back(m[i]);
      }
    }
  }
  // Restore schema order on both sides.
  auto schema_order = [&](std::vector<std::string>& v) {
    std::vector<std::string> sorted;
    for (const auto& t : schema.entity_types) {
      if (std::find(v.begin(), v.end(), t) != v.end()) sorted.push_back(t);
    }
    v = std::move(sorted);
  };
  schema_order(out.train);
  schema_order(out.test);
  return out;
}

std::pair<Corpus, Corpus> split_inter_intra(const Corpus& corpus, SplitMode mode,
                                            double fraction) {
  const auto part = partition_types(corpus.schema, mode, fraction);
  auto make_schema = [&](const std::vector<std::string>& types) {
    LabelSchema s;
    s.entity_types = types;
    for (const auto& t : types) s.coarse_groups[t] = corpus.schema.coarse_groups.at(t);
    return s;
  };
  Corpus train{make_schema(part.train), {}};
  Corpus test{make_schema(part.test), {}};
  const std::set<std::string> train_types(part.train.begin(), part.train.end());
  for (const auto& doc : corpus.documents) {
    for (const auto& rel : doc.relations) {
      Document copy = mask_document(doc, rel.relation_type);
      copy.id = doc.id + "#" + rel.relation_type;
      (train_types.count(rel.relation_type) ? train : test)
          .documents.push_back(std::move(copy));
    }
  }
  return {std::move(train), std::move(test)};
}

const std::vector<std::string>& seab_relation_types() {
  static const std::vector<std::string> types = {
      "Shipper",         "Consignee",          "Notify Party",     "Marker",
      "Number of Packages", "Good Description", "Gross Weight",    "Measurement",
      "Shipping Terms",  "Place of Receipt",   "Port of Loading",  "Port of Discharger",
      "Place of Delivery", "Vessel Name",      "Voyage no",        "Consignment Code",
      "Shipping Company", "HSCODE",            "Freight Terms",    "Pre-Assignment",
      "Case Size",       "Remarks"};
  return types;
}

const std::vector<std::string>& seab_coarse_groups() {
  // Group of relation id i+1, following the colour coding of the published
  // partition table.
  static const std::vector<std::string> groups = [] {
    std::vector<std::string> g;
    for (int id = 1; id <= 22; ++id) {
      if (id <= 3) g.push_back("Shipper and Consignee");
      else if (id <= 9) g.push_back("Goods Information");
      else if (id <= 16) g.push_back("Shipping Information");
      else g.push_back("Address+Numbers");
    }
    return g;
  }();
  return groups;
}

SeabPartition seab_partition(SplitMode mode) {
  if (mode == SplitMode::kInter) {
    return {{1, 5, 7, 8, 9, 10, 11, 12, 13, 14, 15, 18},
            {2, 3, 4, 6, 16, 17, 19, 20, 21, 22}};
  }
  return {{1, 2, 3, 9, 10, 11, 12, 13, 14, 15, 16, 19},
          {4, 5, 6, 7, 8, 17, 18, 20, 21, 22}};
}

}  // namespace fskv

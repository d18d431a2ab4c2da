#include "fskv/doc_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fskv/error.hpp"

namespace fskv {

std::string_view role_name(Role role) {
  return role == Role::kKey ? "Key" : "Value";
}

const RelationAnnotation* Document::find_relation(std::string_view type) const {
  for (const auto& rel : relations) {
    if (rel.relation_type == type) return &rel;
  }
  return nullptr;
}

std::vector<EntitySpan> Document::all_spans() const {
  std::vector<EntitySpan> out;
  for (const auto& rel : relations) {
    out.insert(out.end(), rel.key_spans.begin(), rel.key_spans.end());
    out.insert(out.end(), rel.value_spans.begin(), rel.value_spans.end());
  }
  return out;
}

std::optional<std::size_t> LabelSpace::type_index(
    std::string_view entity_type) const {
  auto it = index_.find(entity_type);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

LabelSpace collapse_label_space(const LabelSchema& schema) {
  if (schema.entity_types.empty()) {
    throw Error(ErrorKind::kSchema, "label schema has no entity types");
  }
  LabelSpace space;
  space.labels_.push_back("O");
  for (const auto& type : schema.entity_types) {
    if (type.empty()) throw Error(ErrorKind::kSchema, "empty entity type name");
    if (!space.index_.emplace(type, space.types_.size()).second) {
      throw Error(ErrorKind::kSchema, "duplicate entity type '" + type + "'");
    }
    space.types_.push_back(type);
    for (const char* role : {"Key", "Value"}) {
      for (const char* bio : {"B", "I"}) {
        space.labels_.push_back(type + "-" + role + "-" + bio);
      }
    }
  }
  return space;
}

TagSequence encode_tags(const Document& doc, const LabelSpace& space,
                        std::optional<std::string_view> relation_filter) {
  TagSequence tags;
  tags.labels.assign(doc.tokens.size(), LabelSpace::kOutside);
  std::vector<bool> taken(doc.tokens.size(), false);
  for (const auto& rel : doc.relations) {
    if (relation_filter && rel.relation_type != *relation_filter) continue;
    for (const auto* group : {&rel.key_spans, &rel.value_spans}) {
      for (const auto& span : *group) {
        if (span.start >= span.end || span.end > doc.tokens.size()) {
          throw Error(ErrorKind::kAnnotation,
                      "document '" + doc.id + "': span [" +
                          std::to_string(span.start) + "," +
                          std::to_string(span.end) + ") out of range");
        }
        const auto type = space.type_index(span.entity_type);
        if (!type) {
          throw Error(ErrorKind::kSchema, "document '" + doc.id +
                                              "': entity type '" +
                                              span.entity_type +
                                              "' not in label space");
        }
        for (std::size_t i = span.start; i < span.end; ++i) {
          if (taken[i]) {
            throw Error(ErrorKind::kAnnotation,
                        "document '" + doc.id + "': overlapping spans at token " +
                            std::to_string(i));
          }
          taken[i] = true;
          tags.labels[i] = space.label(
              *type, span.role, i == span.start ? Bio::kBegin : Bio::kInside);
        }
      }
    }
  }
  return tags;
}

std::vector<EntitySpan> decode_spans(const TagSequence& tags,
                                     const LabelSpace& space) {
  std::vector<EntitySpan> spans;
  std::optional<EntitySpan> open;
  std::size_t open_type = 0;
  auto close = [&](std::size_t end) {
    if (open) {
      open->end = end;
      spans.push_back(std::move(*open));
      open.reset();
    }
  };
  for (std::size_t i = 0; i < tags.labels.size(); ++i) {
    const auto label = tags.labels[i];
    if (label == LabelSpace::kOutside || label >= space.size()) {
      close(i);
      continue;
    }
    const auto type = space.label_type(label);
    const auto role = space.label_role(label);
    const bool continues = open && space.label_bio(label) == Bio::kInside &&
                           open_type == type && open->role == role;
    if (continues) continue;
    close(i);
    open = EntitySpan{i, i + 1, role, space.entity_types()[type]};
    open_type = type;
  }
  close(tags.labels.size());
  return spans;
}

std::vector<Violation> validate_document(const Document& doc) {
  std::vector<Violation> out;
  const std::string where = "document '" + doc.id + "'";
  if (doc.id.empty()) out.push_back({where, "empty document id"});
  if (doc.page_width <= 0 || doc.page_height <= 0) {
    out.push_back({where, "page dimensions must be positive"});
  }
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    const auto& tok = doc.tokens[i];
    const std::string loc = where + " token " + std::to_string(i);
    if (tok.text.empty()) out.push_back({loc, "empty token text"});
    if (!tok.box.valid()) {
      const auto& b = tok.box;
      out.push_back({loc, "invalid box (" + std::to_string(b.x1) + "," +
                              std::to_string(b.y1) + "," + std::to_string(b.x2) +
                              "," + std::to_string(b.y2) + ")"});
    }
  }
  // owner[i] = relation index that claimed token i
  std::vector<long> owner(doc.tokens.size(), -1);
  std::set<std::string> seen_types;
  for (std::size_t r = 0; r < doc.relations.size(); ++r) {
    const auto& rel = doc.relations[r];
    const std::string loc = where + " relation " + std::to_string(r) + " ('" +
                            rel.relation_type + "')";
    if (rel.relation_type.empty()) out.push_back({loc, "empty relation type"});
    if (!seen_types.insert(rel.relation_type).second) {
      out.push_back({loc, "relation type annotated twice"});
    }
    if (rel.key_spans.empty() && rel.value_spans.empty()) {
      out.push_back({loc, "relation has no key or value span"});
    }
    for (const auto* group : {&rel.key_spans, &rel.value_spans}) {
      const Role expected = group == &rel.key_spans ? Role::kKey : Role::kValue;
      for (const auto& span : *group) {
        const std::string sloc = loc + " span [" + std::to_string(span.start) +
                                 "," + std::to_string(span.end) + ")";
        if (span.role != expected) {
          out.push_back({sloc, "span role does not match its list"});
        }
        if (span.entity_type != rel.relation_type) {
          out.push_back({sloc, "span entity type '" + span.entity_type +
                                   "' differs from relation type"});
        }
        if (span.start >= span.end) {
          out.push_back({sloc, "empty or reversed span"});
          continue;
        }
        if (span.end > doc.tokens.size()) {
          out.push_back({sloc, "span end exceeds token count " +
                                   std::to_string(doc.tokens.size())});
          continue;
        }
        for (std::size_t i = span.start; i < span.end; ++i) {
          if (owner[i] == static_cast<long>(r)) {
            out.push_back({sloc, "overlaps another span at token " +
                                     std::to_string(i)});
            break;
          }
          if (owner[i] >= 0) {
            out.push_back({sloc, "token " + std::to_string(i) +
                                     " already belongs to relation " +
                                     std::to_string(owner[i])});
            break;
          }
          owner[i] = static_cast<long>(r);
        }
      }
    }
  }
  return out;
}

Document mask_document(const Document& doc, std::string_view keep) {
  const auto* rel = doc.find_relation(keep);
  if (!rel) {
    throw Error(ErrorKind::kMask, "document '" + doc.id +
                                      "' has no relation of type '" +
                                      std::string(keep) + "'");
  }
  Document out;
  out.id = doc.id;
  out.page_width = doc.page_width;
  out.page_height = doc.page_height;
  out.tokens = doc.tokens;
  out.relations.push_back(*rel);
  return out;
}

std::vector<BoundingBox> normalize_boxes(std::span<const RawBox> raw,
                                         int page_width, int page_height) {
  if (page_width <= 0 || page_height <= 0) {
    throw Error(ErrorKind::kInput, "page dimensions must be positive");
  }
  auto scale = [](double c, int dim) {
    if (!std::isfinite(c) || c < 0) {
      throw Error(ErrorKind::kInput, "box coordinate must be finite and >= 0");
    }
    const double v = std::floor(c * kPageScale / dim);
    return static_cast<int>(std::clamp(v, 0.0, static_cast<double>(kPageScale)));
  };
  std::vector<BoundingBox> out;
  out.reserve(raw.size());
  for (const auto& b : raw) {
    out.push_back({scale(b.x1, page_width), scale(b.y1, page_height),
                   scale(b.x2, page_width), scale(b.y2, page_height)});
  }
  return out;
}

}  // namespace fskv

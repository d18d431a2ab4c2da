#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fskv {

inline constexpr int kPageScale = 1000;

// Axis-aligned box on the normalized 0..1000 page scale.
struct BoundingBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  bool valid() const {
    return 0 <= x1 && x1 <= x2 && x2 <= kPageScale && 0 <= y1 && y1 <= y2 &&
           y2 <= kPageScale;
  }
  bool contains(const BoundingBox& other) const {
    return x1 <= other.x1 && y1 <= other.y1 && other.x2 <= x2 &&
           other.y2 <= y2;
  }
  int width() const { return x2 - x1; }
  int height() const { return y2 - y1; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Token {
  std::string text;
  BoundingBox box;

  friend bool operator==(const Token&, const Token&) = default;
};

enum class Role : std::uint8_t { kKey = 0, kValue = 1 };

std::string_view role_name(Role role);

// Token range [start, end) tagged with a key/value role.
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  Role role = Role::kKey;
  std::string entity_type;

  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
  friend auto operator<=>(const EntitySpan&, const EntitySpan&) = default;
};

struct RelationAnnotation {
  std::string relation_type;
  std::vector<EntitySpan> key_spans;
  std::vector<EntitySpan> value_spans;

  friend bool operator==(const RelationAnnotation&,
                         const RelationAnnotation&) = default;
};

struct Document {
  std::string id;
  int page_width = kPageScale;
  int page_height = kPageScale;
  std::vector<Token> tokens;
  std::vector<RelationAnnotation> relations;

  const RelationAnnotation* find_relation(std::string_view type) const;
  // Every key and value span of every relation.
  std::vector<EntitySpan> all_spans() const;

  friend bool operator==(const Document&, const Document&) = default;
};

struct LabelSchema {
  std::vector<std::string> entity_types;
  std::map<std::string, std::string> coarse_groups;

  friend bool operator==(const LabelSchema&, const LabelSchema&) = default;
};

enum class Bio : std::uint8_t { kBegin = 0, kInside = 1 };

// Collapsed label space: O, then per entity type Key-B, Key-I, Value-B,
// Value-I. Built through collapse_label_space().
class LabelSpace {
 public:
  static constexpr std::uint32_t kOutside = 0;

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::string>& entity_types() const { return types_; }
  const std::string& name(std::uint32_t label) const { return labels_.at(label); }

  std::optional<std::size_t> type_index(std::string_view entity_type) const;
  std::uint32_t label(std::size_t type_index, Role role, Bio bio) const {
    return 1 + static_cast<std::uint32_t>(4 * type_index) +
           2 * static_cast<std::uint32_t>(role) + static_cast<std::uint32_t>(bio);
  }
  // Decomposition of a non-O label.
  std::size_t label_type(std::uint32_t label) const { return (label - 1) / 4; }
  Role label_role(std::uint32_t label) const {
    return static_cast<Role>(((label - 1) / 2) % 2);
  }
  Bio label_bio(std::uint32_t label) const {
    return static_cast<Bio>((label - 1) % 2);
  }

 private:
  friend LabelSpace collapse_label_space(const LabelSchema& schema);
  std::vector<std::string> types_;
  std::vector<std::string> labels_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct TagSequence {
  std::vector<std::uint32_t> labels;

  friend bool operator==(const TagSequence&, const TagSequence&) = default;
};

// Throws Error(kSchema) on empty or duplicate entity types.
LabelSpace collapse_label_space(const LabelSchema& schema);

// BIO-encodes the document's spans. With a filter only that relation's spans
// are labeled. Throws kAnnotation on overlapping spans, kSchema on an entity
// type missing from the label space.
TagSequence encode_tags(const Document& doc, const LabelSpace& space,
                        std::optional<std::string_view> relation_filter = {});

// Maximal B-I runs become spans; a stray I opens a new span.
std::vector<EntitySpan> decode_spans(const TagSequence& tags,
                                     const LabelSpace& space);

struct Violation {
  std::string location;
  std::string message;
};

// Reports every invariant violation; empty iff the document is valid.
std::vector<Violation> validate_document(const Document& doc);

// Copy of `doc` keeping only the relation of type `keep`; tokens unchanged.
// Throws Error(kMask) when the relation is absent.
Document mask_document(const Document& doc, std::string_view keep);

struct RawBox {
  double x1 = 0;
  double y1 = 0;
  double x2 = 0;
  double y2 = 0;
};

// Pixel boxes to the 0..1000 scale: floor(c * 1000 / dim), clamped.
std::vector<BoundingBox> normalize_boxes(std::span<const RawBox> raw,
                                         int page_width, int page_height);

}  // namespace fskv

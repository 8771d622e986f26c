#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tagprime {

// Half-open token range [start, end).
struct Span {
  int start = 0;
  int end = 0;

  bool operator==(const Span& o) const { return start == o.start && end == o.end; }
  bool operator<(const Span& o) const {
    return start != o.start ? start < o.start : end < o.end;
  }
  int length() const { return end - start; }
  bool overlaps(const Span& o) const { return start < o.end && o.start < end; }
};

struct Passage {
  std::vector<std::string> tokens;
  std::string id;

  int length() const { return static_cast<int>(tokens.size()); }
};

enum class ConditionKind { Span, Concept };

// The anchor of an RSE instance: an in-passage span (event trigger,
// head-entity) or a bare concept (intent).
struct Condition {
  ConditionKind kind = ConditionKind::Span;
  Span span;  // meaningful iff kind == Span
  std::string type_label;

  bool operator==(const Condition& o) const {
    return kind == o.kind && type_label == o.type_label &&
           (kind == ConditionKind::Concept || span == o.span);
  }
};

// Label inventory plus verbalizer tables. Labels missing from a table get
// an identity fallback (label split on non-letters, lowercased).
struct RelationSchema {
  std::vector<std::string> condition_types;
  std::vector<std::string> relation_labels;
  std::map<std::string, std::vector<std::string>> verbalizer;
  std::map<std::string, std::vector<std::string>> condition_verbalizer;
  std::string separator = "[SEP]";

  bool has_relation(const std::string& label) const;
  bool has_condition_type(const std::string& label) const;

  // Throws std::invalid_argument naming the label when it is not in the
  // schema; falls back to identity verbalization when only the table
  // entry is missing.
  std::vector<std::string> verbalize_relation(const std::string& label) const;
  std::vector<std::string> verbalize_condition_type(const std::string& label) const;

  uint64_t hash() const;
};

// Identity fallback used by both verbalizer tables.
std::vector<std::string> fallback_verbalize(const std::string& label);

struct RelationalStructure {
  std::vector<Span> spans;
  std::vector<std::string> relations;  // parallel to spans

  int size() const { return static_cast<int>(spans.size()); }
  bool operator==(const RelationalStructure& o) const {
    return spans == o.spans && relations == o.relations;
  }
};

// Sorts pairs by (start, end, relation) for order-independent comparison.
RelationalStructure normalized(const RelationalStructure& s);

struct RSEInstance {
  Passage passage;
  Condition condition;
  RelationalStructure gold;
};

// Returns human-readable descriptions of every invariant violation;
// empty means the instance is well-formed w.r.t. the schema.
std::vector<std::string> validate_instance(const RSEInstance& inst,
                                           const RelationSchema& schema);

struct OverlapResolution {
  RelationalStructure structure;
  std::vector<std::string> warnings;  // one "dropped overlap" line per drop
};

// BIO cannot express overlapping spans: keep the span with the smaller
// start (ties: the longer one), drop the rest with a warning.
OverlapResolution resolve_overlaps(const RelationalStructure& s);

}  // namespace tagprime

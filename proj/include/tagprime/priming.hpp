#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tagprime/types.hpp"

namespace tagprime {

enum class SegmentKind { Passage, ConditionWords, ConditionTypeWords, RelationWords };

struct Segment {
  SegmentKind kind;
  Span range;  // token positions within `tokens`
};

// Model input: passage tokens plus optional verbalized priming segments.
// Layout: passage | SEP cond-span-words | SEP cond-type-words | SEP relation-words.
// The relation segment (including its leading SEP) restarts positional
// indices at 0 so the split encoder can fuse it at any layer.
struct PrimedInput {
  std::vector<std::string> tokens;
  int passage_len = 0;
  std::vector<Segment> segments;
  std::vector<bool> loss_mask;  // true exactly on passage positions
  int relation_segment_start = -1;  // token index of the relation SEP, -1 if absent

  int length() const { return static_cast<int>(tokens.size()); }
};

// Which learnable feature embeddings the encoder should concatenate to z_i.
struct FeatureRequest {
  std::optional<Span> span_feature;    // condition span token-average
  std::optional<std::string> type_id;  // condition type embedding
  std::optional<std::string> relation_id;
  // When set, the requested feature vectors are zeroed (dimensions kept).
  // Used for feature dropout during training.
  bool zeroed = false;

  bool any() const { return span_feature || type_id || relation_id; }
};

// Condition priming (plus relationship priming when `relation` is set).
PrimedInput build_input(const Passage& passage, const Condition& condition,
                        const RelationSchema& schema,
                        const std::optional<std::string>& relation = std::nullopt);

// The non-priming baseline: passage-only input plus a conditional-feature
// request (span average iff the condition is a span; type id; relation id
// iff `relation` is set).
std::pair<PrimedInput, FeatureRequest> feature_inputs(
    const Passage& passage, const Condition& condition, const RelationSchema& schema,
    const std::optional<std::string>& relation = std::nullopt);

// Passage with no priming and no features.
PrimedInput plain_input(const Passage& passage);

}  // namespace tagprime

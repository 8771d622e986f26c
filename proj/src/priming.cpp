#include "tagprime/priming.hpp"

#include <stdexcept>

namespace tagprime {

PrimedInput plain_input(const Passage& passage) {
  PrimedInput in;
  in.tokens = passage.tokens;
  in.passage_len = passage.length();
  in.segments.push_back({SegmentKind::Passage, {0, in.passage_len}});
  in.loss_mask.assign(in.passage_len, true);
  return in;
}

PrimedInput build_input(const Passage& passage, const Condition& condition,
                        const RelationSchema& schema,
                        const std::optional<std::string>& relation) {
  if (condition.kind == ConditionKind::Span) {
    const int n = passage.length();
    if (!(0 <= condition.span.start && condition.span.start < condition.span.end &&
          condition.span.end <= n)) {
      throw std::invalid_argument("condition span out of bounds");
    }
  }
  PrimedInput in = plain_input(passage);
  auto append_segment = [&](SegmentKind kind, const std::vector<std::string>& words) {
    in.tokens.push_back(schema.separator);
    int start = in.length();
    for (const auto& w : words) in.tokens.push_back(w);
    in.segments.push_back({kind, {start, in.length()}});
  };
  if (condition.kind == ConditionKind::Span) {
    std::vector<std::string> span_words(
        passage.tokens.begin() + condition.span.start,
        passage.tokens.begin() + condition.span.end);
    append_segment(SegmentKind::ConditionWords, span_words);
  }
  append_segment(SegmentKind::ConditionTypeWords,
                 schema.verbalize_condition_type(condition.type_label));
  if (relation) {
    in.relation_segment_start = in.length();
    append_segment(SegmentKind::RelationWords, schema.verbalize_relation(*relation));
  }
  in.loss_mask.resize(in.length(), false);
  return in;
}

std::pair<PrimedInput, FeatureRequest> feature_inputs(
    const Passage& passage, const Condition& condition, const RelationSchema& schema,
    const std::optional<std::string>& relation) {
  if (condition.kind == ConditionKind::Span) {
    const int n = passage.length();
    if (!(0 <= condition.span.start && condition.span.start < condition.span.end &&
          condition.span.end <= n)) {
      throw std::invalid_argument("condition span out of bounds");
    }
  }
  if (!schema.has_condition_type(condition.type_label)) {
    throw std::invalid_argument("unknown condition type: " + condition.type_label);
  }
  if (relation && !schema.has_relation(*relation)) {
    throw std::invalid_argument("unknown relation label: " + *relation);
  }
  FeatureRequest req;
  if (condition.kind == ConditionKind::Span) req.span_feature = condition.span;
  req.type_id = condition.type_label;
  if (relation) req.relation_id = *relation;
  return {plain_input(passage), req};
}

}  // namespace tagprime

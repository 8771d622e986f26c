#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tagprime/types.hpp"

namespace tagprime {

// Deterministic synthetic RSE task. Each relation owns a cue token placed
// next to its gold spans; with probability `ambiguity_rate` a span carries
// a cue shared between a relation pair instead, and the true relation is
// determined by the condition type's group. Condition-unaware models
// therefore cannot resolve ambiguous spans.
struct SynthSpec {
  uint64_t seed = 0;
  int filler_vocab = 50;
  int min_len = 8, max_len = 16;     // target passage length before span blocks
  int num_relations = 6;
  int num_condition_types = 4;
  int min_spans = 1, max_spans = 3;
  double cue_strength = 1.0;         // P(cue token adjacent to a gold span)
  double ambiguity_rate = 0.0;       // P(span uses a shared two-relation cue)
  double multi_relation_rate = 0.0;  // P(span carries two relations)
  double distractor_rate = 0.5;      // P(a second, non-condition type token appears)
  int condition_pool = 0;            // sample condition types from [0, pool); 0 = all.
                                     // A train pool smaller than the schema leaves
                                     // held-out types for generalization tests.

  void validate() const;
};

struct SynthCorpus {
  std::vector<RSEInstance> instances;
  RelationSchema schema;
};

SynthCorpus generate(const SynthSpec& spec, int count);

RelationSchema make_synth_schema(const SynthSpec& spec);

// Reads the cues back out of the passage; with cue_strength 1 this is a
// perfect extractor by construction. Independent of any model.
RelationalStructure rule_based_extract(const Passage& passage, const Condition& condition,
                                       const SynthSpec& spec);

nlohmann::json synth_spec_to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

}  // namespace tagprime

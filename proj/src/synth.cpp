#include "tagprime/synth.hpp"

#include <random>
#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace tagprime {

using nlohmann::json;

void SynthSpec::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(cue_strength) || !prob(ambiguity_rate) || !prob(multi_relation_rate) ||
      !prob(distractor_rate)) {
    throw std::invalid_argument("synth probabilities must be in [0,1]");
  }
  if (filler_vocab < 1 || num_relations < 1 || num_condition_types < 1) {
    throw std::invalid_argument("synth counts must be positive");
  }
  if (min_len < 1 || min_len > max_len || min_spans < 0 || min_spans > max_spans) {
    throw std::invalid_argument("synth ranges must be non-empty");
  }
  if (condition_pool < 0 || condition_pool > num_condition_types) {
    throw std::invalid_argument("condition_pool must be in [0, num_condition_types]");
  }
  if (ambiguity_rate > 0 && (num_relations < 2 || num_condition_types < 2)) {
    throw std::invalid_argument(
        "ambiguity requires >= 2 relations and >= 2 condition types");
  }
  if (multi_relation_rate > 0 && num_relations < 2) {
    throw std::invalid_argument("multi-relation spans require >= 2 relations");
  }
}

namespace {

std::string filler(int k) { return "w" + std::to_string(k); }
std::string cue(int r) { return "q" + std::to_string(r); }
std::string shared_cue(int pair) { return "s" + std::to_string(pair); }
std::string cond_tok(int t) { return "c" + std::to_string(t); }
std::string content(int k) { return "a" + std::to_string(k); }

constexpr int kContentVocab = 20;

bool is_content(const std::string& tok) { return tok.size() >= 2 && tok[0] == 'a'; }

int parse_suffix(const std::string& tok) { return std::stoi(tok.substr(1)); }

}  // namespace

RelationSchema make_synth_schema(const SynthSpec& spec) {
  RelationSchema schema;
  for (int t = 0; t < spec.num_condition_types; ++t) {
    std::string label = "T" + std::to_string(t);
    schema.condition_types.push_back(label);
    // Verbalization exposes the type's group word — the only semantics a
    // synthetic type carries, and shared across types, so it transfers to
    // condition types never seen in training.
    schema.condition_verbalizer[label] = {"g" + std::to_string(t % 2)};
  }
  for (int r = 0; r < spec.num_relations; ++r) {
    std::string label = "R" + std::to_string(r);
    schema.relation_labels.push_back(label);
    schema.verbalizer[label] = {cue(r), shared_cue(r / 2)};
  }
  return schema;
}

SynthCorpus generate(const SynthSpec& spec, int count) {
  spec.validate();
  SynthCorpus out;
  out.schema = make_synth_schema(spec);
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&](int lo, int hi) {  // inclusive
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  auto coin = [&](double p) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
  };

  const int num_pairs = spec.num_relations / 2;
  const int pool =
      spec.condition_pool > 0 ? spec.condition_pool : spec.num_condition_types;

  for (int idx = 0; idx < count; ++idx) {
    struct Block {
      std::vector<std::string> tokens;
      bool is_condition = false;
      std::vector<std::string> relations;  // for span blocks
      int span_offset = 0, span_len = 0;   // span position within the block
    };
    std::vector<Block> blocks;

    const int cond_type = uniform(0, pool - 1);
    Block cb;
    cb.tokens = {cond_tok(cond_type)};
    cb.is_condition = true;
    blocks.push_back(cb);

    if (pool > 1 && coin(spec.distractor_rate)) {
      int other = (cond_type + uniform(1, pool - 1)) % pool;
      Block db;
      db.tokens = {cond_tok(other)};
      blocks.push_back(db);
    }

    const int m = uniform(spec.min_spans, spec.max_spans);
    for (int s = 0; s < m; ++s) {
      Block b;
      bool cued = coin(spec.cue_strength);
      bool multi = cued && coin(spec.multi_relation_rate) && spec.num_relations >= 2;
      bool ambiguous = cued && !multi && num_pairs >= 1 && coin(spec.ambiguity_rate);
      if (multi) {
        int r1 = uniform(0, spec.num_relations - 1);
        int r2 = (r1 + uniform(1, spec.num_relations - 1)) % spec.num_relations;
        b.tokens = {cue(r1), content(uniform(0, kContentVocab - 1)), cue(r2)};
        b.span_offset = 1;
        b.span_len = 1;
        b.relations = {"R" + std::to_string(r1), "R" + std::to_string(r2)};
      } else if (ambiguous) {
        int pair = uniform(0, num_pairs - 1);
        int r = pair * 2 + cond_type % 2;  // resolved by the condition group
        int len = uniform(1, 2);
        b.tokens = {shared_cue(pair)};
        for (int k = 0; k < len; ++k) b.tokens.push_back(content(uniform(0, kContentVocab - 1)));
        b.span_offset = 1;
        b.span_len = len;
        b.relations = {"R" + std::to_string(r)};
      } else if (cued) {
        int r = uniform(0, spec.num_relations - 1);
        int len = uniform(1, 2);
        b.tokens = {cue(r)};
        for (int k = 0; k < len; ++k) b.tokens.push_back(content(uniform(0, kContentVocab - 1)));
        b.span_offset = 1;
        b.span_len = len;
        b.relations = {"R" + std::to_string(r)};
      } else {
        int r = uniform(0, spec.num_relations - 1);
        int len = uniform(1, 2);
        for (int k = 0; k < len; ++k) b.tokens.push_back(content(uniform(0, kContentVocab - 1)));
        b.span_offset = 0;
        b.span_len = len;
        b.relations = {"R" + std::to_string(r)};
      }
      blocks.push_back(b);
    }

    // Deterministic shuffle of blocks.
    for (size_t i = blocks.size(); i > 1; --i) {
      std::swap(blocks[i - 1], blocks[static_cast<size_t>(uniform(0, static_cast<int>(i) - 1))]);
    }

    RSEInstance inst;
    inst.passage.id = "synth-" + std::to_string(idx);
    auto emit_fillers = [&](int lo, int hi) {
      int k = uniform(lo, hi);
      for (int i = 0; i < k; ++i) {
        inst.passage.tokens.push_back(filler(uniform(0, spec.filler_vocab - 1)));
      }
    };
    for (auto& b : blocks) {
      emit_fillers(1, 2);
      int base = inst.passage.length();
      for (auto& tok : b.tokens) inst.passage.tokens.push_back(tok);
      if (b.is_condition) {
        inst.condition = {ConditionKind::Span, {base, base + 1},
                          "T" + std::to_string(cond_type)};
      }
      for (const auto& rel : b.relations) {
        inst.gold.spans.push_back(
            {base + b.span_offset, base + b.span_offset + b.span_len});
        inst.gold.relations.push_back(rel);
      }
    }
    emit_fillers(1, 2);
    while (inst.passage.length() < spec.min_len) {
      inst.passage.tokens.push_back(filler(uniform(0, spec.filler_vocab - 1)));
    }
    out.instances.push_back(std::move(inst));
  }
  return out;
}

RelationalStructure rule_based_extract(const Passage& passage, const Condition& condition,
                                       const SynthSpec& spec) {
  RelationalStructure out;
  const auto& toks = passage.tokens;
  const int n = passage.length();
  int cond_type = 0;
  if (!condition.type_label.empty() && condition.type_label[0] == 'T') {
    cond_type = parse_suffix(condition.type_label);
  }
  int i = 0;
  while (i < n) {
    if (!is_content(toks[i])) {
      ++i;
      continue;
    }
    int start = i;
    while (i < n && is_content(toks[i])) ++i;
    // Content run [start, i); look at the neighbors for cues.
    if (start > 0 && toks[start - 1][0] == 'q') {
      out.spans.push_back({start, i});
      out.relations.push_back("R" + std::to_string(parse_suffix(toks[start - 1])));
      if (i < n && toks[i][0] == 'q') {
        out.spans.push_back({start, i});
        out.relations.push_back("R" + std::to_string(parse_suffix(toks[i])));
      }
    } else if (start > 0 && toks[start - 1][0] == 's') {
      int pair = parse_suffix(toks[start - 1]);
      int r = pair * 2 + cond_type % 2;
      if (r < spec.num_relations) {
        out.spans.push_back({start, i});
        out.relations.push_back("R" + std::to_string(r));
      }
    }
  }
  return out;
}

json synth_spec_to_json(const SynthSpec& spec) {
  return json{{"seed", spec.seed},
              {"filler_vocab", spec.filler_vocab},
              {"min_len", spec.min_len},
              {"max_len", spec.max_len},
              {"num_relations", spec.num_relations},
              {"num_condition_types", spec.num_condition_types},
              {"min_spans", spec.min_spans},
              {"max_spans", spec.max_spans},
              {"cue_strength", spec.cue_strength},
              {"ambiguity_rate", spec.ambiguity_rate},
              {"multi_relation_rate", spec.multi_relation_rate},
              {"distractor_rate", spec.distractor_rate},
              {"condition_pool", spec.condition_pool}};
}

SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec spec;
  const json defaults = synth_spec_to_json(spec);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) {
      throw std::invalid_argument("unknown synth spec key: " + key);
    }
    (void)value;
  }
  spec.seed = j.value("seed", spec.seed);
  spec.filler_vocab = j.value("filler_vocab", spec.filler_vocab);
  spec.min_len = j.value("min_len", spec.min_len);
  spec.max_len = j.value("max_len", spec.max_len);
  spec.num_relations = j.value("num_relations", spec.num_relations);
  spec.num_condition_types = j.value("num_condition_types", spec.num_condition_types);
  spec.min_spans = j.value("min_spans", spec.min_spans);
  spec.max_spans = j.value("max_spans", spec.max_spans);
  spec.cue_strength = j.value("cue_strength", spec.cue_strength);
  spec.ambiguity_rate = j.value("ambiguity_rate", spec.ambiguity_rate);
  spec.multi_relation_rate = j.value("multi_relation_rate", spec.multi_relation_rate);
  spec.distractor_rate = j.value("distractor_rate", spec.distractor_rate);
  spec.condition_pool = j.value("condition_pool", spec.condition_pool);
  spec.validate();
  return spec;
}

}  // namespace tagprime

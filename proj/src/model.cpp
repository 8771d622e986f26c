#include "tagprime/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "tagprime/metrics.hpp"

namespace tagprime {

VariantConfig VariantConfig::from_case(int case_id) {
  VariantConfig v;
  switch (case_id) {
    case 1: break;
    case 2: v.cond_feature = true; break;
    case 3: v.cond_priming = true; break;
    case 4: v.cond_feature = v.cond_priming = true; break;
    case 5: v.cond_feature = v.rel_feature = true; break;
    case 6: v.cond_priming = v.rel_priming = true; break;
    case 7: v.cond_feature = v.cond_priming = v.rel_priming = true; break;
    case 8: v.cond_feature = v.cond_priming = v.rel_feature = v.rel_priming = true; break;
    default: throw std::invalid_argument("ablation case must be 1..8");
  }
  v.decompose_by_relation = v.rel_feature || v.rel_priming;
  return v;
}

int VariantConfig::table_case() const {
  if (decompose_by_relation != (rel_feature || rel_priming)) {
    throw std::invalid_argument(
        "decompose_by_relation must equal rel_feature || rel_priming");
  }
  for (int c = 1; c <= 8; ++c) {
    VariantConfig v = from_case(c);
    if (v.cond_feature == cond_feature && v.cond_priming == cond_priming &&
        v.rel_feature == rel_feature && v.rel_priming == rel_priming) {
      return c;
    }
  }
  throw std::invalid_argument("variant flags do not match any ablation case");
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("epochs/batch_size must be positive");
  if (head_lr <= 0 || encoder_lr <= 0) throw std::invalid_argument("learning rates must be positive");
  if (head_decay < 0 || encoder_decay < 0) throw std::invalid_argument("weight decay must be non-negative");
  if (warmup_epochs < 0 || warmup_epochs > epochs) {
    throw std::invalid_argument("warmup must be in [0, epochs]");
  }
  if (grad_clip < 0) throw std::invalid_argument("grad_clip must be non-negative");
  if (feature_dropout < 0 || feature_dropout >= 1) {
    throw std::invalid_argument("feature_dropout must be in [0, 1)");
  }
  if (negative_subtask_ratio < 0) {
    throw std::invalid_argument("negative_subtask_ratio must be non-negative");
  }
}

std::vector<Tensor<float>*> TagPrimeModel::parameters() {
  auto params = stack.parameters();
  for (Tensor<float>* p : head.parameters()) params.push_back(p);
  params.push_back(&transitions);
  return params;
}

int TagPrimeModel::head_input_dim() const {
  int dim = enc_cfg.model_dim;
  if (variant.cond_feature) {
    if (conditions_are_spans) dim += enc_cfg.model_dim;  // span token-average
    dim += enc_cfg.feature_dim;                          // type embedding
  }
  if (variant.rel_feature) dim += enc_cfg.feature_dim;
  return dim;
}

namespace {

struct Example {
  const RSEInstance* inst = nullptr;
  std::optional<std::string> relation;  // set for decomposed subtasks
  PrimedInput input;
  FeatureRequest features;
  std::vector<int> gold_tags;
};

FeatureRequest make_features(const TagPrimeModel& model, const Condition& condition,
                             const std::optional<std::string>& relation) {
  FeatureRequest req;
  if (model.variant.cond_feature) {
    if (condition.kind == ConditionKind::Span) req.span_feature = condition.span;
    req.type_id = condition.type_label;
  }
  if (model.variant.rel_feature && relation) req.relation_id = *relation;
  return req;
}

PrimedInput make_input(const TagPrimeModel& model, const Passage& passage,
                       const Condition& condition,
                       const std::optional<std::string>& relation) {
  if (!model.variant.cond_priming) return plain_input(passage);
  std::optional<std::string> rel_for_priming =
      model.variant.rel_priming ? relation : std::nullopt;
  return build_input(passage, condition, model.schema, rel_for_priming);
}

std::vector<int> gold_tags_for(const TagPrimeModel& model, const RSEInstance& inst,
                               const std::optional<std::string>& relation,
                               std::vector<std::string>* warnings) {
  RelationalStructure structure;
  if (relation) {
    for (int i = 0; i < inst.gold.size(); ++i) {
      if (inst.gold.relations[i] == *relation) {
        structure.spans.push_back(inst.gold.spans[i]);
        structure.relations.push_back(inst.gold.relations[i]);
      }
    }
  } else {
    structure = inst.gold;
  }
  auto resolved = resolve_overlaps(structure);
  if (warnings) {
    for (auto& w : resolved.warnings) warnings->push_back(inst.passage.id + ": " + w);
  }
  TagSequence seq = encode_tags(resolved.structure, inst.passage.length(), model.scheme,
                                model.schema.relation_labels, relation);
  return seq.tags;
}

// Forward pass to the NLL loss node for one training example.
int example_loss(Tape<float>& tape, TagPrimeModel& model, const Example& ex, Mode mode,
                 std::mt19937_64& rng, bool stochastic_split,
                 double feature_dropout = 0.0) {
  FeatureRequest features = ex.features;
  if (mode == Mode::Train && feature_dropout > 0 && features.any()) {
    features.zeroed =
        std::uniform_real_distribution<double>(0.0, 1.0)(rng) < feature_dropout;
  }
  int reps;
  if (model.variant.rel_priming && stochastic_split) {
    int k = std::uniform_int_distribution<int>(0, model.enc_cfg.layers)(rng);
    PrimedInput base = build_input(ex.inst->passage, ex.inst->condition, model.schema);
    std::vector<std::vector<std::string>> rel_words{
        model.schema.verbalize_relation(*ex.relation)};
    std::vector<const FeatureRequest*> feats{&features};
    reps = encode_split_on_tape(tape, model.stack, model.vocab, base, rel_words,
                                SplitConfig{k}, feats, mode, &rng,
                                model.schema.separator)[0];
  } else {
    reps = encode_on_tape(tape, model.stack, model.vocab, ex.input, &features, mode,
                          &rng);
  }
  int emissions = head_on_tape(tape, model.head, reps, model.enc_cfg, mode, &rng);
  int trans = tape.param(model.transitions);
  return crf_nll_node(tape, emissions, trans, model.mask, ex.gold_tags);
}

// Adam with decoupled weight decay, two parameter groups (encoder vs.
// head/features/CRF).
class AdamW {
 public:
  struct Group {
    double lr, decay;
  };

  AdamW(std::vector<Tensor<float>*> params, Group enc, Group head)
      : params_(std::move(params)), enc_(enc), head_(head) {
    states_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      states_[i].m.setZero(params_[i]->value.rows(), params_[i]->value.cols());
      states_[i].v.setZero(params_[i]->value.rows(), params_[i]->value.cols());
    }
  }

  void step(double lr_factor) {
    ++t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, t_);
    const double bc2 = 1.0 - std::pow(b2, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor<float>& p = *params_[i];
      const Group& g =
          p.name.rfind("enc.", 0) == 0 ? enc_ : head_;
      auto& s = states_[i];
      s.m = b1 * s.m + (1.0 - b1) * p.grad.cast<double>();
      s.v = b2 * s.v + (1.0 - b2) * p.grad.cast<double>().cwiseAbs2();
      const double lr = g.lr * lr_factor;
      Eigen::MatrixXd update =
          ((s.m / bc1).array() / ((s.v / bc2).array().sqrt() + eps)).matrix();
      update += g.decay * p.value.cast<double>();
      p.value -= (lr * update).cast<float>();
    }
  }

 private:
  struct State {
    Eigen::MatrixXd m, v;
  };
  std::vector<Tensor<float>*> params_;
  std::vector<State> states_;
  Group enc_, head_;
  long t_ = 0;
};

double lr_factor(int epoch, const TrainConfig& cfg) {
  if (epoch < cfg.warmup_epochs) {
    return static_cast<double>(epoch + 1) / cfg.warmup_epochs;
  }
  if (cfg.epochs == cfg.warmup_epochs) return 1.0;
  return static_cast<double>(cfg.epochs - epoch) /
         static_cast<double>(cfg.epochs - cfg.warmup_epochs);
}

TagPrimeModel build_model(const std::vector<RSEInstance>& corpus,
                          const RelationSchema& schema, const VariantConfig& variant,
                          const EncoderConfig& enc_cfg, uint64_t seed) {
  TagPrimeModel model;
  model.schema = schema;
  model.schema_hash = schema.hash();
  model.variant = variant;
  model.variant.validate();
  model.conditions_are_spans = corpus.front().condition.kind == ConditionKind::Span;
  for (const auto& inst : corpus) {
    bool is_span = inst.condition.kind == ConditionKind::Span;
    if (is_span != model.conditions_are_spans) {
      throw std::invalid_argument("corpus mixes span and concept conditions");
    }
  }
  model.vocab = SubwordVocab::build(corpus, schema);
  model.enc_cfg = enc_cfg;
  model.enc_cfg.vocab_size = model.vocab.size();
  model.scheme =
      variant.decompose_by_relation ? TagScheme::Binary : TagScheme::RoleTyped;
  model.tagset = make_tagset(model.scheme, schema.relation_labels);
  model.stack = init_stack<float>(model.enc_cfg, schema.condition_types,
                                  schema.relation_labels, seed);
  model.head = init_head<float>(model.head_input_dim(), model.enc_cfg.head_hidden,
                                model.num_tags(), seed + 1);
  model.mask = make_bio_mask(model.num_tags(), model.crf_constrained);
  std::mt19937_64 rng(seed + 2);
  netdetail::init_tensor(model.transitions, "crf.transitions", model.num_tags() + 2,
                         model.num_tags() + 2, rng, 0.02f);
  return model;
}

}  // namespace

TagPrimeModel train_model(const std::vector<RSEInstance>& corpus,
                          const RelationSchema& schema, const VariantConfig& variant,
                          const EncoderConfig& enc_cfg, const TrainConfig& train_cfg,
                          TrainLog* log) {
  train_cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("training corpus is empty");
  for (const auto& inst : corpus) {
    auto violations = validate_instance(inst, schema);
    if (!violations.empty()) {
      throw std::invalid_argument("instance " + inst.passage.id + ": " +
                                  violations.front());
    }
  }

  TagPrimeModel model = build_model(corpus, schema, variant, enc_cfg, train_cfg.seed);

  TrainLog local_log;
  TrainLog& tl = log ? *log : local_log;

  // Decomposed variants expand every instance into one binary subtask per
  // relation label, negatives included.
  std::vector<Example> examples;
  for (const auto& inst : corpus) {
    if (variant.decompose_by_relation) {
      for (const auto& rel : schema.relation_labels) {
        Example ex;
        ex.inst = &inst;
        ex.relation = rel;
        ex.input = make_input(model, inst.passage, inst.condition, rel);
        ex.features = make_features(model, inst.condition, rel);
        ex.gold_tags = gold_tags_for(model, inst, rel, &tl.warnings);
        examples.push_back(std::move(ex));
      }
    } else {
      Example ex;
      ex.inst = &inst;
      ex.input = make_input(model, inst.passage, inst.condition, std::nullopt);
      ex.features = make_features(model, inst.condition, std::nullopt);
      ex.gold_tags = gold_tags_for(model, inst, std::nullopt, &tl.warnings);
      examples.push_back(std::move(ex));
    }
  }

  // Indices of all-negative subtasks, candidates for per-epoch subsampling.
  std::vector<size_t> negatives;
  const bool subsample =
      variant.decompose_by_relation && train_cfg.negative_subtask_ratio > 0;
  if (subsample) {
    for (size_t i = 0; i < examples.size(); ++i) {
      const auto& tags = examples[i].gold_tags;
      if (std::all_of(tags.begin(), tags.end(), [](int t) { return t == 0; })) {
        negatives.push_back(i);
      }
    }
  }

  AdamW optimizer(model.parameters(), {train_cfg.encoder_lr, train_cfg.encoder_decay},
                  {train_cfg.head_lr, train_cfg.head_decay});
  std::mt19937_64 rng(train_cfg.seed * 0x9e3779b97f4a7c15ULL + 1);

  std::vector<size_t> order;
  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    order.clear();
    if (subsample) {
      const size_t num_pos = examples.size() - negatives.size();
      size_t keep = std::min(
          negatives.size(),
          static_cast<size_t>(train_cfg.negative_subtask_ratio *
                              static_cast<double>(num_pos)));
      for (size_t i = 0; i < examples.size(); ++i) order.push_back(i);
      // Remove all negatives, then re-add a fresh sample of them.
      order.erase(std::remove_if(order.begin(), order.end(),
                                 [&](size_t i) {
                                   const auto& tags = examples[i].gold_tags;
                                   return std::all_of(tags.begin(), tags.end(),
                                                      [](int t) { return t == 0; });
                                 }),
                  order.end());
      std::vector<size_t> pool = negatives;
      for (size_t i = 0; i < keep; ++i) {
        size_t j = std::uniform_int_distribution<size_t>(i, pool.size() - 1)(rng);
        std::swap(pool[i], pool[j]);
        order.push_back(pool[i]);
      }
    } else {
      for (size_t i = 0; i < examples.size(); ++i) order.push_back(i);
    }
    // Fisher-Yates with our own rng keeps runs reproducible across stdlibs.
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = std::uniform_int_distribution<size_t>(0, i - 1)(rng);
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0;
    const double factor = lr_factor(epoch, train_cfg);
    for (size_t b = 0; b < order.size(); b += train_cfg.batch_size) {
      size_t b_end = std::min(order.size(), b + train_cfg.batch_size);
      for (Tensor<float>* p : model.parameters()) p->zero_grad();
      const float inv = 1.0f / static_cast<float>(b_end - b);
      for (size_t i = b; i < b_end; ++i) {
        Tape<float> tape;
        int loss = example_loss(tape, model, examples[order[i]], Mode::Train, rng,
                                train_cfg.stochastic_split, train_cfg.feature_dropout);
        epoch_loss += tape.val(loss)(0, 0);
        tape.backward(loss, inv);
      }
      if (train_cfg.grad_clip > 0) {
        double sq = 0;
        for (Tensor<float>* p : model.parameters()) {
          sq += p->grad.cast<double>().squaredNorm();
        }
        const double norm = std::sqrt(sq);
        if (norm > train_cfg.grad_clip) {
          const float scale = static_cast<float>(train_cfg.grad_clip / norm);
          for (Tensor<float>* p : model.parameters()) p->grad *= scale;
        }
      }
      optimizer.step(factor);
    }
    tl.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return model;
}

RelationalStructure predict(TagPrimeModel& model, const Passage& passage,
                            const Condition& condition, PredictDebug* debug) {
  RelationalStructure out;
  Eigen::MatrixXf trans = model.transitions.value;

  auto decode_emissions = [&](const Eigen::MatrixXf& emissions,
                              const std::optional<std::string>& relation) {
    auto [tags, score] = viterbi<float>(emissions, trans, model.mask);
    (void)score;
    TagSequence seq;
    seq.tags = tags;
    seq.scheme = model.scheme;
    seq.tagset = model.tagset;
    if (debug) debug->subtask_tags.emplace_back(relation.value_or(""), seq);
    RelationalStructure part = decode_tags(seq, relation);
    for (int i = 0; i < part.size(); ++i) {
      out.spans.push_back(part.spans[i]);
      out.relations.push_back(part.relations[i]);
    }
  };

  auto head_values = [&](Tape<float>& tape, int reps) {
    int emissions = head_on_tape(tape, model.head, reps, model.enc_cfg, Mode::Infer);
    return tape.val(emissions);
  };

  if (!model.variant.decompose_by_relation) {
    Tape<float> tape;
    PrimedInput input = make_input(model, passage, condition, std::nullopt);
    FeatureRequest req = make_features(model, condition, std::nullopt);
    int reps = encode_on_tape(tape, model.stack, model.vocab, input, &req, Mode::Infer);
    decode_emissions(head_values(tape, reps), std::nullopt);
    return out;
  }

  if (model.variant.rel_priming) {
    // One shared split encode over all relation subtasks.
    Tape<float> tape;
    PrimedInput base = build_input(passage, condition, model.schema);
    std::vector<std::vector<std::string>> rel_words;
    std::vector<FeatureRequest> reqs;
    for (const auto& rel : model.schema.relation_labels) {
      rel_words.push_back(model.schema.verbalize_relation(rel));
      reqs.push_back(make_features(model, condition, rel));
    }
    std::vector<const FeatureRequest*> req_ptrs;
    for (auto& r : reqs) req_ptrs.push_back(&r);
    auto nodes = encode_split_on_tape(tape, model.stack, model.vocab, base, rel_words,
                                      model.infer_split, req_ptrs, Mode::Infer, nullptr,
                                      model.schema.separator);
    for (size_t r = 0; r < nodes.size(); ++r) {
      decode_emissions(head_values(tape, nodes[r]), model.schema.relation_labels[r]);
    }
    return out;
  }

  // Relation features without relation priming (case 5): one plain pass
  // per relation with a different relation embedding each time.
  for (const auto& rel : model.schema.relation_labels) {
    Tape<float> tape;
    PrimedInput input = make_input(model, passage, condition, rel);
    FeatureRequest req = make_features(model, condition, rel);
    int reps = encode_on_tape(tape, model.stack, model.vocab, input, &req, Mode::Infer);
    decode_emissions(head_values(tape, reps), rel);
  }
  return out;
}

TagPrimeModel train_condition_detector(const std::vector<RSEInstance>& corpus,
                                       const RelationSchema& schema,
                                       const EncoderConfig& enc_cfg,
                                       const TrainConfig& train_cfg, TrainLog* log) {
  RelationSchema detector_schema;
  detector_schema.condition_types = {"NONE"};
  detector_schema.relation_labels = schema.condition_types;
  detector_schema.verbalizer = schema.condition_verbalizer;
  detector_schema.separator = schema.separator;

  // Group by passage id: one detection instance per passage, gold spans =
  // all conditions seen for it.
  std::map<std::string, RSEInstance> by_id;
  for (const auto& inst : corpus) {
    if (inst.condition.kind != ConditionKind::Span) {
      throw std::invalid_argument("condition detector requires span conditions");
    }
    auto [it, fresh] = by_id.try_emplace(inst.passage.id);
    RSEInstance& d = it->second;
    if (fresh) {
      d.passage = inst.passage;
      d.condition = {ConditionKind::Concept, {}, "NONE"};
    }
    bool dup = false;
    for (int i = 0; i < d.gold.size(); ++i) {
      if (d.gold.spans[i] == inst.condition.span &&
          d.gold.relations[i] == inst.condition.type_label) {
        dup = true;
      }
    }
    if (!dup) {
      d.gold.spans.push_back(inst.condition.span);
      d.gold.relations.push_back(inst.condition.type_label);
    }
  }
  std::vector<RSEInstance> detector_corpus;
  for (auto& [id, inst] : by_id) detector_corpus.push_back(std::move(inst));

  return train_model(detector_corpus, detector_schema, VariantConfig::from_case(1),
                     enc_cfg, train_cfg, log);
}

std::vector<Condition> predict_conditions(TagPrimeModel& detector,
                                          const Passage& passage) {
  RelationalStructure s = predict(detector, passage, {ConditionKind::Concept, {}, "NONE"});
  std::vector<Condition> out;
  for (int i = 0; i < s.size(); ++i) {
    out.push_back({ConditionKind::Span, s.spans[i], s.relations[i]});
  }
  std::sort(out.begin(), out.end(), [](const Condition& a, const Condition& b) {
    return a.span < b.span;
  });
  return out;
}

double corpus_strict_f1(TagPrimeModel& model, const std::vector<RSEInstance>& corpus,
                        Task task) {
  std::vector<Prediction> preds;
  for (auto& inst : corpus) {
    Prediction p;
    p.id = inst.passage.id;
    p.condition = inst.condition;
    p.structure = predict(model, inst.passage, inst.condition);
    preds.push_back(std::move(p));
  }
  EvalReport report = score(corpus, preds, task);
  return report.at(strict_metric(task)).f1;
}

}  // namespace tagprime

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "tagprime/checkpoint.hpp"
#include "tagprime/metrics.hpp"
#include "tagprime/model.hpp"
#include "tagprime/synth.hpp"

using namespace tagprime;

namespace {

// Small-but-trainable settings: from-scratch encoders need larger learning
// rates than fine-tuning defaults.
EncoderConfig tiny_encoder() {
  EncoderConfig cfg;
  cfg.model_dim = 32;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.feedforward_dim = 64;
  cfg.feature_dim = 16;
  cfg.head_hidden = 32;
  cfg.max_len = 128;
  return cfg;
}

TrainConfig fast_train(int epochs, uint64_t seed) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.warmup_epochs = std::min(5, epochs);
  tc.seed = seed;
  tc.encoder_lr = 1e-3;
  tc.head_lr = 3e-3;
  tc.batch_size = 8;
  return tc;
}

}  // namespace

TEST_CASE("variant case table is a bijection over the 8 admissible combinations") {
  for (int c = 1; c <= 8; ++c) {
    VariantConfig v = VariantConfig::from_case(c);
    CHECK(v.table_case() == c);
    CHECK(v.decompose_by_relation == (v.rel_feature || v.rel_priming));
  }
  CHECK(VariantConfig::from_case(7).cond_priming);
  CHECK(VariantConfig::from_case(7).rel_priming);
  CHECK_FALSE(VariantConfig::from_case(7).rel_feature);
  CHECK_THROWS_AS(VariantConfig::from_case(0), std::invalid_argument);
  CHECK_THROWS_AS(VariantConfig::from_case(9), std::invalid_argument);

  VariantConfig bad;
  bad.rel_priming = true;  // decompose flag not set
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  tc.warmup_epochs = tc.epochs + 1;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.head_lr = 0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.grad_clip = -0.5;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
}

TEST_CASE("feature dropout changes feature-variant training only") {
  SynthSpec spec;
  spec.seed = 8;
  auto corpus = generate(spec, 20);
  auto cfg = fast_train(5, 13);
  auto dropped = cfg;
  dropped.feature_dropout = 0.5;

  TrainLog plain2, drop2, drop2b;
  train_model(corpus.instances, corpus.schema, VariantConfig::from_case(2),
              tiny_encoder(), cfg, &plain2);
  train_model(corpus.instances, corpus.schema, VariantConfig::from_case(2),
              tiny_encoder(), dropped, &drop2);
  train_model(corpus.instances, corpus.schema, VariantConfig::from_case(2),
              tiny_encoder(), dropped, &drop2b);
  CHECK(plain2.epoch_losses != drop2.epoch_losses);
  CHECK(drop2.epoch_losses == drop2b.epoch_losses);  // deterministic

  // Case 1 has no conditional features, so the knob must be a no-op there.
  TrainLog plain1, drop1;
  train_model(corpus.instances, corpus.schema, VariantConfig::from_case(1),
              tiny_encoder(), cfg, &plain1);
  train_model(corpus.instances, corpus.schema, VariantConfig::from_case(1),
              tiny_encoder(), dropped, &drop1);
  CHECK(plain1.epoch_losses == drop1.epoch_losses);

  auto bad = cfg;
  bad.feature_dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("negative subtask subsampling applies to decomposed variants only") {
  SynthSpec spec;
  spec.seed = 9;
  auto corpus = generate(spec, 20);
  auto cfg = fast_train(5, 17);
  auto sub = cfg;
  sub.negative_subtask_ratio = 1.0;

  TrainLog full7, sub7, sub7b;
  train_model(corpus.instances, corpus.schema, VariantConfig::from_case(7),
              tiny_encoder(), cfg, &full7);
  train_model(corpus.instances, corpus.schema, VariantConfig::from_case(7),
              tiny_encoder(), sub, &sub7);
  train_model(corpus.instances, corpus.schema, VariantConfig::from_case(7),
              tiny_encoder(), sub, &sub7b);
  CHECK(full7.epoch_losses != sub7.epoch_losses);
  CHECK(sub7.epoch_losses == sub7b.epoch_losses);  // deterministic

  // Role-typed variants have one subtask per instance, so the knob is a no-op.
  TrainLog full2, sub2;
  train_model(corpus.instances, corpus.schema, VariantConfig::from_case(2),
              tiny_encoder(), cfg, &full2);
  train_model(corpus.instances, corpus.schema, VariantConfig::from_case(2),
              tiny_encoder(), sub, &sub2);
  CHECK(full2.epoch_losses == sub2.epoch_losses);

  auto bad = cfg;
  bad.negative_subtask_ratio = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("gradient clipping bounds update size without breaking determinism") {
  SynthSpec spec;
  spec.seed = 6;
  auto corpus = generate(spec, 20);
  auto cfg = fast_train(6, 11);
  cfg.grad_clip = 0.5;
  TrainLog log1, log2;
  auto m1 = train_model(corpus.instances, corpus.schema, VariantConfig::from_case(4),
                        tiny_encoder(), cfg, &log1);
  auto m2 = train_model(corpus.instances, corpus.schema, VariantConfig::from_case(4),
                        tiny_encoder(), cfg, &log2);
  CHECK(log1.epoch_losses == log2.epoch_losses);
  CHECK(log1.epoch_losses.back() < log1.epoch_losses.front());
  // A tight clip must change the trajectory relative to unclipped training.
  auto unclipped = fast_train(6, 11);
  TrainLog log3;
  train_model(corpus.instances, corpus.schema, VariantConfig::from_case(4),
              tiny_encoder(), unclipped, &log3);
  CHECK(log1.epoch_losses != log3.epoch_losses);
}

TEST_CASE("training rejects an empty corpus and schema mismatches") {
  SynthSpec spec;
  auto corpus = generate(spec, 4);
  CHECK_THROWS_AS(train_model({}, corpus.schema, VariantConfig::from_case(1),
                              tiny_encoder(), fast_train(1, 0)),
                  std::invalid_argument);
  auto bad = corpus.instances;
  bad[0].gold.relations[0] = "NotInSchema";
  CHECK_THROWS_AS(train_model(bad, corpus.schema, VariantConfig::from_case(1),
                              tiny_encoder(), fast_train(1, 0)),
                  std::invalid_argument);
}

TEST_CASE("training is deterministic and the loss trends down") {
  SynthSpec spec;
  spec.seed = 2;
  auto corpus = generate(spec, 50);
  TrainLog log1, log2;
  auto m1 = train_model(corpus.instances, corpus.schema, VariantConfig::from_case(4),
                        tiny_encoder(), fast_train(8, 42), &log1);
  auto m2 = train_model(corpus.instances, corpus.schema, VariantConfig::from_case(4),
                        tiny_encoder(), fast_train(8, 42), &log2);
  REQUIRE(log1.epoch_losses.size() == 8);
  CHECK(log1.epoch_losses == log2.epoch_losses);  // bit-identical
  CHECK(log1.epoch_losses.back() < log1.epoch_losses.front());

  // Prediction parity and purity.
  for (int i = 0; i < 5; ++i) {
    const auto& inst = corpus.instances[static_cast<size_t>(i)];
    auto a = predict(m1, inst.passage, inst.condition);
    auto b = predict(m2, inst.passage, inst.condition);
    auto c = predict(m1, inst.passage, inst.condition);
    CHECK(normalized(a) == normalized(b));
    CHECK(normalized(a) == normalized(c));
  }
}

TEST_CASE("a single memorizable instance reaches training F1 = 1.0") {
  SynthSpec spec;
  spec.seed = 4;
  std::vector<RSEInstance> one{generate(spec, 1).instances[0]};
  auto schema = generate(spec, 1).schema;
  auto tc = fast_train(60, 7);
  tc.batch_size = 1;
  auto model = train_model(one, schema, VariantConfig::from_case(4), tiny_encoder(), tc);
  CHECK(corpus_strict_f1(model, one, Task::EventArgument) == doctest::Approx(1.0));
}

TEST_CASE("relationship priming at k=0 matches the unsplit per-relation encode") {
  SynthSpec spec;
  spec.seed = 6;
  auto corpus = generate(spec, 12);
  auto model = train_model(corpus.instances, corpus.schema, VariantConfig::from_case(6),
                           tiny_encoder(), fast_train(3, 1));
  REQUIRE(model.infer_split.k == 0);

  for (int i = 0; i < 4; ++i) {
    const auto& inst = corpus.instances[static_cast<size_t>(i)];
    auto split_pred = predict(model, inst.passage, inst.condition);

    // Manual unsplit route: one fully-primed pass per relation.
    RelationalStructure manual;
    for (const auto& rel : model.schema.relation_labels) {
      PrimedInput in = build_input(inst.passage, inst.condition, model.schema, rel);
      Tape<float> tape;
      int reps = encode_on_tape(tape, model.stack, model.vocab, in, nullptr, Mode::Infer);
      int em = head_on_tape(tape, model.head, reps, model.enc_cfg, Mode::Infer);
      auto [tags, score] = viterbi<float>(tape.val(em), model.transitions.value,
                                          model.mask);
      TagSequence seq{tags, TagScheme::Binary, model.tagset};
      auto part = decode_tags(seq, rel);
      for (int s = 0; s < part.size(); ++s) {
        manual.spans.push_back(part.spans[s]);
        manual.relations.push_back(part.relations[s]);
      }
    }
    CHECK(normalized(split_pred) == normalized(manual));
  }
}

TEST_CASE("split k sweep preserves output shape and purity") {
  SynthSpec spec;
  spec.seed = 8;
  auto corpus = generate(spec, 10);
  auto tc = fast_train(3, 2);
  tc.stochastic_split = true;
  auto model = train_model(corpus.instances, corpus.schema, VariantConfig::from_case(6),
                           tiny_encoder(), tc);
  const auto& inst = corpus.instances[0];
  for (int k = 0; k <= model.enc_cfg.layers; ++k) {
    model.infer_split.k = k;
    auto a = predict(model, inst.passage, inst.condition);
    auto b = predict(model, inst.passage, inst.condition);
    CHECK(normalized(a) == normalized(b));
  }
}

TEST_CASE("checkpoint roundtrip preserves weights, config and predictions") {
  SynthSpec spec;
  spec.seed = 10;
  auto corpus = generate(spec, 10);
  auto model = train_model(corpus.instances, corpus.schema, VariantConfig::from_case(8),
                           tiny_encoder(), fast_train(3, 3));
  model.infer_split.k = 1;

  const std::string path = "ckpt_test.bin";
  save_checkpoint(model, path);
  TagPrimeModel back = load_checkpoint(path);

  CHECK(back.variant.table_case() == 8);
  CHECK(back.schema_hash == model.schema_hash);
  CHECK(back.infer_split.k == 1);
  CHECK(back.tagset == model.tagset);

  auto pa = model.parameters();
  auto pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK((pa[i]->value - pb[i]->value).cwiseAbs().maxCoeff() == 0.0f);
  }
  for (int i = 0; i < 4; ++i) {
    const auto& inst = corpus.instances[static_cast<size_t>(i)];
    CHECK(normalized(predict(model, inst.passage, inst.condition)) ==
          normalized(predict(back, inst.passage, inst.condition)));
  }
  std::remove(path.c_str());
  std::remove((path + ".vocab").c_str());
}

TEST_CASE("checkpoint loader rejects garbage") {
  const std::string path = "ckpt_garbage.bin";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("definitely not a checkpoint", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint("no_such_file.bin"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("condition detector finds condition spans, sorted by start") {
  SynthSpec spec;
  spec.seed = 12;
  spec.distractor_rate = 0.0;
  auto corpus = generate(spec, 40);
  auto tc = fast_train(120, 5);
  auto detector = train_condition_detector(corpus.instances, corpus.schema,
                                           tiny_encoder(), tc);
  int correct = 0;
  for (const auto& inst : corpus.instances) {
    auto conds = predict_conditions(detector, inst.passage);
    for (size_t i = 1; i < conds.size(); ++i) {
      CHECK(conds[i - 1].span.start <= conds[i].span.start);
    }
    for (const auto& c : conds) {
      if (c == inst.condition) correct += 1;
    }
  }
  // The condition token is a deterministic surface cue; a trained detector
  // should recover most of them.
  CHECK(correct >= 30);
}

TEST_CASE("overlapping gold spans surface as training warnings, not errors") {
  SynthSpec spec;
  auto corpus = generate(spec, 3);
  auto& inst = corpus.instances[0];
  Span base = inst.gold.spans.empty() ? Span{1, 2} : inst.gold.spans[0];
  if (inst.gold.spans.empty()) {
    inst.gold.spans.push_back(base);
    inst.gold.relations.push_back(corpus.schema.relation_labels[0]);
  }
  inst.gold.spans.push_back(base);
  inst.gold.relations.push_back(corpus.schema.relation_labels[1]);

  TrainLog log;
  auto model = train_model(corpus.instances, corpus.schema, VariantConfig::from_case(3),
                           tiny_encoder(), fast_train(1, 0), &log);
  CHECK_FALSE(log.warnings.empty());
  CHECK(log.warnings.front().find("dropped overlap") != std::string::npos);

  // The same overlap is representable in decomposed (Binary) mode: the two
  // relations live in different subtasks, so no warning fires.
  TrainLog log6;
  train_model(corpus.instances, corpus.schema, VariantConfig::from_case(6),
              tiny_encoder(), fast_train(1, 0), &log6);
  CHECK(log6.warnings.empty());
}

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tagprime/adapters.hpp"
#include "tagprime/bio.hpp"
#include "tagprime/crf.hpp"
#include "tagprime/net.hpp"
#include "tagprime/priming.hpp"
#include "tagprime/subword.hpp"
#include "tagprime/types.hpp"

namespace tagprime {

// One row of the ablation grid. The admissible combinations:
//   case 1: ----    case 2: F---    case 3: -P--    case 4: FP--
//   case 5: F-f-    case 6: -P-p    case 7: FP-p    case 8: FPfp
// (F/P = condition feature/priming, f/p = relation feature/priming.)
struct VariantConfig {
  bool cond_feature = false;
  bool cond_priming = false;
  bool rel_feature = false;
  bool rel_priming = false;
  bool decompose_by_relation = false;

  static VariantConfig from_case(int case_id);
  int table_case() const;  // 1..8, throws for inadmissible combinations
  void validate() const { (void)table_case(); }
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 6;
  double head_lr = 1e-3;
  double head_decay = 1e-3;
  double encoder_lr = 1e-5;
  double encoder_decay = 1e-5;
  int warmup_epochs = 5;
  // Global L2 gradient-norm clip applied per batch; 0 disables clipping.
  double grad_clip = 0.0;
  // P(zero the conditional feature vectors for a training example). Keeps
  // variants with both features and priming from relying on features alone.
  double feature_dropout = 0.0;
  // Decomposed variants only: negatives kept per positive subtask each
  // epoch (0 = keep all). Subsampling rebalances the otherwise mostly-empty
  // binary subtasks and shortens epochs.
  double negative_subtask_ratio = 0.0;
  uint64_t seed = 0;
  // Sample a uniform split point per example while training a
  // relationship-priming variant, so one checkpoint serves every k at
  // inference time.
  bool stochastic_split = false;

  void validate() const;
};

struct TagPrimeModel {
  RelationSchema schema;
  uint64_t schema_hash = 0;
  VariantConfig variant;
  EncoderConfig enc_cfg;
  bool conditions_are_spans = true;
  bool crf_constrained = true;

  SubwordVocab vocab;
  EncoderStack<float> stack;
  TagHead<float> head;
  Tensor<float> transitions;
  CrfMask mask;
  TagScheme scheme = TagScheme::RoleTyped;
  std::vector<std::string> tagset;

  // Split point used by predict() for relationship-priming variants.
  SplitConfig infer_split{0};

  std::vector<Tensor<float>*> parameters();
  int head_input_dim() const;
  int num_tags() const { return static_cast<int>(tagset.size()); }
};

struct TrainLog {
  std::vector<double> epoch_losses;
  std::vector<std::string> warnings;  // e.g. dropped gold overlaps
};

// Builds vocab, tagset and parameters, then optimizes with decoupled
// weight decay under a warmup-then-linear-decay schedule. Deterministic
// for a fixed seed. Throws on an empty corpus or schema mismatch.
TagPrimeModel train_model(const std::vector<RSEInstance>& corpus,
                          const RelationSchema& schema, const VariantConfig& variant,
                          const EncoderConfig& enc_cfg, const TrainConfig& train_cfg,
                          TrainLog* log = nullptr);

struct PredictDebug {
  std::vector<std::pair<std::string, TagSequence>> subtask_tags;  // (relation, tags)
};

// Condition-priming variants: one RoleTyped pass. Decomposed variants:
// one Binary pass per relation label (via the split encoder when
// infer_split.k > 0), predictions unioned with no conflict filtering.
RelationalStructure predict(TagPrimeModel& model, const Passage& passage,
                            const Condition& condition, PredictDebug* debug = nullptr);

// Plain RoleTyped tagger over condition spans, for pipeline evaluation.
TagPrimeModel train_condition_detector(const std::vector<RSEInstance>& corpus,
                                       const RelationSchema& schema,
                                       const EncoderConfig& enc_cfg,
                                       const TrainConfig& train_cfg,
                                       TrainLog* log = nullptr);

std::vector<Condition> predict_conditions(TagPrimeModel& detector, const Passage& passage);

// Strict-F1 convenience: predict over a corpus with gold conditions.
double corpus_strict_f1(TagPrimeModel& model, const std::vector<RSEInstance>& corpus,
                        Task task);

}  // namespace tagprime

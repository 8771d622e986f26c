// tagprime command-line tool: generate | train | eval | predict | ablate | bench
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tagprime/checkpoint.hpp"
#include "tagprime/jsonio.hpp"
#include "tagprime/metrics.hpp"
#include "tagprime/model.hpp"
#include "tagprime/synth.hpp"

using nlohmann::json;
using namespace tagprime;

namespace {

// Exit codes: 0 success, 1 internal error, 2 user/config error.
struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot read file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw UserError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// One JSON line appended per run; manifests are append-only.
void append_manifest(const std::string& path, json manifest) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw UserError("cannot open manifest for append: " + path);
  out << manifest.dump() << "\n";
}

// Bad paths and malformed inputs are user errors (exit 2), not internal ones.
std::vector<RSEInstance> load_corpus(const std::string& path, const RelationSchema& s) {
  try {
    return read_corpus_file(path, s);
  } catch (const std::exception& e) {
    throw UserError(e.what());
  }
}

RelationSchema load_schema(const std::string& path) {
  try {
    return read_schema_file(path);
  } catch (const std::exception& e) {
    throw UserError(e.what());
  }
}

TagPrimeModel load_ckpt(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const std::exception& e) {
    throw UserError(e.what());
  }
}

void require_keys(const json& j, const std::set<std::string>& known,
                  const std::string& what) {
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw UserError("unknown " + what + " key: " + key);
  }
}

struct TrainSpec {
  std::string task = "event_argument";
  std::string corpus, schema, checkpoint_out;
  std::string eval_corpus;  // optional dev metrics for the manifest
  int case_id = 8;
  EncoderConfig enc;
  TrainConfig train;
  bool crf_constrained = true;
};

TrainSpec parse_train_config(const json& j) {
  require_keys(j, {"config_version", "task", "corpus", "schema", "checkpoint_out",
                   "eval_corpus", "case", "epochs", "batch_size", "head_lr",
                   "head_decay", "encoder_lr", "encoder_decay", "warmup_epochs",
                   "grad_clip", "feature_dropout", "negative_subtask_ratio",
                   "seed", "stochastic_split",
                   "model_dim", "layers", "heads",
                   "feedforward_dim", "dropout", "max_len", "feature_dim",
                   "head_hidden", "tied_split_branch", "crf_constrained"},
               "train config");
  if (j.value("config_version", 1) != 1) throw UserError("unsupported config_version");
  TrainSpec s;
  s.task = j.value("task", s.task);
  s.corpus = j.value("corpus", "");
  s.schema = j.value("schema", "");
  s.checkpoint_out = j.value("checkpoint_out", "");
  s.eval_corpus = j.value("eval_corpus", "");
  s.case_id = j.value("case", s.case_id);
  if (s.corpus.empty() || s.schema.empty() || s.checkpoint_out.empty()) {
    throw UserError("train config requires corpus, schema and checkpoint_out");
  }
  s.train.epochs = j.value("epochs", s.train.epochs);
  s.train.batch_size = j.value("batch_size", s.train.batch_size);
  s.train.head_lr = j.value("head_lr", s.train.head_lr);
  s.train.head_decay = j.value("head_decay", s.train.head_decay);
  s.train.encoder_lr = j.value("encoder_lr", s.train.encoder_lr);
  s.train.encoder_decay = j.value("encoder_decay", s.train.encoder_decay);
  s.train.warmup_epochs = j.value("warmup_epochs", s.train.warmup_epochs);
  s.train.grad_clip = j.value("grad_clip", s.train.grad_clip);
  s.train.feature_dropout = j.value("feature_dropout", s.train.feature_dropout);
  s.train.negative_subtask_ratio =
      j.value("negative_subtask_ratio", s.train.negative_subtask_ratio);
  s.train.seed = j.value("seed", s.train.seed);
  s.train.stochastic_split = j.value("stochastic_split", s.train.stochastic_split);
  s.enc.model_dim = j.value("model_dim", s.enc.model_dim);
  s.enc.layers = j.value("layers", s.enc.layers);
  s.enc.heads = j.value("heads", s.enc.heads);
  s.enc.feedforward_dim = j.value("feedforward_dim", s.enc.feedforward_dim);
  s.enc.dropout = j.value("dropout", s.enc.dropout);
  s.enc.max_len = j.value("max_len", s.enc.max_len);
  s.enc.feature_dim = j.value("feature_dim", s.enc.feature_dim);
  s.enc.head_hidden = j.value("head_hidden", s.enc.head_hidden);
  s.enc.tied_split_branch = j.value("tied_split_branch", s.enc.tied_split_branch);
  s.crf_constrained = j.value("crf_constrained", s.crf_constrained);
  return s;
}

json metrics_json(TagPrimeModel& model, const std::vector<RSEInstance>& corpus,
                  Task task) {
  std::vector<Prediction> preds;
  for (const auto& inst : corpus) {
    Prediction p;
    p.id = inst.passage.id;
    p.condition = inst.condition;
    p.structure = predict(model, inst.passage, inst.condition);
    preds.push_back(std::move(p));
  }
  return score(corpus, preds, task).to_json();
}

int cmd_generate(const std::string& spec_path, int count, const std::string& out_path,
                 const std::string& schema_out, const std::string& manifest_path) {
  SynthSpec spec;
  json spec_json = synth_spec_to_json(spec);
  if (!spec_path.empty()) {
    spec_json = read_json_file(spec_path);
    spec = synth_spec_from_json(spec_json);
  }
  if (count < 1) throw UserError("--count must be positive");
  double t0 = now_seconds();
  SynthCorpus corpus = generate(spec, count);
  write_corpus_file(out_path, corpus.instances);
  write_schema_file(schema_out, corpus.schema);
  append_manifest(manifest_path, {{"command", "generate"},
                                  {"config", spec_json},
                                  {"seed", spec.seed},
                                  {"count", count},
                                  {"schema_hash", corpus.schema.hash()},
                                  {"corpus", out_path},
                                  {"schema", schema_out},
                                  {"wall_seconds", now_seconds() - t0}});
  std::cout << "wrote " << count << " instances to " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& manifest_path) {
  json cfg = read_json_file(config_path);
  TrainSpec s = parse_train_config(cfg);
  Task task = task_from_string(s.task);
  RelationSchema schema = load_schema(s.schema);
  std::vector<RSEInstance> corpus = load_corpus(s.corpus, schema);

  double t0 = now_seconds();
  TrainLog log;
  VariantConfig variant = VariantConfig::from_case(s.case_id);
  TagPrimeModel model;
  try {
    model = train_model(corpus, schema, variant, s.enc, s.train, &log);
  } catch (const std::invalid_argument& e) {
    throw UserError(e.what());
  }
  model.crf_constrained = s.crf_constrained;
  save_checkpoint(model, s.checkpoint_out);

  json manifest{{"command", "train"},
                {"config", cfg},
                {"seed", s.train.seed},
                {"schema_hash", model.schema_hash},
                {"checkpoint", s.checkpoint_out},
                {"final_loss", log.epoch_losses.empty() ? 0.0 : log.epoch_losses.back()},
                {"warnings", log.warnings},
                {"wall_seconds", now_seconds() - t0}};
  if (!s.eval_corpus.empty()) {
    auto dev = load_corpus(s.eval_corpus, schema);
    manifest["metrics"] = metrics_json(model, dev, task);
  }
  append_manifest(manifest_path, manifest);
  std::cout << "checkpoint written to " << s.checkpoint_out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& corpus_path,
             const std::string& task_name, const std::string& report_out,
             const std::string& manifest_path) {
  TagPrimeModel model = load_ckpt(ckpt_path);
  Task task = task_from_string(task_name);
  std::vector<RSEInstance> corpus = load_corpus(corpus_path, model.schema);
  double t0 = now_seconds();

  std::vector<Prediction> preds;
  for (const auto& inst : corpus) {
    Prediction p;
    p.id = inst.passage.id;
    p.condition = inst.condition;
    p.structure = predict(model, inst.passage, inst.condition);
    preds.push_back(std::move(p));
  }
  EvalReport report = score(corpus, preds, task);
  std::cout << report.to_table();
  if (!report_out.empty()) {
    std::ofstream out(report_out);
    if (!out) throw UserError("cannot write report: " + report_out);
    out << report.to_json().dump(2) << "\n";
  }
  append_manifest(manifest_path, {{"command", "eval"},
                                  {"checkpoint", ckpt_path},
                                  {"corpus", corpus_path},
                                  {"task", task_name},
                                  {"schema_hash", model.schema_hash},
                                  {"metrics", report.to_json()},
                                  {"wall_seconds", now_seconds() - t0}});
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& corpus_path,
                const std::string& out_path, const std::string& manifest_path) {
  TagPrimeModel model = load_ckpt(ckpt_path);
  std::vector<RSEInstance> corpus = load_corpus(corpus_path, model.schema);
  std::ofstream out(out_path);
  if (!out) throw UserError("cannot write predictions: " + out_path);
  double t0 = now_seconds();

  for (const auto& inst : corpus) {
    PredictDebug debug;
    RelationalStructure s = predict(model, inst.passage, inst.condition, &debug);
    json rec{{"id", inst.passage.id}};
    json spans = json::array();
    RelationalStructure norm = normalized(s);
    for (int i = 0; i < norm.size(); ++i) {
      spans.push_back({{"start", norm.spans[i].start},
                       {"end", norm.spans[i].end},
                       {"relation", norm.relations[i]}});
    }
    rec["spans"] = spans;
    json tags = json::object();
    for (const auto& [rel, seq] : debug.subtask_tags) {
      json names = json::array();
      for (int t : seq.tags) names.push_back(seq.tagset[t]);
      tags[rel.empty() ? "all" : rel] = names;
    }
    rec["tags"] = tags;
    out << rec.dump() << "\n";
  }
  append_manifest(manifest_path, {{"command", "predict"},
                                  {"checkpoint", ckpt_path},
                                  {"corpus", corpus_path},
                                  {"schema_hash", model.schema_hash},
                                  {"out", out_path},
                                  {"wall_seconds", now_seconds() - t0}});
  std::cout << "predictions written to " << out_path << "\n";
  return 0;
}

int cmd_ablate(const std::string& train_path, const std::string& test_path,
               const std::string& schema_path, const std::string& task_name,
               std::vector<int> cases, int seeds, const std::string& config_path,
               bool expect_ordering, const std::string& manifest_path) {
  if (cases.size() < 2) throw UserError("ablate requires at least 2 cases");
  if (seeds < 3) {
    throw UserError("ablate requires at least 3 seeds for a stable mean/std");
  }
  for (int c : cases) {
    if (c < 1 || c > 8) throw UserError("invalid ablation case: " + std::to_string(c));
  }
  Task task = task_from_string(task_name);
  RelationSchema schema = load_schema(schema_path);
  auto train_set = load_corpus(train_path, schema);
  auto test_set = load_corpus(test_path, schema);

  TrainSpec base;
  json cfg = json::object();
  if (!config_path.empty()) {
    cfg = read_json_file(config_path);
    base = parse_train_config(cfg);
  }
  double t0 = now_seconds();

  std::map<int, std::pair<double, double>> stats;  // case -> (mean, std)
  json per_case = json::object();
  for (int c : cases) {
    std::vector<double> f1s;
    for (int s = 0; s < seeds; ++s) {
      TrainConfig tc = base.train;
      tc.seed = base.train.seed + static_cast<uint64_t>(s);
      TagPrimeModel model = train_model(train_set, schema, VariantConfig::from_case(c),
                                        base.enc, tc);
      f1s.push_back(corpus_strict_f1(model, test_set, task));
    }
    double mean = 0;
    for (double f : f1s) mean += f;
    mean /= static_cast<double>(f1s.size());
    double var = 0;
    for (double f : f1s) var += (f - mean) * (f - mean);
    double sd = std::sqrt(var / static_cast<double>(f1s.size()));
    stats[c] = {mean, sd};
    per_case[std::to_string(c)] = {{"mean", mean}, {"std", sd}, {"runs", f1s}};
    std::printf("case %d: strict F1 %.4f +/- %.4f over %d seeds\n", c, mean, sd, seeds);
  }

  bool ordering_ok = true;
  std::vector<int> chain{7, 4, 2, 1};
  std::vector<int> present;
  for (int c : chain) {
    if (stats.count(c)) present.push_back(c);
  }
  if (present.size() >= 2) {
    std::string line = "ordering";
    for (size_t i = 0; i + 1 < present.size(); ++i) {
      bool ok = stats[present[i]].first >= stats[present[i + 1]].first;
      ordering_ok = ordering_ok && ok;
      char buf[64];
      std::snprintf(buf, sizeof(buf), " case%d %s case%d", present[i],
                    ok ? ">=" : "<", present[i + 1]);
      line += buf;
    }
    std::cout << line << (ordering_ok ? "  [satisfied]" : "  [violated]") << "\n";
  }

  append_manifest(manifest_path, {{"command", "ablate"},
                                  {"config", cfg},
                                  {"seed", base.train.seed},
                                  {"seeds", seeds},
                                  {"cases", cases},
                                  {"schema_hash", schema.hash()},
                                  {"metrics", per_case},
                                  {"ordering_ok", ordering_ok},
                                  {"wall_seconds", now_seconds() - t0}});
  if (expect_ordering && !ordering_ok) {
    std::cerr << "expected ordering violated\n";
    return 1;
  }
  return 0;
}

int cmd_bench(const std::string& ckpt_path, const std::string& corpus_path,
              const std::string& task_name, std::vector<int> ks, int repetitions,
              const std::string& manifest_path) {
  if (repetitions < 5) throw UserError("bench requires at least 5 repetitions");
  TagPrimeModel model = load_ckpt(ckpt_path);
  if (!model.variant.rel_priming) {
    throw UserError("bench requires a checkpoint trained with relationship priming");
  }
  const int L = model.enc_cfg.layers;
  for (int k : ks) {
    if (k < 0 || k > L) throw UserError("split k out of range: " + std::to_string(k));
  }
  Task task = task_from_string(task_name);
  std::vector<RSEInstance> corpus = load_corpus(corpus_path, model.schema);
  double t0 = now_seconds();

  json rows = json::array();
  std::printf("%4s %18s %10s\n", "k", "instances/sec", "strict F1");
  for (int k : ks) {
    model.infer_split.k = k;
    double f1 = corpus_strict_f1(model, corpus, task);
    double start = now_seconds();
    for (int r = 0; r < repetitions; ++r) {
      for (const auto& inst : corpus) predict(model, inst.passage, inst.condition);
    }
    double elapsed = now_seconds() - start;
    double throughput =
        static_cast<double>(repetitions) * static_cast<double>(corpus.size()) / elapsed;
    std::printf("%4d %18.2f %10.4f\n", k, throughput, f1);
    rows.push_back({{"k", k}, {"throughput", throughput}, {"strict_f1", f1}});
  }
  append_manifest(manifest_path, {{"command", "bench"},
                                  {"checkpoint", ckpt_path},
                                  {"corpus", corpus_path},
                                  {"repetitions", repetitions},
                                  {"schema_hash", model.schema_hash},
                                  {"workers", 1},
                                  {"metrics", rows},
                                  {"wall_seconds", now_seconds() - t0}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tagprime: conditional sequence tagging for relational structure extraction"};
  app.require_subcommand(1);

  std::string manifest_path = "runs.jsonl";
  app.add_option("--manifest", manifest_path, "append-only run manifest (JSON lines)");

  auto* gen = app.add_subcommand("generate", "generate a synthetic corpus + schema");
  std::string gen_spec, gen_out = "corpus.jsonl", gen_schema = "schema.json";
  int gen_count = 100;
  gen->add_option("--spec", gen_spec, "synthesis spec JSON (defaults when omitted)");
  gen->add_option("--count", gen_count, "number of instances");
  gen->add_option("--out", gen_out, "corpus output path (JSON lines)");
  gen->add_option("--schema-out", gen_schema, "schema output path");

  auto* train = app.add_subcommand("train", "train a model from a config file");
  std::string train_config;
  train->add_option("--config", train_config, "flat JSON training config")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  std::string eval_ckpt, eval_corpus, eval_task = "event_argument", eval_report;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--corpus", eval_corpus)->required();
  eval->add_option("--task", eval_task,
                   "event_argument | relation_extraction | semantic_parsing");
  eval->add_option("--report", eval_report, "also write the report as JSON");

  auto* pred = app.add_subcommand("predict", "dump predictions with BIO tag names");
  std::string pred_ckpt, pred_corpus, pred_out = "predictions.jsonl";
  pred->add_option("--checkpoint", pred_ckpt)->required();
  pred->add_option("--corpus", pred_corpus)->required();
  pred->add_option("--out", pred_out);

  auto* abl = app.add_subcommand("ablate", "compare variant cases over seeds");
  std::string abl_train, abl_test, abl_schema, abl_task = "event_argument", abl_config;
  std::vector<int> abl_cases;
  int abl_seeds = 5;
  bool abl_expect = false;
  abl->add_option("--train", abl_train)->required();
  abl->add_option("--test", abl_test)->required();
  abl->add_option("--schema", abl_schema)->required();
  abl->add_option("--task", abl_task);
  abl->add_option("--cases", abl_cases, "ablation case ids (>= 2)")->required();
  abl->add_option("--seeds", abl_seeds, "number of seeds (>= 3)");
  abl->add_option("--config", abl_config, "training config (case/corpus keys ignored)");
  abl->add_flag("--expect-ordering", abl_expect,
                "exit 1 unless case7 >= case4 >= case2 >= case1 holds");

  auto* bench = app.add_subcommand("bench", "split-encoder throughput sweep");
  std::string bench_ckpt, bench_corpus, bench_task = "event_argument";
  std::vector<int> bench_ks;
  int bench_reps = 50;
  bench->add_option("--checkpoint", bench_ckpt)->required();
  bench->add_option("--corpus", bench_corpus)->required();
  bench->add_option("--task", bench_task);
  bench->add_option("--k", bench_ks, "split points to sweep")->required();
  bench->add_option("--repetitions", bench_reps, "full passes over the corpus (>= 5)");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) {
      return cmd_generate(gen_spec, gen_count, gen_out, gen_schema, manifest_path);
    }
    if (train->parsed()) return cmd_train(train_config, manifest_path);
    if (eval->parsed()) {
      return cmd_eval(eval_ckpt, eval_corpus, eval_task, eval_report, manifest_path);
    }
    if (pred->parsed()) return cmd_predict(pred_ckpt, pred_corpus, pred_out, manifest_path);
    if (abl->parsed()) {
      return cmd_ablate(abl_train, abl_test, abl_schema, abl_task, abl_cases, abl_seeds,
                        abl_config, abl_expect, manifest_path);
    }
    if (bench->parsed()) {
      return cmd_bench(bench_ckpt, bench_corpus, bench_task, bench_ks, bench_reps,
                       manifest_path);
    }
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}

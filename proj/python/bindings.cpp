#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "tagprime/checkpoint.hpp"
#include "tagprime/jsonio.hpp"
#include "tagprime/metrics.hpp"
#include "tagprime/model.hpp"
#include "tagprime/synth.hpp"

namespace py = pybind11;
using namespace tagprime;

namespace {

Task task_from_name(const std::string& name) {
  if (name == "event_argument") return Task::EventArgument;
  if (name == "relation_extraction") return Task::RelationExtraction;
  if (name == "semantic_parsing") return Task::SemanticParsing;
  throw std::invalid_argument("unknown task: " + name);
}

py::dict report_to_dict(const EvalReport& report) {
  py::dict out;
  for (const auto& [id, m] : report.metrics) {
    py::dict row;
    row["precision"] = m.precision;
    row["recall"] = m.recall;
    row["f1"] = m.f1;
    row["tp"] = m.tp;
    row["fp"] = m.fp;
    row["fn"] = m.fn;
    out[py::str(id)] = row;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_tagprime, m) {
  m.doc() = "Conditional sequence tagging for relational structure extraction";

  py::class_<Span>(m, "Span")
      .def(py::init<>())
      .def(py::init([](int start, int end) { return Span{start, end}; }),
           py::arg("start"), py::arg("end"))
      .def_readwrite("start", &Span::start)
      .def_readwrite("end", &Span::end)
      .def("__eq__", [](const Span& a, const Span& b) { return a == b; })
      .def("__repr__", [](const Span& s) {
        return "Span(" + std::to_string(s.start) + ", " + std::to_string(s.end) + ")";
      });

  py::enum_<ConditionKind>(m, "ConditionKind")
      .value("SPAN", ConditionKind::Span)
      .value("CONCEPT", ConditionKind::Concept);

  py::class_<Condition>(m, "Condition")
      .def(py::init<>())
      .def_readwrite("kind", &Condition::kind)
      .def_readwrite("span", &Condition::span)
      .def_readwrite("type_label", &Condition::type_label);

  py::class_<Passage>(m, "Passage")
      .def(py::init<>())
      .def_readwrite("tokens", &Passage::tokens)
      .def_readwrite("id", &Passage::id);

  py::class_<RelationalStructure>(m, "RelationalStructure")
      .def(py::init<>())
      .def_readwrite("spans", &RelationalStructure::spans)
      .def_readwrite("relations", &RelationalStructure::relations)
      .def("__len__", &RelationalStructure::size);

  py::class_<RSEInstance>(m, "RSEInstance")
      .def(py::init<>())
      .def_readwrite("passage", &RSEInstance::passage)
      .def_readwrite("condition", &RSEInstance::condition)
      .def_readwrite("gold", &RSEInstance::gold);

  py::class_<RelationSchema>(m, "RelationSchema")
      .def(py::init<>())
      .def_readwrite("condition_types", &RelationSchema::condition_types)
      .def_readwrite("relation_labels", &RelationSchema::relation_labels)
      .def_readwrite("separator", &RelationSchema::separator)
      .def("verbalize_relation", &RelationSchema::verbalize_relation)
      .def("verbalize_condition_type", &RelationSchema::verbalize_condition_type);

  py::class_<SynthSpec>(m, "SynthSpec")
      .def(py::init<>())
      .def_readwrite("seed", &SynthSpec::seed)
      .def_readwrite("num_relations", &SynthSpec::num_relations)
      .def_readwrite("num_condition_types", &SynthSpec::num_condition_types)
      .def_readwrite("cue_strength", &SynthSpec::cue_strength)
      .def_readwrite("ambiguity_rate", &SynthSpec::ambiguity_rate)
      .def_readwrite("multi_relation_rate", &SynthSpec::multi_relation_rate)
      .def_readwrite("distractor_rate", &SynthSpec::distractor_rate)
      .def_readwrite("condition_pool", &SynthSpec::condition_pool);

  py::class_<SynthCorpus>(m, "SynthCorpus")
      .def_readonly("instances", &SynthCorpus::instances)
      .def_readonly("schema", &SynthCorpus::schema);

  py::class_<VariantConfig>(m, "VariantConfig")
      .def(py::init<>())
      .def_static("from_case", &VariantConfig::from_case)
      .def("table_case", &VariantConfig::table_case)
      .def_readwrite("cond_feature", &VariantConfig::cond_feature)
      .def_readwrite("cond_priming", &VariantConfig::cond_priming)
      .def_readwrite("rel_feature", &VariantConfig::rel_feature)
      .def_readwrite("rel_priming", &VariantConfig::rel_priming)
      .def_readwrite("decompose_by_relation", &VariantConfig::decompose_by_relation);

  py::class_<EncoderConfig>(m, "EncoderConfig")
      .def(py::init<>())
      .def_readwrite("model_dim", &EncoderConfig::model_dim)
      .def_readwrite("layers", &EncoderConfig::layers)
      .def_readwrite("heads", &EncoderConfig::heads)
      .def_readwrite("feedforward_dim", &EncoderConfig::feedforward_dim)
      .def_readwrite("dropout", &EncoderConfig::dropout)
      .def_readwrite("max_len", &EncoderConfig::max_len)
      .def_readwrite("feature_dim", &EncoderConfig::feature_dim)
      .def_readwrite("head_hidden", &EncoderConfig::head_hidden);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("head_lr", &TrainConfig::head_lr)
      .def_readwrite("head_decay", &TrainConfig::head_decay)
      .def_readwrite("encoder_lr", &TrainConfig::encoder_lr)
      .def_readwrite("encoder_decay", &TrainConfig::encoder_decay)
      .def_readwrite("warmup_epochs", &TrainConfig::warmup_epochs)
      .def_readwrite("grad_clip", &TrainConfig::grad_clip)
      .def_readwrite("feature_dropout", &TrainConfig::feature_dropout)
      .def_readwrite("negative_subtask_ratio", &TrainConfig::negative_subtask_ratio)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("stochastic_split", &TrainConfig::stochastic_split);

  py::class_<TagPrimeModel>(m, "Model")
      .def_property_readonly("case",
                             [](TagPrimeModel& m) { return m.variant.table_case(); })
      .def_property(
          "split_k", [](TagPrimeModel& m) { return m.infer_split.k; },
          [](TagPrimeModel& m, int k) { m.infer_split.k = k; })
      .def_readonly("tagset", &TagPrimeModel::tagset)
      .def_readonly("schema", &TagPrimeModel::schema);

  m.def("generate", &generate, py::arg("spec"), py::arg("count"),
        "Deterministic synthetic corpus + schema");

  m.def(
      "train",
      [](const std::vector<RSEInstance>& corpus, const RelationSchema& schema,
         int case_id, const EncoderConfig& enc, const TrainConfig& tc) {
        return train_model(corpus, schema, VariantConfig::from_case(case_id), enc, tc);
      },
      py::arg("corpus"), py::arg("schema"), py::arg("case_id"),
      py::arg("encoder") = EncoderConfig{}, py::arg("train") = TrainConfig{});

  m.def(
      "predict",
      [](TagPrimeModel& model, const Passage& passage, const Condition& condition) {
        return normalized(predict(model, passage, condition));
      },
      py::arg("model"), py::arg("passage"), py::arg("condition"));

  m.def(
      "score",
      [](const std::vector<RSEInstance>& gold, TagPrimeModel& model,
         const std::string& task) {
        std::vector<Prediction> preds;
        for (const auto& inst : gold) {
          Prediction p;
          p.id = inst.passage.id;
          p.condition = inst.condition;
          p.structure = predict(model, inst.passage, inst.condition);
          preds.push_back(std::move(p));
        }
        return report_to_dict(score(gold, preds, task_from_name(task)));
      },
      py::arg("gold"), py::arg("model"), py::arg("task") = "event_argument",
      "Predict over a corpus with gold conditions and micro-average P/R/F1");

  m.def("strict_metric",
        [](const std::string& task) { return strict_metric(task_from_name(task)); });

  m.def("save_checkpoint", &save_checkpoint, py::arg("model"), py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def("read_corpus_file", &read_corpus_file, py::arg("path"), py::arg("schema"));
  m.def("write_corpus_file", &write_corpus_file, py::arg("path"), py::arg("corpus"));
  m.def("read_schema_file", &read_schema_file, py::arg("path"));
  m.def("write_schema_file", &write_schema_file, py::arg("path"), py::arg("schema"));
}

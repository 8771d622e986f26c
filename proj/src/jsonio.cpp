#include "tagprime/jsonio.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tagprime {

using nlohmann::json;

json instance_to_json(const RSEInstance& inst) {
  json j;
  j["id"] = inst.passage.id;
  j["tokens"] = inst.passage.tokens;
  json c;
  c["kind"] = inst.condition.kind == ConditionKind::Span ? "span" : "concept";
  if (inst.condition.kind == ConditionKind::Span) {
    c["start"] = inst.condition.span.start;
    c["end"] = inst.condition.span.end;
  }
  c["type"] = inst.condition.type_label;
  j["condition"] = c;
  json spans = json::array();
  for (int i = 0; i < inst.gold.size(); ++i) {
    spans.push_back({{"start", inst.gold.spans[i].start},
                     {"end", inst.gold.spans[i].end},
                     {"relation", inst.gold.relations[i]}});
  }
  j["spans"] = spans;
  return j;
}

RSEInstance instance_from_json(const json& j) {
  RSEInstance inst;
  inst.passage.id = j.at("id").get<std::string>();
  for (const auto& t : j.at("tokens")) inst.passage.tokens.push_back(t.get<std::string>());
  const json& c = j.at("condition");
  std::string kind = c.at("kind").get<std::string>();
  if (kind == "span") {
    inst.condition.kind = ConditionKind::Span;
    inst.condition.span = {c.at("start").get<int>(), c.at("end").get<int>()};
  } else if (kind == "concept") {
    inst.condition.kind = ConditionKind::Concept;
  } else {
    throw std::invalid_argument("unknown condition kind: " + kind);
  }
  inst.condition.type_label = c.at("type").get<std::string>();
  for (const auto& s : j.at("spans")) {
    inst.gold.spans.push_back({s.at("start").get<int>(), s.at("end").get<int>()});
    inst.gold.relations.push_back(s.at("relation").get<std::string>());
  }
  return inst;
}

std::vector<RSEInstance> read_corpus(std::istream& in, const RelationSchema& schema) {
  std::vector<RSEInstance> corpus;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    RSEInstance inst;
    try {
      inst = instance_from_json(json::parse(line));
    } catch (const std::exception& e) {
      throw std::runtime_error("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    auto violations = validate_instance(inst, schema);
    if (!violations.empty()) {
      throw std::runtime_error("corpus line " + std::to_string(lineno) + ": " +
                               violations.front());
    }
    corpus.push_back(std::move(inst));
  }
  return corpus;
}

std::vector<RSEInstance> read_corpus_file(const std::string& path,
                                          const RelationSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return read_corpus(in, schema);
}

void write_corpus(std::ostream& out, const std::vector<RSEInstance>& corpus) {
  for (const auto& inst : corpus) out << instance_to_json(inst).dump() << "\n";
}

void write_corpus_file(const std::string& path, const std::vector<RSEInstance>& corpus) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_corpus(out, corpus);
}

json schema_to_json(const RelationSchema& schema) {
  json j;
  j["condition_types"] = schema.condition_types;
  j["relation_labels"] = schema.relation_labels;
  j["verbalizer"] = schema.verbalizer;
  j["condition_verbalizer"] = schema.condition_verbalizer;
  j["separator"] = schema.separator;
  return j;
}

RelationSchema schema_from_json(const json& j) {
  RelationSchema s;
  for (const auto& t : j.at("condition_types")) s.condition_types.push_back(t.get<std::string>());
  for (const auto& r : j.at("relation_labels")) s.relation_labels.push_back(r.get<std::string>());
  if (j.contains("verbalizer")) {
    s.verbalizer = j.at("verbalizer").get<std::map<std::string, std::vector<std::string>>>();
  }
  if (j.contains("condition_verbalizer")) {
    s.condition_verbalizer =
        j.at("condition_verbalizer").get<std::map<std::string, std::vector<std::string>>>();
  }
  if (j.contains("separator")) s.separator = j.at("separator").get<std::string>();
  if (s.relation_labels.empty()) throw std::invalid_argument("schema has no relation labels");
  for (const auto& [k, words] : s.verbalizer) {
    for (const auto& w : words) {
      if (w.find(s.separator) != std::string::npos) {
        throw std::invalid_argument("verbalization for " + k + " contains the separator");
      }
    }
  }
  return s;
}

RelationSchema read_schema_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open schema file: " + path);
  json j;
  in >> j;
  return schema_from_json(j);
}

void write_schema_file(const std::string& path, const RelationSchema& schema) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << schema_to_json(schema).dump(2) << "\n";
}

}  // namespace tagprime

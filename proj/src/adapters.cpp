#include "tagprime/adapters.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tagprime {

using nlohmann::json;

Task task_from_string(const std::string& s) {
  if (s == "event_argument") return Task::EventArgument;
  if (s == "relation_extraction") return Task::RelationExtraction;
  if (s == "semantic_parsing") return Task::SemanticParsing;
  throw std::invalid_argument("unknown task: " + s);
}

std::string task_to_string(Task t) {
  switch (t) {
    case Task::EventArgument: return "event_argument";
    case Task::RelationExtraction: return "relation_extraction";
    case Task::SemanticParsing: return "semantic_parsing";
  }
  return "?";
}

namespace {

const json& need(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) {
    throw std::invalid_argument(std::string("missing field: ") + field);
  }
  return *it;
}

std::vector<std::string> read_tokens(const json& j) {
  std::vector<std::string> toks;
  for (const auto& t : need(j, "tokens")) toks.push_back(t.get<std::string>());
  return toks;
}

Span read_span(const json& j) {
  return {need(j, "start").get<int>(), need(j, "end").get<int>()};
}

}  // namespace

RSEInstance adapt_task(Task task, const json& raw) {
  RSEInstance inst;
  inst.passage.id = need(raw, "id").get<std::string>();
  inst.passage.tokens = read_tokens(raw);

  switch (task) {
    case Task::EventArgument: {
      const json& trig = need(raw, "trigger");
      inst.condition = {ConditionKind::Span, read_span(trig),
                        need(trig, "type").get<std::string>()};
      for (const auto& a : need(raw, "arguments")) {
        inst.gold.spans.push_back(read_span(a));
        inst.gold.relations.push_back(need(a, "role").get<std::string>());
      }
      break;
    }
    case Task::RelationExtraction: {
      const json& head = need(raw, "head");
      inst.condition = {ConditionKind::Span, read_span(head),
                        need(head, "type").get<std::string>()};
      for (const auto& t : need(raw, "tails")) {
        inst.gold.spans.push_back(read_span(t));
        inst.gold.relations.push_back(need(t, "relation").get<std::string>());
      }
      break;
    }
    case Task::SemanticParsing: {
      inst.condition = {ConditionKind::Concept, {}, need(raw, "intent").get<std::string>()};
      for (const auto& s : need(raw, "slots")) {
        inst.gold.spans.push_back(read_span(s));
        inst.gold.relations.push_back(need(s, "role").get<std::string>());
      }
      break;
    }
  }
  return inst;
}

}  // namespace tagprime

#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tagprime/adapters.hpp"
#include "tagprime/types.hpp"

namespace tagprime {

struct MetricScore {
  double precision = 0, recall = 0, f1 = 0;
  long tp = 0, fp = 0, fn = 0;
};

struct EvalReport {
  std::map<std::string, MetricScore> metrics;
  std::string header;  // documents the matching conventions used

  const MetricScore& at(const std::string& id) const { return metrics.at(id); }
  nlohmann::json to_json() const;
  std::string to_table() const;
};

struct Prediction {
  std::string id;
  Condition condition;  // the condition the structure was predicted under
  bool condition_is_predicted = false;
  RelationalStructure structure;
};

// Micro-averaged P/R/F1 over the corpus, aligned by instance id.
// EventArgument -> TriC, ArgI, ArgC; RelationExtraction -> Ent, Rel,
// RelPlus; SemanticParsing -> Intent (accuracy), SlotI, SlotC.
// Throws std::invalid_argument when the id sets differ.
EvalReport score(const std::vector<RSEInstance>& gold,
                 const std::vector<Prediction>& pred, Task task);

// The classification metric used as "strict F1" for each task.
std::string strict_metric(Task task);

MetricScore from_counts(long tp, long fp, long fn);

}  // namespace tagprime

#include "tagprime/metrics.hpp"

#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tagprime {

using nlohmann::json;

MetricScore from_counts(long tp, long fp, long fn) {
  MetricScore m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0
             ? 2 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

std::string strict_metric(Task task) {
  switch (task) {
    case Task::EventArgument: return "ArgC";
    case Task::RelationExtraction: return "RelPlus";
    case Task::SemanticParsing: return "SlotC";
  }
  return "?";
}

namespace {

struct Counts {
  long tp = 0, fp = 0, fn = 0;
  void add_sets(long ntp, long npred, long ngold) {
    tp += ntp;
    fp += npred - ntp;
    fn += ngold - ntp;
  }
};

using PairSet = std::set<std::pair<Span, std::string>>;
using SpanSet = std::set<Span>;

long intersect_size(const SpanSet& a, const SpanSet& b) {
  long n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

long intersect_size(const PairSet& a, const PairSet& b) {
  long n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

}  // namespace

EvalReport score(const std::vector<RSEInstance>& gold,
                 const std::vector<Prediction>& pred, Task task) {
  std::map<std::string, const RSEInstance*> gold_by_id;
  for (const auto& g : gold) {
    if (!gold_by_id.emplace(g.passage.id, &g).second) {
      throw std::invalid_argument("duplicate gold instance id: " + g.passage.id);
    }
  }
  std::map<std::string, const Prediction*> pred_by_id;
  for (const auto& p : pred) {
    if (!pred_by_id.emplace(p.id, &p).second) {
      throw std::invalid_argument("duplicate prediction id: " + p.id);
    }
  }
  if (gold_by_id.size() != pred_by_id.size()) {
    throw std::invalid_argument("gold/prediction id sets differ in size");
  }
  for (const auto& [id, _] : gold_by_id) {
    if (!pred_by_id.count(id)) {
      throw std::invalid_argument("no prediction for instance id: " + id);
    }
  }

  Counts ident, classif, cond_counts;
  long intent_correct = 0, intent_total = 0;

  for (const auto& [id, g] : gold_by_id) {
    const Prediction& p = *pred_by_id.at(id);

    SpanSet gold_spans(g->gold.spans.begin(), g->gold.spans.end());
    SpanSet pred_spans(p.structure.spans.begin(), p.structure.spans.end());
    PairSet gold_pairs, pred_pairs;  // set semantics: duplicates collapse
    for (int i = 0; i < g->gold.size(); ++i) {
      gold_pairs.insert({g->gold.spans[i], g->gold.relations[i]});
    }
    for (int i = 0; i < p.structure.size(); ++i) {
      pred_pairs.insert({p.structure.spans[i], p.structure.relations[i]});
    }

    ident.add_sets(intersect_size(pred_spans, gold_spans),
                   static_cast<long>(pred_spans.size()),
                   static_cast<long>(gold_spans.size()));

    bool cond_span_ok = g->condition.kind == ConditionKind::Concept ||
                        p.condition.span == g->condition.span;
    bool cond_type_ok = p.condition.type_label == g->condition.type_label;
    bool cond_ok;
    switch (task) {
      case Task::EventArgument:
      case Task::RelationExtraction:
        // Rel requires only the head span; Rel+ / Arg-C also the type.
        cond_ok = cond_span_ok && (task == Task::RelationExtraction || cond_type_ok);
        break;
      case Task::SemanticParsing:
        cond_ok = true;  // Slot-C scores slots independently of the intent
        break;
    }
    if (task == Task::RelationExtraction) {
      // Rel: head span correct. RelPlus handled below via cond_type_ok.
      cond_ok = cond_span_ok;
    }

    long cls_tp = cond_ok ? intersect_size(pred_pairs, gold_pairs) : 0;
    classif.add_sets(cls_tp, static_cast<long>(pred_pairs.size()),
                     static_cast<long>(gold_pairs.size()));

    // Condition-level metric (TriC / Ent / Intent).
    if (g->condition.kind == ConditionKind::Concept) {
      intent_total += 1;
      if (cond_type_ok) intent_correct += 1;
    } else {
      cond_counts.add_sets(cond_span_ok && cond_type_ok ? 1 : 0, 1, 1);
    }
    (void)intent_total;
  }

  EvalReport report;
  report.header =
      "matching: identification = span offsets only; classification = "
      "span + relation, gated on a correct condition span (and type for "
      "ArgC/RelPlus); SlotC is not gated on the intent; duplicates "
      "deduplicated; micro-averaged over summed corpus counts";

  auto put = [&](const std::string& name, const Counts& c) {
    report.metrics[name] = from_counts(c.tp, c.fp, c.fn);
  };

  switch (task) {
    case Task::EventArgument: {
      put("TriC", cond_counts);
      put("ArgI", ident);
      // ArgC gate includes the type (cond_ok above used span && type).
      put("ArgC", classif);
      break;
    }
    case Task::RelationExtraction: {
      put("Ent", cond_counts);
      put("Rel", classif);
      // RelPlus: recompute with the type gate.
      Counts relplus;
      for (const auto& [id, g] : gold_by_id) {
        const Prediction& p = *pred_by_id.at(id);
        PairSet gold_pairs, pred_pairs;
        for (int i = 0; i < g->gold.size(); ++i) {
          gold_pairs.insert({g->gold.spans[i], g->gold.relations[i]});
        }
        for (int i = 0; i < p.structure.size(); ++i) {
          pred_pairs.insert({p.structure.spans[i], p.structure.relations[i]});
        }
        bool ok = p.condition.span == g->condition.span &&
                  p.condition.type_label == g->condition.type_label;
        relplus.add_sets(ok ? intersect_size(pred_pairs, gold_pairs) : 0,
                         static_cast<long>(pred_pairs.size()),
                         static_cast<long>(gold_pairs.size()));
      }
      put("RelPlus", relplus);
      break;
    }
    case Task::SemanticParsing: {
      MetricScore intent;
      intent.tp = intent_correct;
      intent.fp = intent.fn = intent_total - intent_correct;
      double acc = intent_total > 0
                       ? static_cast<double>(intent_correct) / intent_total
                       : 0.0;
      intent.precision = intent.recall = intent.f1 = acc;
      report.metrics["Intent"] = intent;
      put("SlotI", ident);
      put("SlotC", classif);
      break;
    }
  }
  return report;
}

json EvalReport::to_json() const {
  json j;
  j["header"] = header;
  json ms;
  for (const auto& [name, m] : metrics) {
    ms[name] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
                {"tp", m.tp},               {"fp", m.fp},         {"fn", m.fn}};
  }
  j["metrics"] = ms;
  return j;
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << "# " << header << "\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s %9s %9s %9s %7s %7s %7s\n", "metric", "P",
                "R", "F1", "tp", "fp", "fn");
  os << line;
  for (const auto& [name, m] : metrics) {
    std::snprintf(line, sizeof(line), "%-8s %9.4f %9.4f %9.4f %7ld %7ld %7ld\n",
                  name.c_str(), m.precision, m.recall, m.f1, m.tp, m.fp, m.fn);
    os << line;
  }
  return os.str();
}

}  // namespace tagprime

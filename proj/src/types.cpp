#include "tagprime/types.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>
#include <stdexcept>

namespace tagprime {

bool RelationSchema::has_relation(const std::string& label) const {
  return std::find(relation_labels.begin(), relation_labels.end(), label) !=
         relation_labels.end();
}

bool RelationSchema::has_condition_type(const std::string& label) const {
  return std::find(condition_types.begin(), condition_types.end(), label) !=
         condition_types.end();
}

std::vector<std::string> fallback_verbalize(const std::string& label) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : label) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(cur);
  if (words.empty()) words.push_back("unk");
  return words;
}

static std::vector<std::string> verbalize_with(
    const std::map<std::string, std::vector<std::string>>& table,
    const std::string& label, bool known, const char* what) {
  if (!known) {
    throw std::invalid_argument(std::string("unknown ") + what + " label: " + label);
  }
  auto it = table.find(label);
  if (it != table.end() && !it->second.empty()) return it->second;
  return fallback_verbalize(label);
}

std::vector<std::string> RelationSchema::verbalize_relation(
    const std::string& label) const {
  return verbalize_with(verbalizer, label, has_relation(label), "relation");
}

std::vector<std::string> RelationSchema::verbalize_condition_type(
    const std::string& label) const {
  return verbalize_with(condition_verbalizer, label, has_condition_type(label),
                        "condition type");
}

static void fnv1a(uint64_t& h, const std::string& s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h ^= 0xff;  // field terminator
  h *= 0x100000001b3ULL;
}

uint64_t RelationSchema::hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : condition_types) fnv1a(h, t);
  fnv1a(h, "|");
  for (const auto& r : relation_labels) fnv1a(h, r);
  fnv1a(h, "|");
  auto hash_table = [&](const std::map<std::string, std::vector<std::string>>& tab) {
    for (const auto& [k, v] : tab) {
      fnv1a(h, k);
      for (const auto& w : v) fnv1a(h, w);
    }
    fnv1a(h, "|");
  };
  hash_table(verbalizer);
  hash_table(condition_verbalizer);
  fnv1a(h, separator);
  return h;
}

RelationalStructure normalized(const RelationalStructure& s) {
  std::vector<std::pair<Span, std::string>> pairs;
  pairs.reserve(s.spans.size());
  for (size_t i = 0; i < s.spans.size(); ++i) pairs.emplace_back(s.spans[i], s.relations[i]);
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (!(a.first == b.first)) return a.first < b.first;
    return a.second < b.second;
  });
  RelationalStructure out;
  for (auto& [sp, r] : pairs) {
    out.spans.push_back(sp);
    out.relations.push_back(r);
  }
  return out;
}

std::vector<std::string> validate_instance(const RSEInstance& inst,
                                           const RelationSchema& schema) {
  std::vector<std::string> v;
  const int n = inst.passage.length();
  if (n < 1) v.push_back("passage is empty");
  for (const auto& t : inst.passage.tokens) {
    if (t.empty()) {
      v.push_back("empty token in passage");
      break;
    }
  }
  for (const auto& t : inst.passage.tokens) {
    if (t.find(schema.separator) != std::string::npos) {
      v.push_back("token contains reserved separator: " + t);
      break;
    }
  }
  const Condition& c = inst.condition;
  if (c.kind == ConditionKind::Span &&
      !(0 <= c.span.start && c.span.start < c.span.end && c.span.end <= n)) {
    v.push_back("condition span out of bounds");
  }
  if (!schema.has_condition_type(c.type_label)) {
    v.push_back("unknown condition type: " + c.type_label);
  }
  const auto& g = inst.gold;
  if (g.spans.size() != g.relations.size()) {
    v.push_back("spans/relations length mismatch");
    return v;
  }
  std::set<std::pair<Span, std::string>> seen;
  for (size_t i = 0; i < g.spans.size(); ++i) {
    const Span& s = g.spans[i];
    if (!(0 <= s.start && s.start < s.end && s.end <= n)) {
      v.push_back("span out of bounds");
    }
    if (!schema.has_relation(g.relations[i])) {
      v.push_back("unknown relation label: " + g.relations[i]);
    }
    if (!seen.insert({s, g.relations[i]}).second) {
      v.push_back("duplicate (span, relation) pair");
    }
  }
  return v;
}

OverlapResolution resolve_overlaps(const RelationalStructure& s) {
  std::vector<size_t> order(s.spans.size());
  std::iota(order.begin(), order.end(), size_t{0});
  // Smaller start wins; ties go to the longer span.
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (s.spans[a].start != s.spans[b].start) return s.spans[a].start < s.spans[b].start;
    return s.spans[a].end > s.spans[b].end;
  });
  OverlapResolution out;
  std::vector<Span> kept;
  for (size_t i : order) {
    const Span& sp = s.spans[i];
    bool clash = false;
    for (const Span& k : kept) {
      if (k.overlaps(sp)) {
        clash = true;
        break;
      }
    }
    if (clash) {
      out.warnings.push_back("dropped overlap: [" + std::to_string(sp.start) + "," +
                             std::to_string(sp.end) + "):" + s.relations[i]);
    } else {
      kept.push_back(sp);
      out.structure.spans.push_back(sp);
      out.structure.relations.push_back(s.relations[i]);
    }
  }
  return out;
}

}  // namespace tagprime

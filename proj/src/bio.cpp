#include "tagprime/bio.hpp"

#include <stdexcept>

namespace tagprime {

std::vector<std::string> make_tagset(TagScheme scheme,
                                     const std::vector<std::string>& relation_labels) {
  std::vector<std::string> tagset{"O"};
  if (scheme == TagScheme::Binary) {
    tagset.push_back("B");
    tagset.push_back("I");
  } else {
    for (const auto& r : relation_labels) {
      tagset.push_back("B-" + r);
      tagset.push_back("I-" + r);
    }
  }
  return tagset;
}

namespace {

bool is_b(int tag) { return tag != 0 && (tag - 1) % 2 == 0; }
bool is_i(int tag) { return tag != 0 && (tag - 1) % 2 == 1; }
int role_of(int tag) { return (tag - 1) / 2; }  // index into relation order

}  // namespace

bool bio_valid(const TagSequence& seq) {
  for (int t = 0; t < seq.length(); ++t) {
    int tag = seq.tags[t];
    if (tag < 0 || tag >= static_cast<int>(seq.tagset.size())) return false;
    if (is_i(tag)) {
      if (t == 0) return false;
      int prev = seq.tags[t - 1];
      if (prev == 0 || role_of(prev) != role_of(tag)) return false;
    }
  }
  return true;
}

TagSequence encode_tags(const RelationalStructure& structure, int n, TagScheme scheme,
                        const std::vector<std::string>& relation_labels,
                        const std::optional<std::string>& relation_filter) {
  if (scheme == TagScheme::Binary && !relation_filter) {
    throw std::invalid_argument("Binary scheme requires a relation filter");
  }
  if (scheme == TagScheme::RoleTyped && relation_filter) {
    throw std::invalid_argument("RoleTyped scheme forbids a relation filter");
  }
  TagSequence seq;
  seq.scheme = scheme;
  seq.tagset = make_tagset(scheme, relation_labels);
  seq.tags.assign(n, 0);

  for (int i = 0; i < structure.size(); ++i) {
    const Span& sp = structure.spans[i];
    const std::string& rel = structure.relations[i];
    if (relation_filter && rel != *relation_filter) continue;
    if (sp.start < 0 || sp.end > n || sp.start >= sp.end) {
      throw std::invalid_argument("span out of bounds in encode_tags");
    }
    int b_tag;
    if (scheme == TagScheme::Binary) {
      b_tag = 1;
    } else {
      int ri = -1;
      for (size_t k = 0; k < relation_labels.size(); ++k) {
        if (relation_labels[k] == rel) { ri = static_cast<int>(k); break; }
      }
      if (ri < 0) throw std::invalid_argument("relation not in tagset: " + rel);
      b_tag = 1 + 2 * ri;
    }
    for (int t = sp.start; t < sp.end; ++t) {
      if (seq.tags[t] != 0) {
        throw std::invalid_argument(
            "overlapping spans in encode_tags: [" + std::to_string(sp.start) + "," +
            std::to_string(sp.end) + ") collides at token " + std::to_string(t));
      }
      seq.tags[t] = (t == sp.start) ? b_tag : b_tag + 1;
    }
  }
  return seq;
}

RelationalStructure decode_tags(const TagSequence& seq,
                                const std::optional<std::string>& relation_for_binary) {
  RelationalStructure out;
  auto rel_name = [&](int tag) -> std::string {
    if (seq.scheme == TagScheme::Binary) {
      return relation_for_binary ? *relation_for_binary : std::string("UNSPECIFIED");
    }
    // Strip the "B-"/"I-" prefix from the tagset entry.
    return seq.tagset[1 + 2 * role_of(tag)].substr(2);
  };
  int open_start = -1, open_role = -1;
  auto close = [&](int end) {
    if (open_start >= 0) {
      out.spans.push_back({open_start, end});
      out.relations.push_back(rel_name(1 + 2 * open_role));
      open_start = -1;
    }
  };
  for (int t = 0; t < seq.length(); ++t) {
    int tag = seq.tags[t];
    if (tag == 0) {
      close(t);
    } else if (is_b(tag)) {
      close(t);
      open_start = t;
      open_role = role_of(tag);
    } else {  // I tag; repair rule: mismatched or orphaned I starts a new span
      if (open_start >= 0 && role_of(tag) == open_role) continue;
      close(t);
      open_start = t;
      open_role = role_of(tag);
    }
  }
  close(seq.length());
  return out;
}

}  // namespace tagprime

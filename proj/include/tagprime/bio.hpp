#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tagprime/types.hpp"

namespace tagprime {

enum class TagScheme { RoleTyped, Binary };

// Per-token BIO labels for one passage. Tag ids index into `tagset`.
// RoleTyped tagset: O, B-r, I-r for every relation r. Binary: O, B, I.
struct TagSequence {
  std::vector<int> tags;
  TagScheme scheme = TagScheme::RoleTyped;
  std::vector<std::string> tagset;

  int length() const { return static_cast<int>(tags.size()); }
};

// Tag id 0 is always "O"; B-tags at odd offsets, I-tags follow their B.
std::vector<std::string> make_tagset(TagScheme scheme,
                                     const std::vector<std::string>& relation_labels);

// True iff every I tag is preceded by a B or I tag of the same role.
bool bio_valid(const TagSequence& seq);

// Spans must already be overlap-free (see resolve_overlaps). Binary mode
// requires relation_filter and keeps only matching spans; RoleTyped
// forbids it. Throws std::invalid_argument on surviving overlaps.
TagSequence encode_tags(const RelationalStructure& structure, int n, TagScheme scheme,
                        const std::vector<std::string>& relation_labels,
                        const std::optional<std::string>& relation_filter = std::nullopt);

// Total: an I after O (or a role-mismatched I) starts a new span.
RelationalStructure decode_tags(const TagSequence& tags,
                                const std::optional<std::string>& relation_for_binary =
                                    std::nullopt);

}  // namespace tagprime

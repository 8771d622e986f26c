#pragma once

#include <string>

#include "tagprime/model.hpp"

namespace tagprime {

// Single versioned binary: magic, format version, a JSON header (encoder
// config, variant, split, tagset, schema + hash), then every tensor as raw
// little-endian float32 in the order the header declares. The subword
// vocab lives next to it at <path>.vocab, one piece per line.
void save_checkpoint(TagPrimeModel& model, const std::string& path);

// Throws std::runtime_error on a missing file, bad magic, or an
// unsupported format version.
TagPrimeModel load_checkpoint(const std::string& path);

}  // namespace tagprime

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tagprime/types.hpp"

namespace tagprime {

nlohmann::json instance_to_json(const RSEInstance& inst);
RSEInstance instance_from_json(const nlohmann::json& j);

// Line-delimited records, one RSEInstance per line. Throws on the first
// malformed or invariant-violating record, naming the line number.
std::vector<RSEInstance> read_corpus(std::istream& in, const RelationSchema& schema);
std::vector<RSEInstance> read_corpus_file(const std::string& path,
                                          const RelationSchema& schema);
void write_corpus(std::ostream& out, const std::vector<RSEInstance>& corpus);
void write_corpus_file(const std::string& path, const std::vector<RSEInstance>& corpus);

nlohmann::json schema_to_json(const RelationSchema& schema);
RelationSchema schema_from_json(const nlohmann::json& j);
RelationSchema read_schema_file(const std::string& path);
void write_schema_file(const std::string& path, const RelationSchema& schema);

}  // namespace tagprime

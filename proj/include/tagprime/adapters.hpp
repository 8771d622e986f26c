#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "tagprime/types.hpp"

namespace tagprime {

enum class Task { EventArgument, RelationExtraction, SemanticParsing };

Task task_from_string(const std::string& s);
std::string task_to_string(Task t);

// Maps a task-specific raw record onto the unified RSE instance.
// EventArgument: {"id","tokens","trigger":{"start","end","type"},
//                 "arguments":[{"start","end","role"}]}
// RelationExtraction: {"id","tokens","head":{"start","end","type"},
//                      "tails":[{"start","end","relation"}]}
// SemanticParsing: {"id","tokens","intent","slots":[{"start","end","role"}]}
// Throws std::invalid_argument naming the missing field on malformed input.
RSEInstance adapt_task(Task task, const nlohmann::json& raw);

}  // namespace tagprime

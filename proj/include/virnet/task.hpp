#pragma once

#include <string>

namespace virnet {

enum class Task { denoise, sr, deblock };

const char* task_name(Task task);
Task parse_task(const std::string& name);  // throws ConfigError on unknown

}  // namespace virnet

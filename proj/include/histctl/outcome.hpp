#pragma once

#include <string_view>

namespace histctl {

enum class Outcome { dead, pain, sre };

std::string_view to_string(Outcome o);
Outcome parse_outcome(std::string_view s);  // "DEAD", "PAIN", "SRE"; throws ConfigError

}  // namespace histctl

#pragma once

#include <string_view>
#include <vector>

namespace rulesynth::assets {

/// Contents of a file shipped under assets/, keyed by its relative path
/// (e.g. "prompts/system_prompt.md"). Throws Error(IoError) for unknown names.
std::string_view get(std::string_view name);

std::vector<std::string_view> names();

}  // namespace rulesynth::assets

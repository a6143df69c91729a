#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace rulesynth::testing {

inline std::filesystem::path fixture_path(const std::string& rel) {
  return std::filesystem::path(RULESYNTH_FIXTURE_DIR) / rel;
}

inline std::string read_fixture(const std::string& rel) {
  std::ifstream in(fixture_path(rel), std::ios::binary);
  if (!in) throw std::runtime_error("missing fixture " + rel);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rulesynth::testing

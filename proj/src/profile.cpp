#include "rulesynth/profile.hpp"

#include <algorithm>

#include "rulesynth/assets.hpp"
#include "rulesynth/error.hpp"

namespace rulesynth {

std::string_view to_string(ScopeLabel label) {
  switch (label) {
    case ScopeLabel::Global: return "Global";
    case ScopeLabel::File: return "File";
    case ScopeLabel::Class: return "Class";
    case ScopeLabel::Function: return "Function";
  }
  return "File";
}

std::optional<ScopeLabel> parse_scope_label(std::string_view text) {
  if (text == "Global") return ScopeLabel::Global;
  if (text == "File") return ScopeLabel::File;
  if (text == "Class") return ScopeLabel::Class;
  if (text == "Function") return ScopeLabel::Function;
  return std::nullopt;
}

namespace {

void sort_longest_first(std::vector<std::string>& items) {
  std::stable_sort(items.begin(), items.end(),
                   [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
}

template <typename T>
T field_or(const nlohmann::json& doc, const char* key, T fallback) {
  if (!doc.contains(key) || doc.at(key).is_null()) return fallback;
  return doc.at(key).get<T>();
}

}  // namespace

const LanguageProfile& LanguageProfile::python() {
  static const LanguageProfile profile =
      from_json(nlohmann::json::parse(assets::get("profiles/python.json")));
  return profile;
}

LanguageProfile LanguageProfile::from_json(const nlohmann::json& doc) {
  LanguageProfile p;
  try {
    p.name = doc.at("name").get<std::string>();
    p.string_delimiters = field_or<std::vector<std::string>>(doc, "string_delimiters", {});
    p.string_prefixes = field_or<std::vector<std::string>>(doc, "string_prefixes", {});
    p.line_comment = field_or<std::string>(doc, "line_comment", "");
    if (doc.contains("block_comment") && !doc.at("block_comment").is_null()) {
      auto bc = doc.at("block_comment").get<std::vector<std::string>>();
      if (bc.size() != 2) {
        throw Error(ErrorCode::ConfigError, "block_comment must be [open, close]");
      }
      p.block_comment = std::make_pair(bc[0], bc[1]);
    }
    for (const auto& kw : field_or<std::vector<std::string>>(doc, "keywords", {})) {
      p.keywords.insert(kw);
    }
    p.operators = field_or<std::vector<std::string>>(doc, "operators", {});
    p.file_extensions = field_or<std::vector<std::string>>(doc, "file_extensions", {});
    p.tab_width = field_or<int>(doc, "tab_width", 8);
    if (doc.contains("scope_finders")) {
      for (const auto& [label_text, finder_doc] : doc.at("scope_finders").items()) {
        auto label = parse_scope_label(label_text);
        if (!label) {
          throw Error(ErrorCode::ConfigError, "unknown scope label in profile: " + label_text);
        }
        ScopeFinder finder;
        finder.keywords = field_or<std::vector<std::string>>(finder_doc, "keywords", {});
        finder.prefixes = field_or<std::vector<std::string>>(finder_doc, "prefixes", {});
        p.scope_finders[*label] = std::move(finder);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("invalid language profile: ") + e.what());
  }
  sort_longest_first(p.string_delimiters);
  sort_longest_first(p.operators);
  sort_longest_first(p.string_prefixes);
  p.validate();
  return p;
}

nlohmann::json LanguageProfile::to_json() const {
  nlohmann::json doc;
  doc["name"] = name;
  doc["string_delimiters"] = string_delimiters;
  doc["string_prefixes"] = string_prefixes;
  doc["line_comment"] = line_comment;
  if (block_comment) {
    doc["block_comment"] = {block_comment->first, block_comment->second};
  }
  doc["keywords"] = std::vector<std::string>(keywords.begin(), keywords.end());
  doc["operators"] = operators;
  doc["file_extensions"] = file_extensions;
  doc["tab_width"] = tab_width;
  nlohmann::json finders = nlohmann::json::object();
  for (const auto& [label, finder] : scope_finders) {
    finders[std::string(to_string(label))] = {{"keywords", finder.keywords},
                                              {"prefixes", finder.prefixes}};
  }
  doc["scope_finders"] = finders;
  return doc;
}

void LanguageProfile::validate() const {
  if (name.empty()) throw Error(ErrorCode::ConfigError, "language profile needs a name");
  if (keywords.empty()) {
    throw Error(ErrorCode::ConfigError, "language profile '" + name + "' has no keywords");
  }
  for (auto label : {ScopeLabel::Class, ScopeLabel::Function}) {
    auto it = scope_finders.find(label);
    if (it == scope_finders.end() || it->second.keywords.empty()) {
      throw Error(ErrorCode::ConfigError, "language profile '" + name +
                                              "' lacks a scope finder for " +
                                              std::string(to_string(label)));
    }
  }
  if (tab_width < 1) throw Error(ErrorCode::ConfigError, "tab_width must be positive");
}

}  // namespace rulesynth

#include <cctype>
#include <sstream>

#include "rulesynth/error.hpp"
#include "rulesynth/rulegraph.hpp"

namespace rulesynth {
namespace {

[[noreturn]] void parse_error(const std::string& what, std::size_t line = 0) {
  std::string msg = "rule file: " + what;
  if (line > 0) msg += " (line " + std::to_string(line) + ")";
  throw Error(ErrorCode::ParseError, msg);
}

// Minimal reader for the sectioned-text rendering: arrays of tables
// ([[rules]], [[edges]]) holding string and boolean keys.
class SectionedReader {
public:
  explicit SectionedReader(std::string_view text) : s_(text) {}

  nlohmann::json read() {
    nlohmann::json doc = {{"rules", nlohmann::json::array()}, {"edges", nlohmann::json::array()}};
    nlohmann::json* table = nullptr;
    while (true) {
      skip_blank_and_comments();
      if (eof()) break;
      if (peek() == '[') {
        if (s_.compare(pos_, 2, "[[") != 0) parse_error("expected '[[' table header", line_);
        pos_ += 2;
        std::string name = read_bare_key();
        if (s_.compare(pos_, 2, "]]") != 0) parse_error("expected ']]'", line_);
        pos_ += 2;
        if (name != "rules" && name != "edges") parse_error("unknown table [[" + name + "]]", line_);
        doc[name].push_back(nlohmann::json::object());
        table = &doc[name].back();
        expect_line_end();
        continue;
      }
      if (table == nullptr) parse_error("key outside of a [[rules]] or [[edges]] table", line_);
      std::string key = read_bare_key();
      skip_inline_space();
      if (eof() || peek() != '=') parse_error("expected '=' after key '" + key + "'", line_);
      ++pos_;
      skip_inline_space();
      if (table->contains(key)) parse_error("duplicate key '" + key + "'", line_);
      (*table)[key] = read_value();
      expect_line_end();
    }
    return doc;
  }

private:
  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return s_[pos_]; }

  void advance() {
    if (s_[pos_] == '\n') ++line_;
    ++pos_;
  }

  void skip_inline_space() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_blank_and_comments() {
    while (!eof()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else if (c == '#') {
        while (!eof() && peek() != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  void expect_line_end() {
    skip_inline_space();
    if (!eof() && peek() == '#') {
      while (!eof() && peek() != '\n') ++pos_;
    }
    if (!eof() && peek() == '\r') ++pos_;
    if (!eof() && peek() != '\n') parse_error("unexpected trailing characters", line_);
  }

  std::string read_bare_key() {
    skip_inline_space();
    std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' ||
                      peek() == '-')) {
      ++pos_;
    }
    if (start == pos_) parse_error("expected a key", line_);
    return std::string(s_.substr(start, pos_ - start));
  }

  static void append_utf8(std::string& out, unsigned long cp) {
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }

  void read_escape(std::string& out) {
    ++pos_;  // backslash
    if (eof()) parse_error("dangling escape", line_);
    char c = peek();
    ++pos_;
    switch (c) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      case 'b': out += '\b'; break;
      case 'f': out += '\f'; break;
      case 'u':
      case 'U': {
        std::size_t len = c == 'u' ? 4 : 8;
        if (pos_ + len > s_.size()) parse_error("short unicode escape", line_);
        unsigned long cp = std::stoul(std::string(s_.substr(pos_, len)), nullptr, 16);
        pos_ += len;
        append_utf8(out, cp);
        break;
      }
      default:
        parse_error(std::string("unknown escape '\\") + c + "'", line_);
    }
  }

  nlohmann::json read_value() {
    if (eof()) parse_error("missing value", line_);
    if (s_.compare(pos_, 3, "\"\"\"") == 0 || s_.compare(pos_, 3, "'''") == 0) {
      const std::string delim(s_.substr(pos_, 3));
      const bool basic = delim[0] == '"';
      pos_ += 3;
      if (!eof() && peek() == '\n') advance();
      else if (s_.compare(pos_, 2, "\r\n") == 0) { ++pos_; advance(); }
      std::string out;
      while (true) {
        if (eof()) parse_error("unterminated multi-line string", line_);
        if (s_.compare(pos_, 3, delim) == 0) {
          pos_ += 3;
          return out;
        }
        if (basic && peek() == '\\') {
          read_escape(out);
          continue;
        }
        out += peek();
        advance();
      }
    }
    if (peek() == '"') {
      ++pos_;
      std::string out;
      while (true) {
        if (eof() || peek() == '\n') parse_error("unterminated string", line_);
        if (peek() == '"') {
          ++pos_;
          return out;
        }
        if (peek() == '\\') {
          read_escape(out);
          continue;
        }
        out += peek();
        ++pos_;
      }
    }
    if (peek() == '\'') {
      ++pos_;
      auto end = s_.find('\'', pos_);
      auto nl = s_.find('\n', pos_);
      if (end == std::string_view::npos || (nl != std::string_view::npos && nl < end)) {
        parse_error("unterminated string", line_);
      }
      std::string out(s_.substr(pos_, end - pos_));
      pos_ = end + 1;
      return out;
    }
    if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return true;
    }
    if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return false;
    }
    parse_error("unsupported value", line_);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

std::string quote_basic(std::string_view text) {
  std::string out = "\"";
  for (unsigned char c : text) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (c < 0x20 || c == 0x7F) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04X", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out + "\"";
}

const nlohmann::json& require(const nlohmann::json& obj, const char* key, const char* where) {
  if (!obj.contains(key)) parse_error(std::string(where) + " is missing '" + key + "'");
  return obj.at(key);
}

std::string require_string(const nlohmann::json& obj, const char* key, const char* where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) parse_error(std::string(where) + " field '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

Rule rule_from_json(const nlohmann::json& r) {
  if (!r.is_object()) parse_error("each rule must be a table");
  for (const auto& [key, _] : r.items()) {
    if (key != "name" && key != "match" && key != "replace" && key != "seed") {
      parse_error("unknown rule field '" + key + "'");
    }
  }
  Rule rule;
  rule.name = require_string(r, "name", "rule");
  if (rule.name.empty()) parse_error("rule name must be non-empty");
  rule.match = parse_pattern(require_string(r, "match", ("rule '" + rule.name + "'").c_str()));
  if (r.contains("replace") && !r.at("replace").is_null()) {
    if (!r.at("replace").is_string()) parse_error("rule field 'replace' must be a string");
    rule.replace = parse_replacement(r.at("replace").get<std::string>());
  }
  if (r.contains("seed")) {
    if (!r.at("seed").is_boolean()) parse_error("rule field 'seed' must be a boolean");
    rule.is_seed = r.at("seed").get<bool>();
  }
  return rule;
}

Edge edge_from_json(const nlohmann::json& e) {
  if (!e.is_object()) parse_error("each edge must be a table");
  for (const auto& [key, _] : e.items()) {
    if (key != "from" && key != "to" && key != "scope") {
      parse_error("unknown edge field '" + key + "'");
    }
  }
  Edge edge;
  edge.from = require_string(e, "from", "edge");
  edge.to = require_string(e, "to", "edge");
  auto scope_text = require_string(e, "scope", "edge");
  auto scope = parse_scope_label(scope_text);
  if (!scope) parse_error("unknown scope '" + scope_text + "'");
  edge.scope = *scope;
  return edge;
}

nlohmann::json rule_to_json(const Rule& r) {
  nlohmann::json j = {{"name", r.name}, {"match", r.match.to_string()}, {"seed", r.is_seed}};
  if (r.replace) j["replace"] = r.replace->to_string();
  return j;
}

nlohmann::json edge_to_json(const Edge& e) {
  return {{"from", e.from}, {"to", e.to}, {"scope", std::string(to_string(e.scope))}};
}

RuleGraph graph_from_json(const nlohmann::json& doc, bool require_seed) {
  if (!doc.is_object()) parse_error("document must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "rules" && key != "edges") parse_error("unknown top-level key '" + key + "'");
  }
  RuleGraph graph;
  const auto rules = doc.value("rules", nlohmann::json::array());
  if (!rules.is_array()) parse_error("'rules' must be an array");
  for (const auto& r : rules) graph.add_rule(rule_from_json(r));
  const auto edges = doc.value("edges", nlohmann::json::array());
  if (!edges.is_array()) parse_error("'edges' must be an array");
  for (const auto& e : edges) graph.add_edge(edge_from_json(e));
  graph.validate(require_seed);
  return graph;
}

RuleGraph load_graph(std::string_view document, bool require_seed) {
  std::size_t i = 0;
  while (i < document.size() && std::isspace(static_cast<unsigned char>(document[i]))) ++i;
  if (i < document.size() && document[i] == '{') {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(document);
    } catch (const nlohmann::json::parse_error& e) {
      parse_error(e.what());
    }
    return graph_from_json(doc, require_seed);
  }
  return graph_from_json(SectionedReader(document).read(), require_seed);
}

nlohmann::json RuleGraph::to_json() const {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : rules_) rules.push_back(rule_to_json(r));
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : edges_) edges.push_back(edge_to_json(e));
  return {{"rules", rules}, {"edges", edges}};
}

std::string RuleGraph::to_json_text() const { return to_json().dump(2) + "\n"; }

std::string RuleGraph::to_sectioned_text() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& r : rules_) {
    if (!first) out << "\n";
    first = false;
    out << "[[rules]]\n";
    out << "name = " << quote_basic(r.name) << "\n";
    out << "match = " << quote_basic(r.match.to_string()) << "\n";
    if (r.replace) out << "replace = " << quote_basic(r.replace->to_string()) << "\n";
    out << "seed = " << (r.is_seed ? "true" : "false") << "\n";
  }
  for (const auto& e : edges_) {
    out << "\n[[edges]]\n";
    out << "from = " << quote_basic(e.from) << "\n";
    out << "to = " << quote_basic(e.to) << "\n";
    out << "scope = " << quote_basic(to_string(e.scope)) << "\n";
  }
  return out.str();
}

}  // namespace rulesynth

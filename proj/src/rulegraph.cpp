#include "rulesynth/rulegraph.hpp"

#include <algorithm>

#include "rulesynth/error.hpp"

namespace rulesynth {

void RuleGraph::add_rule(Rule rule) {
  if (find(rule.name) != nullptr) {
    throw Error(ErrorCode::DuplicateRuleName, "duplicate rule name '" + rule.name + "'", rule.name);
  }
  rules_.push_back(std::move(rule));
}

void RuleGraph::upsert_rule(Rule rule) {
  if (Rule* existing = find(rule.name)) {
    *existing = std::move(rule);
  } else {
    rules_.push_back(std::move(rule));
  }
}

bool RuleGraph::remove_rule(std::string_view name) {
  auto it = std::find_if(rules_.begin(), rules_.end(),
                         [&](const Rule& r) { return r.name == name; });
  if (it == rules_.end()) return false;
  rules_.erase(it);
  std::erase_if(edges_, [&](const Edge& e) { return e.from == name || e.to == name; });
  return true;
}

void RuleGraph::add_edge(Edge edge) {
  if (std::find(edges_.begin(), edges_.end(), edge) == edges_.end()) {
    edges_.push_back(std::move(edge));
  }
}

bool RuleGraph::remove_edge(const Edge& edge) {
  auto before = edges_.size();
  std::erase(edges_, edge);
  return edges_.size() != before;
}

const Rule* RuleGraph::find(std::string_view name) const {
  auto it = std::find_if(rules_.begin(), rules_.end(),
                         [&](const Rule& r) { return r.name == name; });
  return it == rules_.end() ? nullptr : &*it;
}

Rule* RuleGraph::find(std::string_view name) {
  auto it = std::find_if(rules_.begin(), rules_.end(),
                         [&](const Rule& r) { return r.name == name; });
  return it == rules_.end() ? nullptr : &*it;
}

std::vector<const Edge*> RuleGraph::outgoing(std::string_view name) const {
  std::vector<const Edge*> out;
  for (const auto& e : edges_) {
    if (e.from == name) out.push_back(&e);
  }
  return out;
}

bool RuleGraph::has_seed() const {
  return std::any_of(rules_.begin(), rules_.end(), [](const Rule& r) { return r.is_seed; });
}

void RuleGraph::validate(bool require_seed) const {
  for (const auto& e : edges_) {
    for (const auto* end : {&e.from, &e.to}) {
      if (find(*end) == nullptr) {
        throw Error(ErrorCode::DanglingEdge,
                    "edge " + e.from + " -> " + e.to + " references unknown rule '" + *end + "'",
                    *end);
      }
    }
  }
  if (require_seed && !has_seed()) {
    throw Error(ErrorCode::NoSeedRule, "rule graph has no seed rule");
  }
}

// ---------------------------------------------------------------------------
// Execution

namespace {

struct Document {
  std::string id;
  std::string text;
  std::vector<std::size_t*> anchors;
};

// Registers offsets that must follow edits made deeper in the recursion.
class AnchorScope {
public:
  AnchorScope(Document& doc, std::initializer_list<std::size_t*> offsets) : doc_(doc) {
    for (auto* p : offsets) {
      doc_.anchors.push_back(p);
      ++count_;
    }
  }
  ~AnchorScope() { doc_.anchors.resize(doc_.anchors.size() - count_); }
  AnchorScope(const AnchorScope&) = delete;
  AnchorScope& operator=(const AnchorScope&) = delete;

private:
  Document& doc_;
  std::size_t count_ = 0;
};

class Executor {
public:
  Executor(const RuleGraph& graph, FileMap files, const LanguageProfile& profile,
           const ExecutionLimits& limits)
      : graph_(graph), profile_(profile), limits_(limits) {
    for (auto& [id, text] : files) docs_.push_back(Document{id, std::move(text), {}});
  }

  ExecutionResult run() {
    while (true) {
      const std::size_t before = log_.count();
      ++log_.passes;
      for (const auto& rule : graph_.rules()) {
        if (rule.is_seed) run_global(rule, {}, 0);
      }
      if (log_.count() == before) break;
    }
    ExecutionResult result;
    for (auto& doc : docs_) result.files.emplace(doc.id, std::move(doc.text));
    result.log = std::move(log_);
    return result;
  }

private:
  void run_global(const Rule& rule, const Bindings& inherited, std::size_t depth) {
    for (std::size_t f = 0; f < docs_.size(); ++f) {
      run_in_file(rule, f, Span{0, docs_[f].text.size()}, inherited, depth);
    }
  }

  void edit(Document& doc, Span site, const std::string& replacement) {
    doc.text.replace(site.begin, site.size(), replacement);
    const auto new_end = site.begin + replacement.size();
    for (auto* p : doc.anchors) {
      if (*p >= site.end) {
        *p = *p - site.end + new_end;
      } else if (*p > site.begin) {
        *p = new_end;
      }
    }
  }

  void run_in_file(const Rule& rule, std::size_t f, Span region, const Bindings& inherited,
                   std::size_t depth) {
    if (depth > limits_.max_depth) {
      throw Error(ErrorCode::RewriteBudgetExceeded,
                  "edge activation depth exceeded " + std::to_string(limits_.max_depth) +
                      " (cyclic edges?)",
                  rule.name);
    }
    Document& doc = docs_[f];
    const Pattern match = bind_holes(rule.match, inherited);
    std::optional<Pattern> replace;
    if (rule.replace) replace = bind_holes(*rule.replace, inherited);

    std::size_t cursor = region.begin;
    std::size_t region_begin = region.begin;
    std::size_t region_end = region.end;
    AnchorScope guard(doc, {&cursor, &region_begin, &region_end});

    while (cursor <= region_end) {
      auto tree = lex(doc.text, profile_);
      auto m = find_first_match(match, tree, cursor, Span{region_begin, region_end});
      if (!m) break;

      Bindings bindings = inherited;
      for (auto& [name, bound] : m->bindings) bindings[name] = bound;

      std::size_t site_begin = m->site.begin;
      std::size_t site_end = m->site.end;
      if (replace) {
        auto text = substitute_indented(*replace, bindings, line_indent(doc.text, site_begin));
        if (std::string_view(doc.text).substr(site_begin, site_end - site_begin) != text) {
          if (log_.count() >= limits_.max_rewrites) {
            throw Error(ErrorCode::RewriteBudgetExceeded,
                        "rewrite budget of " + std::to_string(limits_.max_rewrites) +
                            " exceeded (cyclic or self-feeding rules?)",
                        rule.name);
          }
          edit(doc, Span{site_begin, site_end}, text);
          site_end = site_begin + text.size();
          log_.entries.push_back(RewriteEntry{rule.name, doc.id, Span{site_begin, site_end},
                                              Span{region_begin, region_end}, text});
        }
      }
      // Resume after the replacement text so a rule never re-fires on its own output
      // within the same activation.
      cursor = site_end > site_begin ? site_end : site_begin + 1;

      AnchorScope site_guard(doc, {&site_begin, &site_end});
      for (const Edge* edge : graph_.outgoing(rule.name)) {
        const Rule* child = graph_.find(edge->to);
        if (child == nullptr) continue;
        if (edge->scope == ScopeLabel::Global) {
          run_global(*child, bindings, depth + 1);
          continue;
        }
        Span child_region{0, doc.text.size()};
        if (edge->scope != ScopeLabel::File) {
          auto tree_now = lex(doc.text, profile_);
          child_region =
              enclosing_scope(tree_now, Span{site_begin, site_end}, edge->scope, profile_);
        }
        run_in_file(*child, f, child_region, bindings, depth + 1);
      }
    }
  }

  const RuleGraph& graph_;
  const LanguageProfile& profile_;
  ExecutionLimits limits_;
  std::vector<Document> docs_;
  RewriteLog log_;
};

}  // namespace

ExecutionResult execute(const RuleGraph& graph, FileMap files, const LanguageProfile& profile,
                        const ExecutionLimits& limits) {
  graph.validate(false);
  return Executor(graph, std::move(files), profile, limits).run();
}

std::set<std::string> remaining_markers(const FileMap& files,
                                        const std::set<std::string>& markers,
                                        const LanguageProfile& profile) {
  std::vector<std::vector<std::string>> marker_tokens;
  for (const auto& marker : markers) {
    std::vector<std::string> toks;
    for (const auto& t : tokenize(marker, profile)) {
      if (!t.is_space()) toks.push_back(t.text);
    }
    marker_tokens.push_back(std::move(toks));
  }

  std::set<std::string> found;
  for (const auto& [_, text] : files) {
    std::vector<std::string> code;
    for (const auto& t : tokenize(text, profile)) {
      if (t.is_space() || t.kind == TokenKind::Comment || t.kind == TokenKind::String) continue;
      code.push_back(t.text);
    }
    std::size_t idx = 0;
    for (const auto& marker : markers) {
      const auto& needle = marker_tokens[idx++];
      if (needle.empty()) continue;
      if (std::search(code.begin(), code.end(), needle.begin(), needle.end()) != code.end()) {
        found.insert(marker);
      }
    }
  }
  return found;
}

bool check_success(const FileMap& migrated, const std::set<std::string>& markers,
                   const TestReport& outcome, const LanguageProfile& profile) {
  return outcome.passed && remaining_markers(migrated, markers, profile).empty();
}

}  // namespace rulesynth

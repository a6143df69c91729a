#include "rulesynth/inference.hpp"

#include <algorithm>
#include <map>

#include "rulesynth/error.hpp"
#include "rulesynth/tokentree.hpp"

namespace rulesynth {

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(text.substr(start));
      break;
    }
    std::size_t end = nl;
    if (end > start && text[end - 1] == '\r') --end;
    lines.emplace_back(text.substr(start, end - start));
    start = nl + 1;
  }
  return lines;
}

namespace {

template <typename T>
std::vector<std::vector<std::uint32_t>> lcs_table(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<std::vector<std::uint32_t>> dp(a.size() + 1,
                                             std::vector<std::uint32_t>(b.size() + 1, 0));
  for (std::size_t i = a.size(); i-- > 0;) {
    for (std::size_t j = b.size(); j-- > 0;) {
      dp[i][j] = a[i] == b[j] ? dp[i + 1][j + 1] + 1 : std::max(dp[i + 1][j], dp[i][j + 1]);
    }
  }
  return dp;
}

std::vector<std::string> code_tokens(std::string_view line, const LanguageProfile& profile) {
  std::vector<std::string> out;
  for (auto& t : tokenize(line, profile)) {
    if (!t.is_space()) out.push_back(std::move(t.text));
  }
  return out;
}

double similarity(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  auto dp = lcs_table(a, b);
  return 2.0 * dp[0][0] / static_cast<double>(a.size() + b.size());
}

constexpr double kAlignThreshold = 0.5;

}  // namespace

std::vector<DiffHunk> diff_hunks(std::string_view source, std::string_view migrated) {
  auto a = split_lines(source);
  auto b = split_lines(migrated);
  auto dp = lcs_table(a, b);

  std::vector<DiffHunk> hunks;
  std::optional<DiffHunk> open;
  auto close = [&](std::size_t i, std::size_t j) {
    if (open) {
      open->source_end = i;
      open->target_end = j;
      hunks.push_back(std::move(*open));
      open.reset();
    }
  };
  auto ensure_open = [&](std::size_t i, std::size_t j) {
    if (!open) {
      open = DiffHunk{};
      open->source_begin = i;
      open->target_begin = j;
    }
  };

  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() || j < b.size()) {
    if (i < a.size() && j < b.size() && a[i] == b[j]) {
      close(i, j);
      ++i;
      ++j;
    } else if (j < b.size() && (i == a.size() || dp[i][j + 1] >= dp[i + 1][j])) {
      ensure_open(i, j);
      open->added.push_back(b[j++]);
    } else {
      ensure_open(i, j);
      open->deleted.push_back(a[i++]);
    }
  }
  close(i, j);
  return hunks;
}

std::vector<DiffHunk> align_hunk(const DiffHunk& hunk, const LanguageProfile& profile) {
  const auto n = hunk.deleted.size();
  const auto m = hunk.added.size();
  if (n <= 1 || m == 0) return {hunk};

  std::vector<std::vector<std::string>> del;
  std::vector<std::vector<std::string>> add;
  for (const auto& l : hunk.deleted) del.push_back(code_tokens(l, profile));
  for (const auto& l : hunk.added) add.push_back(code_tokens(l, profile));

  // best[i][j]: best total similarity aligning deleted[i..] with added[j..].
  std::vector<std::vector<double>> sim(n, std::vector<double>(m));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) sim[i][j] = similarity(del[i], add[j]);
  }
  std::vector<std::vector<double>> best(n + 1, std::vector<double>(m + 1, 0.0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      double v = std::max(best[i + 1][j], best[i][j + 1]);
      if (sim[i][j] >= kAlignThreshold) v = std::max(v, sim[i][j] + best[i + 1][j + 1]);
      best[i][j] = v;
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < n && j < m) {
    if (sim[i][j] >= kAlignThreshold && best[i][j] == sim[i][j] + best[i + 1][j + 1]) {
      pairs.emplace_back(i++, j++);
    } else if (best[i][j] == best[i + 1][j]) {
      ++i;
    } else {
      ++j;
    }
  }
  if (pairs.size() <= 1) return {hunk};

  std::vector<DiffHunk> out;
  std::size_t di = 0;
  std::size_t aj = 0;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const bool last = p + 1 == pairs.size();
    const std::size_t dend = last ? n : pairs[p].first + 1;
    const std::size_t aend = last ? m : pairs[p].second + 1;
    DiffHunk sub;
    sub.deleted.assign(hunk.deleted.begin() + di, hunk.deleted.begin() + dend);
    sub.added.assign(hunk.added.begin() + aj, hunk.added.begin() + aend);
    sub.source_begin = hunk.source_begin + di;
    sub.source_end = hunk.source_begin + dend;
    sub.target_begin = hunk.target_begin + aj;
    sub.target_end = hunk.target_begin + aend;
    out.push_back(std::move(sub));
    di = dend;
    aj = aend;
  }
  return out;
}

std::set<std::string> imported_names(std::string_view source, const LanguageProfile& profile) {
  std::set<std::string> names;
  for (const auto& line : split_lines(source)) {
    auto toks = code_tokens(line, profile);
    if (toks.empty()) continue;
    std::size_t k = 0;
    if (toks[0] == "import") {
      k = 1;
    } else if (toks[0] == "from") {
      auto it = std::find(toks.begin(), toks.end(), "import");
      if (it == toks.end()) continue;
      k = static_cast<std::size_t>(it - toks.begin()) + 1;
    } else {
      continue;
    }
    const bool dotted_binds_root = toks[0] == "import";
    while (k < toks.size()) {
      if (toks[k] == "(" || toks[k] == ")" || toks[k] == "," || toks[k] == "*") {
        ++k;
        continue;
      }
      std::string first = toks[k];
      std::size_t e = k + 1;
      while (e + 1 < toks.size() && toks[e] == ".") e += 2;
      if (e + 1 < toks.size() && toks[e] == "as") {
        names.insert(toks[e + 1]);
        e += 2;
      } else if (dotted_binds_root || e == k + 1) {
        names.insert(first);
      }
      k = e;
    }
  }
  return names;
}

namespace {

struct Occurrence {
  std::size_t token;
  bool eligible;
};

bool is_abstractable_kind(TokenKind k) {
  return k == TokenKind::Identifier || k == TokenKind::Number || k == TokenKind::String;
}

// Marks eligible positions: identifiers (not keywords, not denylisted, not in
// attribute or call-name position) and number/string literals.
std::vector<bool> eligibility(const std::vector<Token>& toks, const std::set<std::string>& deny,
                              const LanguageProfile& profile) {
  std::vector<bool> ok(toks.size(), false);
  auto prev_code = [&](std::size_t i) -> const Token* {
    while (i-- > 0) {
      if (!toks[i].is_space() && toks[i].kind != TokenKind::Comment) return &toks[i];
    }
    return nullptr;
  };
  auto next_code = [&](std::size_t i) -> const Token* {
    for (++i; i < toks.size(); ++i) {
      if (!toks[i].is_space() && toks[i].kind != TokenKind::Comment) return &toks[i];
    }
    return nullptr;
  };
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (!is_abstractable_kind(t.kind)) continue;
    if (t.kind == TokenKind::Identifier) {
      if (profile.is_keyword(t.text) || deny.count(t.text) > 0) continue;
      const Token* p = prev_code(i);
      if (p != nullptr && p->text == ".") continue;
      const Token* n = next_code(i);
      if (n != nullptr && n->text == "(") continue;
    }
    ok[i] = true;
  }
  return ok;
}

std::string leading_ws(std::string_view line) {
  auto n = line.find_first_not_of(" \t");
  return std::string(line.substr(0, n == std::string_view::npos ? line.size() : n));
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

// Removes `base` from every non-blank line; fails when a line lacks it.
std::optional<std::string> dedent_join(const std::vector<std::string>& lines,
                                       const std::string& base) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) out += '\n';
    if (is_blank(lines[i])) continue;
    if (lines[i].compare(0, base.size(), base) != 0) return std::nullopt;
    out += lines[i].substr(base.size());
  }
  return out;
}

Pattern build_pattern(const std::vector<Token>& toks, const std::vector<bool>& eligible,
                      const std::map<std::string, std::string>& holes) {
  std::vector<Segment> segs;
  auto push_literal = [&](const std::string& text) {
    if (!segs.empty()) {
      if (auto* lit = std::get_if<Literal>(&segs.back())) {
        lit->text += text;
        return;
      }
    }
    segs.push_back(Literal{text});
  };
  for (std::size_t i = 0; i < toks.size(); ++i) {
    auto it = holes.find(toks[i].text);
    if (eligible[i] && it != holes.end()) {
      segs.push_back(Hole{it->second, HoleMode::Optional});
    } else {
      push_literal(toks[i].text);
    }
  }
  return Pattern(std::move(segs));
}

bool literal_has_hole_syntax(const Pattern& p) {
  for (const auto& s : p.segments()) {
    if (const auto* lit = std::get_if<Literal>(&s)) {
      if (lit->text.find(":[") != std::string::npos) return true;
    }
  }
  return false;
}

}  // namespace

std::optional<AtomicRule> anti_unify(const DiffHunk& hunk, const std::set<std::string>& denylist,
                                     const LanguageProfile& profile) {
  if (hunk.deleted.empty()) return std::nullopt;
  if (std::all_of(hunk.deleted.begin(), hunk.deleted.end(), is_blank)) return std::nullopt;

  const std::string base = leading_ws(hunk.deleted.front());
  auto before = dedent_join(hunk.deleted, base);
  auto after = dedent_join(hunk.added, base);
  if (!before || !after) return std::nullopt;
  // Leading and trailing blank lines carry no structure.
  auto trim = [](std::string& s) {
    while (!s.empty() && s.back() == '\n') s.pop_back();
  };
  trim(*before);
  trim(*after);

  std::vector<Token> lhs;
  std::vector<Token> rhs;
  try {
    lex(*before, profile);
    lex(*after, profile);
    lhs = tokenize(*before, profile);
    rhs = tokenize(*after, profile);
  } catch (const Error&) {
    return std::nullopt;
  }
  auto lhs_ok = eligibility(lhs, denylist, profile);
  auto rhs_ok = eligibility(rhs, denylist, profile);

  std::set<std::string> rhs_texts;
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    if (rhs_ok[i]) rhs_texts.insert(rhs[i].text);
  }
  std::map<std::string, std::string> holes;
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    if (!lhs_ok[i] || rhs_texts.count(lhs[i].text) == 0 || holes.count(lhs[i].text) > 0) continue;
    holes.emplace(lhs[i].text, "x" + std::to_string(holes.size() + 1));
  }

  AtomicRule rule;
  rule.match = build_pattern(lhs, lhs_ok, holes);
  // A lazy optional hole at the very end would always bind empty text.
  if (!rule.match.empty()) {
    auto segs = rule.match.segments();
    if (auto* h = std::get_if<Hole>(&segs.back())) h->mode = HoleMode::Plus;
    rule.match = Pattern(std::move(segs));
  }
  rule.replace = build_pattern(rhs, rhs_ok, holes);
  rule.hole_count = holes.size();
  rule.provenance = hunk;

  bool concrete = false;
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    const bool abstracted = lhs_ok[i] && holes.count(lhs[i].text) > 0;
    if (!abstracted &&
        (lhs[i].kind == TokenKind::Identifier || lhs[i].kind == TokenKind::Operator)) {
      concrete = true;
    }
  }
  if (!concrete) return std::nullopt;
  if (literal_has_hole_syntax(rule.match) || literal_has_hole_syntax(rule.replace)) {
    return std::nullopt;
  }
  return rule;
}

std::vector<AtomicRule> infer_ruleset(std::string_view source, std::string_view migrated,
                                      const std::set<std::string>& denylist,
                                      const LanguageProfile& profile) {
  std::vector<AtomicRule> rules;
  for (const auto& hunk : diff_hunks(source, migrated)) {
    for (const auto& sub : align_hunk(hunk, profile)) {
      if (auto r = anti_unify(sub, denylist, profile)) rules.push_back(std::move(*r));
    }
  }
  return rules;
}

std::vector<AtomicRule> infer_ruleset(std::string_view source, std::string_view migrated,
                                      const LanguageProfile& profile) {
  auto deny = imported_names(source, profile);
  deny.merge(imported_names(migrated, profile));
  return infer_ruleset(source, migrated, deny, profile);
}

RuleGraph ruleset_to_graph(const std::vector<AtomicRule>& rules) {
  RuleGraph graph;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    graph.add_rule(Rule{"rule_" + std::to_string(i + 1), rules[i].match, rules[i].replace, true});
  }
  return graph;
}

}  // namespace rulesynth

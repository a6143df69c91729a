#include <algorithm>
#include <optional>

#include "rulesynth/tokentree.hpp"

namespace rulesynth {
namespace {

struct LogicalLine {
  std::size_t begin = 0;       // first byte of the line (column 0)
  std::size_t content_end = 0; // end of the last significant token
  int indent = 0;
  bool blank = true;
  std::vector<const Token*> significant;  // non-space, non-comment tokens
};

int indent_width(std::string_view ws, int tab_width) {
  int col = 0;
  for (char c : ws) {
    if (c == '\t') {
      col = (col / tab_width + 1) * tab_width;
    } else {
      ++col;
    }
  }
  return col;
}

// Splits the token stream at newlines outside any group, so that bracketed
// continuation lines belong to the statement that opened them.
std::vector<LogicalLine> logical_lines(const std::vector<Token>& tokens, int tab_width) {
  std::vector<LogicalLine> lines;
  LogicalLine current;
  bool at_line_start = true;
  int depth = 0;
  for (const auto& tok : tokens) {
    if (tok.kind == TokenKind::Newline && depth == 0) {
      lines.push_back(std::move(current));
      current = LogicalLine{};
      current.begin = tok.span.end;
      at_line_start = true;
      continue;
    }
    if (at_line_start && tok.kind == TokenKind::Whitespace) {
      current.indent = indent_width(tok.text, tab_width);
      at_line_start = false;
      continue;
    }
    at_line_start = false;
    if (tok.kind == TokenKind::Punctuation) {
      if (is_open_delimiter(tok.text)) ++depth;
      if (is_close_delimiter(tok.text)) depth = std::max(0, depth - 1);
    }
    if (tok.is_space() || tok.kind == TokenKind::Comment) continue;
    current.blank = false;
    current.content_end = tok.span.end;
    current.significant.push_back(&tok);
  }
  lines.push_back(std::move(current));
  return lines;
}

bool is_header(const LogicalLine& line, const ScopeFinder& finder) {
  const auto& sig = line.significant;
  std::size_t i = 0;
  while (i < sig.size() &&
         std::find(finder.prefixes.begin(), finder.prefixes.end(), sig[i]->text) !=
             finder.prefixes.end()) {
    ++i;
  }
  if (i + 1 >= sig.size()) return false;
  if (std::find(finder.keywords.begin(), finder.keywords.end(), sig[i]->text) ==
      finder.keywords.end()) {
    return false;
  }
  return sig[i + 1]->kind == TokenKind::Identifier;
}

}  // namespace

Span enclosing_scope(const TokenTree& tree, Span span, ScopeLabel label,
                     const LanguageProfile& profile) {
  const Span whole{0, tree.source_size};
  if (label == ScopeLabel::Global || label == ScopeLabel::File) return whole;
  auto finder_it = profile.scope_finders.find(label);
  if (finder_it == profile.scope_finders.end()) return whole;

  const auto tokens = flatten(tree);
  const auto lines = logical_lines(tokens, profile.tab_width);

  std::optional<Span> best;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].blank || !is_header(lines[i], finder_it->second)) continue;
    std::size_t end = lines[i].content_end;
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      if (lines[j].blank) continue;
      if (lines[j].indent <= lines[i].indent) break;
      end = lines[j].content_end;
    }
    Span block{lines[i].begin, end};
    if (!block.contains(span)) continue;
    if (!best || best->contains(block)) best = block;
  }
  return best.value_or(whole);
}

}  // namespace rulesynth

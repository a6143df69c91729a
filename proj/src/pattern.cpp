#include "rulesynth/pattern.hpp"

#include <algorithm>
#include <cctype>

#include "rulesynth/error.hpp"

namespace rulesynth {

std::vector<std::string> Pattern::hole_names() const {
  std::vector<std::string> names;
  for (const auto& seg : segments_) {
    if (const auto* h = std::get_if<Hole>(&seg)) {
      if (std::find(names.begin(), names.end(), h->name) == names.end()) names.push_back(h->name);
    }
  }
  return names;
}

bool Pattern::has_hole(std::string_view name) const {
  return std::any_of(segments_.begin(), segments_.end(), [&](const Segment& seg) {
    const auto* h = std::get_if<Hole>(&seg);
    return h != nullptr && h->name == name;
  });
}

std::string Pattern::to_string() const {
  std::string out;
  for (const auto& seg : segments_) {
    if (const auto* lit = std::get_if<Literal>(&seg)) {
      out += lit->text;
    } else {
      const auto& h = std::get<Hole>(seg);
      out += ":[" + h.name + (h.mode == HoleMode::Plus ? "+" : "") + "]";
    }
  }
  return out;
}

namespace {

bool is_space_char(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool valid_hole_name(std::string_view name) {
  if (name.empty()) return false;
  auto first = static_cast<unsigned char>(name[0]);
  if (!(std::isalpha(first) || first == '_')) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || u == '_';
  });
}

void push_literal(std::vector<Segment>& segs, std::string text) {
  if (text.empty()) return;
  if (!segs.empty()) {
    if (auto* lit = std::get_if<Literal>(&segs.back())) {
      lit->text += text;
      return;
    }
  }
  segs.emplace_back(Literal{std::move(text)});
}

std::vector<Segment> parse_segments(std::string_view text) {
  std::vector<Segment> segs;
  std::string literal;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, 2, ":[") != 0) {
      literal += text[i++];
      continue;
    }
    auto close = text.find(']', i + 2);
    if (close == std::string_view::npos) {
      throw Error(ErrorCode::MalformedHole,
                  "unclosed ':[' at offset " + std::to_string(i), std::string(text.substr(i)), i);
    }
    std::string_view body = text.substr(i + 2, close - i - 2);
    HoleMode mode = HoleMode::Optional;
    if (!body.empty() && body.back() == '+') {
      mode = HoleMode::Plus;
      body.remove_suffix(1);
    }
    if (!valid_hole_name(body)) {
      throw Error(ErrorCode::MalformedHole,
                  "invalid hole name '" + std::string(body) + "' at offset " + std::to_string(i),
                  std::string(body), i);
    }
    push_literal(segs, std::move(literal));
    literal.clear();
    segs.emplace_back(Hole{std::string(body), mode});
    i = close + 1;
  }
  push_literal(segs, std::move(literal));
  return segs;
}

}  // namespace

Pattern parse_pattern(std::string_view text) {
  auto segs = parse_segments(text);
  bool any_hole = false;
  bool any_text = false;
  for (const auto& seg : segs) {
    if (const auto* lit = std::get_if<Literal>(&seg)) {
      any_text = any_text || std::any_of(lit->text.begin(), lit->text.end(),
                                         [](char c) { return !is_space_char(c); });
    } else {
      any_hole = true;
    }
  }
  if (!any_hole && !any_text) throw Error(ErrorCode::EmptyPattern, "pattern is empty");
  if (!any_text) {
    throw Error(ErrorCode::AllHolesPattern,
                "match pattern consists solely of holes: '" + std::string(text) + "'",
                std::string(text));
  }
  return Pattern(std::move(segs));
}

Pattern parse_replacement(std::string_view text) { return Pattern(parse_segments(text)); }

Pattern bind_holes(const Pattern& pattern, const Bindings& bindings) {
  std::vector<Segment> segs;
  for (const auto& seg : pattern.segments()) {
    if (const auto* h = std::get_if<Hole>(&seg)) {
      auto it = bindings.find(h->name);
      if (it != bindings.end()) {
        push_literal(segs, it->second.text);
        continue;
      }
      segs.push_back(seg);
    } else {
      push_literal(segs, std::get<Literal>(seg).text);
    }
  }
  return Pattern(std::move(segs));
}

// ---------------------------------------------------------------------------
// Matching

namespace {

struct LiteralPiece {
  bool space = false;
  bool newline = false;  // only meaningful for space pieces
  std::string text;      // only meaningful for text pieces
};

struct Element {
  bool is_hole = false;
  std::vector<LiteralPiece> pieces;
  Hole hole;
};

std::vector<Element> compile(const Pattern& pattern) {
  std::vector<Element> elems;
  for (const auto& seg : pattern.segments()) {
    if (const auto* h = std::get_if<Hole>(&seg)) {
      Element e;
      e.is_hole = true;
      e.hole = *h;
      elems.push_back(std::move(e));
      continue;
    }
    const auto& text = std::get<Literal>(seg).text;
    Element e;
    std::size_t i = 0;
    while (i < text.size()) {
      LiteralPiece piece;
      if (is_space_char(text[i])) {
        piece.space = true;
        while (i < text.size() && is_space_char(text[i])) {
          piece.newline = piece.newline || text[i] == '\n';
          ++i;
        }
      } else {
        while (i < text.size() && !is_space_char(text[i])) piece.text += text[i++];
      }
      e.pieces.push_back(std::move(piece));
    }
    if (!e.pieces.empty()) elems.push_back(std::move(e));
  }
  return elems;
}

class Matcher {
public:
  Matcher(const Pattern& pattern, const TokenTree& tree)
      : elems_(compile(pattern)), tokens_(flatten(tree)) {
    depth_.reserve(tokens_.size() + 1);
    int depth = 0;
    for (const auto& t : tokens_) {
      depth_.push_back(depth);
      if (t.kind == TokenKind::Punctuation) {
        if (is_open_delimiter(t.text)) ++depth;
        if (is_close_delimiter(t.text)) --depth;
      }
    }
    depth_.push_back(depth);
  }

  std::optional<Match> first(std::size_t from, Span region) {
    std::size_t lo = tokens_.size();
    std::size_t hi = 0;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].span.begin >= region.begin && tokens_[i].span.end <= region.end) {
        lo = std::min(lo, i);
        hi = i + 1;
      }
    }
    if (lo >= hi) return std::nullopt;
    limit_ = hi;
    const bool leading_space =
        !elems_.empty() && !elems_[0].is_hole && elems_[0].pieces.front().space;
    for (std::size_t start = lo; start < hi; ++start) {
      if (tokens_[start].span.begin < from) continue;
      if (tokens_[start].is_space() &&
          (!leading_space || (start > 0 && tokens_[start - 1].is_space()))) {
        continue;
      }
      Bindings bindings;
      std::size_t end = 0;
      if (match_from(0, start, bindings, end)) {
        Span site{tokens_[start].span.begin,
                  end > start ? tokens_[end - 1].span.end : tokens_[start].span.begin};
        return Match{site, std::move(bindings)};
      }
    }
    return std::nullopt;
  }

  std::vector<Match> all(Span region) {
    std::vector<Match> out;
    std::size_t from = region.begin;
    while (auto m = first(from, region)) {
      from = m->site.end > m->site.begin ? m->site.end : m->site.begin + 1;
      out.push_back(std::move(*m));
    }
    return out;
  }

private:
  std::string text_of(std::size_t i, std::size_t j) const {
    std::string out;
    for (std::size_t k = i; k < j; ++k) out += tokens_[k].text;
    return out;
  }

  // Deterministic: a literal either matches at `i` or does not.
  std::optional<std::size_t> match_literal(const Element& e, std::size_t i) const {
    std::size_t offset = 0;  // offset inside tokens_[i]
    for (const auto& piece : e.pieces) {
      if (piece.space) {
        if (offset != 0 || i >= limit_ || !tokens_[i].is_space()) return std::nullopt;
        bool saw_newline = false;
        bool saw_top_newline = false;
        while (i < limit_ && tokens_[i].is_space()) {
          if (tokens_[i].kind == TokenKind::Newline) {
            saw_newline = true;
            saw_top_newline = saw_top_newline || depth_[i] == 0;
          }
          ++i;
        }
        if (piece.newline ? !saw_newline : saw_top_newline) return std::nullopt;
        continue;
      }
      for (char c : piece.text) {
        if (i >= limit_ || tokens_[i].is_space()) return std::nullopt;
        if (tokens_[i].text[offset] != c) return std::nullopt;
        if (++offset == tokens_[i].text.size()) {
          ++i;
          offset = 0;
        }
      }
    }
    if (offset != 0) return std::nullopt;
    return i;
  }

  bool match_from(std::size_t elem, std::size_t i, Bindings& bindings, std::size_t& end) {
    if (elem == elems_.size()) {
      end = i;
      return true;
    }
    const Element& e = elems_[elem];
    if (!e.is_hole) {
      auto next = match_literal(e, i);
      return next && match_from(elem + 1, *next, bindings, end);
    }

    auto prior = bindings.find(e.hole.name);
    const std::string* required = prior != bindings.end() ? &prior->second.text : nullptr;

    int rel = 0;
    bool has_content = false;
    std::string text;
    for (std::size_t j = i;; ++j) {
      // Candidate binding is tokens [i, j).
      bool acceptable = rel == 0 && (e.hole.mode == HoleMode::Optional || has_content);
      if (required != nullptr) acceptable = acceptable && text == *required;
      if (acceptable) {
        bool inserted = false;
        if (required == nullptr) {
          std::size_t at = i < tokens_.size() ? tokens_[i].span.begin
                           : tokens_.empty()  ? 0
                                              : tokens_.back().span.end;
          Span span{at, j > i ? tokens_[j - 1].span.end : at};
          bindings[e.hole.name] = BoundText{text, span};
          inserted = true;
        }
        if (match_from(elem + 1, j, bindings, end)) return true;
        if (inserted) bindings.erase(e.hole.name);
      }
      if (required != nullptr && text.size() >= required->size()) return false;
      if (j >= limit_) return false;
      const Token& t = tokens_[j];
      if (t.kind == TokenKind::Newline && depth_[j] == 0) return false;
      if (t.kind == TokenKind::Punctuation) {
        if (is_open_delimiter(t.text)) ++rel;
        if (is_close_delimiter(t.text) && --rel < 0) return false;
      }
      has_content = has_content || !t.is_space();
      text += t.text;
    }
  }

  std::vector<Element> elems_;
  std::vector<Token> tokens_;
  std::vector<int> depth_;
  std::size_t limit_ = 0;
};

}  // namespace

std::vector<Match> find_matches(const Pattern& pattern, const TokenTree& tree,
                                std::optional<Span> region) {
  Matcher matcher(pattern, tree);
  return matcher.all(region.value_or(Span{0, tree.source_size}));
}

std::optional<Match> find_first_match(const Pattern& pattern, const TokenTree& tree,
                                      std::size_t from, Span region) {
  Matcher matcher(pattern, tree);
  return matcher.first(from, region);
}

std::string substitute_indented(const Pattern& pattern, const Bindings& bindings,
                                std::string_view indent) {
  std::string out;
  // Indentation is emitted lazily so blank lines stay blank.
  bool pending = false;
  auto emit = [&](std::string_view text, bool from_literal) {
    for (char c : text) {
      if (pending && c != '\n') out += indent;
      pending = false;
      out += c;
      if (c == '\n' && from_literal) pending = true;
    }
  };
  for (const auto& seg : pattern.segments()) {
    if (const auto* lit = std::get_if<Literal>(&seg)) {
      emit(lit->text, true);
      continue;
    }
    const auto& h = std::get<Hole>(seg);
    auto it = bindings.find(h.name);
    if (it != bindings.end()) {
      emit(it->second.text, false);
    } else if (h.mode == HoleMode::Plus) {
      throw Error(ErrorCode::UnboundHole, "replacement uses unbound hole :[" + h.name + "+]",
                  h.name);
    }
  }
  return out;
}

std::string substitute(const Pattern& pattern, const Bindings& bindings) {
  return substitute_indented(pattern, bindings, {});
}

std::string line_indent(std::string_view source, std::size_t offset) {
  offset = std::min(offset, source.size());
  std::size_t start = 0;
  if (offset > 0) {
    auto nl = source.rfind('\n', offset - 1);
    start = nl == std::string_view::npos ? 0 : nl + 1;
  }
  std::size_t end = start;
  while (end < source.size() && (source[end] == ' ' || source[end] == '\t')) ++end;
  return std::string(source.substr(start, end - start));
}

RewriteResult apply_rewrite(const Pattern& match, const Pattern& replace, std::string_view source,
                            const LanguageProfile& profile, std::optional<Span> region) {
  auto tree = lex(source, profile);
  auto matches = find_matches(match, tree, region);
  RewriteResult result;
  std::size_t cursor = 0;
  for (const auto& m : matches) {
    result.text.append(source.substr(cursor, m.site.begin - cursor));
    auto replacement =
        substitute_indented(replace, m.bindings, line_indent(source, m.site.begin));
    std::size_t at = result.text.size();
    result.text += replacement;
    result.sites.push_back(Span{at, result.text.size()});
    cursor = m.site.end;
    ++result.count;
  }
  result.text.append(source.substr(cursor));
  return result;
}

}  // namespace rulesynth

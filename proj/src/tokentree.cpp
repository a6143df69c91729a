#include "rulesynth/tokentree.hpp"

#include <algorithm>
#include <cctype>

#include "rulesynth/error.hpp"

namespace rulesynth {

std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::Identifier: return "identifier";
    case TokenKind::Number: return "number";
    case TokenKind::String: return "string";
    case TokenKind::Comment: return "comment";
    case TokenKind::Operator: return "operator";
    case TokenKind::Punctuation: return "punctuation";
    case TokenKind::Whitespace: return "whitespace";
    case TokenKind::Newline: return "newline";
  }
  return "unknown";
}

bool is_open_delimiter(std::string_view text) {
  return text == "(" || text == "[" || text == "{";
}

bool is_close_delimiter(std::string_view text) {
  return text == ")" || text == "]" || text == "}";
}

namespace {

bool is_ident_start(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c >= 0x80;
}

bool is_ident_char(unsigned char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

bool is_inline_space(char c) { return c == ' ' || c == '\t' || c == '\f' || c == '\v'; }

bool is_punctuation(char c) {
  switch (c) {
    case '(': case ')': case '[': case ']': case '{': case '}':
    case ',': case ':': case ';': case '.': case '`': case '\\':
      return true;
    default:
      return false;
  }
}

bool starts_with_at(std::string_view s, std::size_t pos, std::string_view prefix) {
  return !prefix.empty() && s.compare(pos, prefix.size(), prefix) == 0;
}

char closer_for(char open) {
  switch (open) {
    case '(': return ')';
    case '[': return ']';
    default: return '}';
  }
}

class Lexer {
public:
  Lexer(std::string_view src, const LanguageProfile& profile) : src_(src), profile_(profile) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (pos_ < src_.size()) out.push_back(next());
    return out;
  }

private:
  Token make(TokenKind kind, std::size_t begin) {
    return Token{kind, std::string(src_.substr(begin, pos_ - begin)), Span{begin, pos_}};
  }

  // Length of the string delimiter opening at `at`, or 0.
  std::size_t delimiter_at(std::size_t at, std::string& delim) const {
    for (const auto& d : profile_.string_delimiters) {
      if (starts_with_at(src_, at, d)) {
        delim = d;
        return d.size();
      }
    }
    return 0;
  }

  void scan_string_body(const std::string& delim) {
    const bool single_line = delim.size() == 1;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\\' && pos_ + 1 < src_.size()) {
        pos_ += 2;
        continue;
      }
      if (starts_with_at(src_, pos_, delim)) {
        pos_ += delim.size();
        return;
      }
      // Unterminated single-line strings stop at the line end.
      if (single_line && c == '\n') return;
      ++pos_;
    }
  }

  Token next() {
    const std::size_t begin = pos_;
    const char c = src_[pos_];

    if (c == '\n') {
      ++pos_;
      return make(TokenKind::Newline, begin);
    }
    if (c == '\r' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') {
      pos_ += 2;
      return make(TokenKind::Newline, begin);
    }
    if (is_inline_space(c) || c == '\r') {
      while (pos_ < src_.size() &&
             (is_inline_space(src_[pos_]) ||
              (src_[pos_] == '\r' && !(pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n')))) {
        ++pos_;
      }
      return make(TokenKind::Whitespace, begin);
    }
    if (!profile_.line_comment.empty() && starts_with_at(src_, pos_, profile_.line_comment)) {
      while (pos_ < src_.size() && src_[pos_] != '\n' &&
             !(src_[pos_] == '\r' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n')) {
        ++pos_;
      }
      return make(TokenKind::Comment, begin);
    }
    if (profile_.block_comment && starts_with_at(src_, pos_, profile_.block_comment->first)) {
      const auto& [open, close] = *profile_.block_comment;
      auto end = src_.find(close, pos_ + open.size());
      pos_ = end == std::string_view::npos ? src_.size() : end + close.size();
      return make(TokenKind::Comment, begin);
    }

    std::string delim;
    if (delimiter_at(pos_, delim) > 0) {
      pos_ += delim.size();
      scan_string_body(delim);
      return make(TokenKind::String, begin);
    }

    if (is_ident_start(static_cast<unsigned char>(c))) {
      while (pos_ < src_.size() && is_ident_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      // String prefixes such as r"..." or b'...'.
      std::string word(src_.substr(begin, pos_ - begin));
      std::string lowered = word;
      std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      if (std::find(profile_.string_prefixes.begin(), profile_.string_prefixes.end(), lowered) !=
              profile_.string_prefixes.end() &&
          delimiter_at(pos_, delim) > 0) {
        pos_ += delim.size();
        scan_string_body(delim);
        return make(TokenKind::String, begin);
      }
      return make(TokenKind::Identifier, begin);
    }

    if (is_digit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < src_.size() && is_digit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      ++pos_;
      while (pos_ < src_.size()) {
        char d = src_[pos_];
        if (is_ident_char(static_cast<unsigned char>(d))) {
          ++pos_;
          if ((d == 'e' || d == 'E') && pos_ < src_.size() &&
              (src_[pos_] == '+' || src_[pos_] == '-') && pos_ + 1 < src_.size() &&
              is_digit(static_cast<unsigned char>(src_[pos_ + 1]))) {
            ++pos_;
          }
        } else if (d == '.' && !(pos_ + 1 < src_.size() && src_[pos_ + 1] == '.')) {
          ++pos_;
        } else {
          break;
        }
      }
      return make(TokenKind::Number, begin);
    }

    for (const auto& op : profile_.operators) {
      if (starts_with_at(src_, pos_, op)) {
        pos_ += op.size();
        return make(TokenKind::Operator, begin);
      }
    }
    ++pos_;
    return make(is_punctuation(c) ? TokenKind::Punctuation : TokenKind::Operator, begin);
  }

  std::string_view src_;
  const LanguageProfile& profile_;
  std::size_t pos_ = 0;
};

bool is_delimiter_token(const Token& t) {
  return t.kind == TokenKind::Punctuation && t.text.size() == 1 &&
         (is_open_delimiter(t.text) || is_close_delimiter(t.text));
}

void flatten_into(const std::vector<Node>& nodes, std::vector<Token>& out) {
  for (const auto& node : nodes) {
    if (node.is_group()) {
      const auto& g = node.group();
      out.push_back(g.open);
      flatten_into(g.children, out);
      out.push_back(g.close);
    } else {
      out.push_back(node.token());
    }
  }
}

std::size_t depth_of(const std::vector<Node>& nodes) {
  std::size_t best = 0;
  for (const auto& node : nodes) {
    if (node.is_group()) best = std::max(best, 1 + depth_of(node.group().children));
  }
  return best;
}

}  // namespace

std::vector<Token> tokenize(std::string_view source, const LanguageProfile& profile) {
  return Lexer(source, profile).run();
}

TokenTree lex(std::string_view source, const LanguageProfile& profile) {
  auto tokens = tokenize(source, profile);

  struct Frame {
    Token open;
    std::vector<Node> children;
  };
  std::vector<Frame> stack;
  std::vector<Node> root;

  for (auto& tok : tokens) {
    auto& sink = stack.empty() ? root : stack.back().children;
    if (!is_delimiter_token(tok)) {
      sink.push_back(Node{std::move(tok)});
      continue;
    }
    if (is_open_delimiter(tok.text)) {
      stack.push_back(Frame{std::move(tok), {}});
      continue;
    }
    if (stack.empty() || closer_for(stack.back().open.text[0]) != tok.text[0]) {
      throw Error(ErrorCode::UnbalancedDelimiter,
                  "unbalanced '" + tok.text + "' at offset " + std::to_string(tok.span.begin),
                  tok.text, tok.span.begin);
    }
    Frame frame = std::move(stack.back());
    stack.pop_back();
    auto& parent = stack.empty() ? root : stack.back().children;
    parent.push_back(Node{Group{std::move(frame.open), std::move(frame.children), std::move(tok)}});
  }
  if (!stack.empty()) {
    const Token& open = stack.back().open;
    throw Error(ErrorCode::UnbalancedDelimiter,
                "unclosed '" + open.text + "' at offset " + std::to_string(open.span.begin),
                open.text, open.span.begin);
  }
  return TokenTree{std::move(root), source.size()};
}

std::vector<Token> flatten(const TokenTree& tree) {
  std::vector<Token> out;
  flatten_into(tree.nodes, out);
  return out;
}

std::string render(const std::vector<Token>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += t.text;
  return out;
}

std::size_t max_depth(const TokenTree& tree) { return depth_of(tree.nodes); }

}  // namespace rulesynth

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rulesynth/profile.hpp"

namespace rulesynth {

/// Half-open byte range [begin, end) into a source text.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  [[nodiscard]] std::size_t size() const { return end - begin; }
  [[nodiscard]] bool contains(const Span& other) const {
    return begin <= other.begin && other.end <= end;
  }
  friend bool operator==(const Span&, const Span&) = default;
};

enum class TokenKind {
  Identifier,
  Number,
  String,
  Comment,
  Operator,
  Punctuation,
  Whitespace,
  Newline,
};

std::string_view to_string(TokenKind kind);

struct Token {
  TokenKind kind;
  std::string text;
  Span span;

  [[nodiscard]] bool is_space() const {
    return kind == TokenKind::Whitespace || kind == TokenKind::Newline;
  }
  friend bool operator==(const Token&, const Token&) = default;
};

struct Node;

/// A balanced delimiter pair: (), [] or {}.
struct Group {
  Token open;
  std::vector<Node> children;
  Token close;
};

struct Node {
  std::variant<Token, Group> value;

  [[nodiscard]] bool is_group() const { return std::holds_alternative<Group>(value); }
  [[nodiscard]] const Token& token() const { return std::get<Token>(value); }
  [[nodiscard]] const Group& group() const { return std::get<Group>(value); }
};

struct TokenTree {
  std::vector<Node> nodes;
  std::size_t source_size = 0;
};

/// Lossless lexing into a balanced tree. Strings and comments are atomic and
/// never take part in balancing. Throws Error(UnbalancedDelimiter) carrying
/// the offset of the unmatched delimiter.
TokenTree lex(std::string_view source, const LanguageProfile& profile);

/// Flat lexing without the balance check; used on source fragments such as
/// diff hunk lines that may legitimately leave a group open.
std::vector<Token> tokenize(std::string_view source, const LanguageProfile& profile);

std::vector<Token> flatten(const TokenTree& tree);

/// Concatenation of the token texts, i.e. the original source.
std::string render(const std::vector<Token>& tokens);

/// Deepest group nesting in the tree (0 for a tree without groups).
std::size_t max_depth(const TokenTree& tree);

/// Byte range of the innermost `label` scope enclosing `span`. Global and
/// File resolve to the whole source; Class/Function fall back to the whole
/// source when no enclosing definition exists.
Span enclosing_scope(const TokenTree& tree, Span span, ScopeLabel label,
                     const LanguageProfile& profile);

bool is_open_delimiter(std::string_view text);
bool is_close_delimiter(std::string_view text);

}  // namespace rulesynth

#include <gtest/gtest.h>

#include "../support/matcher_domain.hpp"
#include "rulesynth/error.hpp"
#include "rulesynth/pattern.hpp"

namespace rulesynth {
namespace {

const LanguageProfile& py() { return LanguageProfile::python(); }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoError;
}

TEST(ParsePattern, LiteralsAndPlusHole) {
  auto p = parse_pattern("foo(:[args+])");
  std::vector<Segment> want = {Literal{"foo("}, Hole{"args", HoleMode::Plus}, Literal{")"}};
  EXPECT_EQ(p.segments(), want);
}

TEST(ParsePattern, RepeatedHoleName) {
  auto p = parse_pattern(":[x] = :[x]");
  std::vector<Segment> want = {Hole{"x", HoleMode::Optional}, Literal{" = "},
                               Hole{"x", HoleMode::Optional}};
  EXPECT_EQ(p.segments(), want);
  EXPECT_EQ(p.hole_names(), std::vector<std::string>{"x"});
}

TEST(ParsePattern, Errors) {
  EXPECT_EQ(code_of([] { parse_pattern(":[x"); }), ErrorCode::MalformedHole);
  EXPECT_EQ(code_of([] { parse_pattern("a :[bad name] b"); }), ErrorCode::MalformedHole);
  EXPECT_EQ(code_of([] { parse_pattern(":[]x"); }), ErrorCode::MalformedHole);
  EXPECT_EQ(code_of([] { parse_pattern(""); }), ErrorCode::EmptyPattern);
  EXPECT_EQ(code_of([] { parse_pattern("  \n"); }), ErrorCode::EmptyPattern);
  EXPECT_EQ(code_of([] { parse_pattern(":[a] :[b+]"); }), ErrorCode::AllHolesPattern);
  EXPECT_NO_THROW(parse_replacement(""));
  EXPECT_NO_THROW(parse_replacement(":[a]"));
}

TEST(ParsePattern, ToStringInvertsParse) {
  for (const char* text : {"foo(:[args+])", ":[x] = :[y].encrypt(:[z])\n:[x]", "plain"}) {
    EXPECT_EQ(parse_pattern(text).to_string(), text);
  }
}

TEST(FindMatches, PlusHoleBindsCallArguments) {
  auto tree = lex("foo(1,2,3)", py());
  auto ms = find_matches(parse_pattern("foo(:[args+])"), tree);
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].bindings.at("args").text, "1,2,3");
  EXPECT_EQ(ms[0].site, (Span{0, 10}));
}

TEST(FindMatches, RepeatedHoleRequiresEqualText) {
  auto p = parse_pattern(":[x] + :[x]");
  EXPECT_TRUE(find_matches(p, lex("a + b", py())).empty());
  auto ms = find_matches(p, lex("a + a", py()));
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].bindings.at("x").text, "a");
}

TEST(FindMatches, HoleFreePatternEqualToText) {
  auto ms = find_matches(parse_pattern("x = compute(1)"), lex("x = compute(1)", py()));
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_TRUE(ms[0].bindings.empty());
  EXPECT_EQ(ms[0].site, (Span{0, 14}));
}

TEST(FindMatches, WhitespaceRunsAreFlexibleButRequired) {
  auto p = parse_pattern("a = b");
  EXPECT_EQ(find_matches(p, lex("a   =\tb", py())).size(), 1u);
  EXPECT_TRUE(find_matches(p, lex("a=b", py())).empty());
  // A space run in the pattern never spans a statement boundary.
  EXPECT_TRUE(find_matches(p, lex("a =\nb", py())).empty());
  // Inside brackets newlines are ordinary whitespace.
  EXPECT_EQ(find_matches(parse_pattern("f(a, b)"), lex("f(a,\n     b)", py())).size(), 1u);
}

TEST(FindMatches, HolesNeverSplitGroupsOrCrossStatements) {
  auto tree = lex("x = f(a, (b + c))\ny = 2\n", py());
  auto ms = find_matches(parse_pattern("f(:[a], :[b])"), tree);
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].bindings.at("b").text, "(b + c)");
  // :[v] would need to swallow the newline between the statements.
  EXPECT_TRUE(find_matches(parse_pattern("x = :[v] = 2"), tree).empty());
}

TEST(FindMatches, HolesDoNotSplitStrings) {
  auto tree = lex("log(\"a, b\", c)", py());
  auto ms = find_matches(parse_pattern("log(:[m], :[rest])"), tree);
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].bindings.at("m").text, "\"a, b\"");
  EXPECT_EQ(ms[0].bindings.at("rest").text, "c");
}

TEST(FindMatches, LazyLeftmostNonOverlapping) {
  auto ms = find_matches(parse_pattern("f(:[x])"), lex("f(1) + f(f(2))", py()));
  ASSERT_EQ(ms.size(), 2u);
  EXPECT_EQ(ms[0].bindings.at("x").text, "1");
  EXPECT_EQ(ms[1].bindings.at("x").text, "f(2)");
}

TEST(FindMatches, LiteralsRespectTokenBoundaries) {
  EXPECT_TRUE(find_matches(parse_pattern("foo"), lex("foobar + barfoo", py())).empty());
  EXPECT_EQ(find_matches(parse_pattern("foo"), lex("foo.bar", py())).size(), 1u);
}

TEST(FindMatches, RegionRestrictsSites) {
  const std::string src = "f(1)\nf(2)\nf(3)\n";
  auto tree = lex(src, py());
  auto ms = find_matches(parse_pattern("f(:[x])"), tree, Span{5, 10});
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].bindings.at("x").text, "2");
}

TEST(Substitute, FillsHoles) {
  Bindings b{{"args", BoundText{"1,2,3", {}}}};
  EXPECT_EQ(substitute(parse_replacement("bar(:[args])"), b), "bar(1,2,3)");
  Bindings d{{"x3", BoundText{"data", {}}}};
  EXPECT_EQ(substitute(parse_replacement("pad(:[x3], AES.block_size)"), d),
            "pad(data, AES.block_size)");
}

TEST(Substitute, UnboundHoles) {
  EXPECT_EQ(substitute(parse_replacement("a:[opt]b"), {}), "ab");
  EXPECT_EQ(code_of([] { substitute(parse_replacement("a:[req+]b"), {}); }),
            ErrorCode::UnboundHole);
}

TEST(Substitute, MatchRoundTrip) {
  const std::string src = "result = client.get(url, timeout=5)";
  auto p = parse_pattern(":[lhs] = :[obj].get(:[args+])");
  auto ms = find_matches(p, lex(src, py()));
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(substitute(p, ms[0].bindings), src.substr(ms[0].site.begin, ms[0].site.size()));
}

TEST(ApplyRewrite, FooToBar) {
  auto r = apply_rewrite(parse_pattern("foo(:[args+])"), parse_replacement("bar(:[args])"),
                         "x = foo(1,2,3)\ny = foo(4)", py());
  EXPECT_EQ(r.text, "x = bar(1,2,3)\ny = bar(4)");
  EXPECT_EQ(r.count, 2u);
}

TEST(ApplyRewrite, IdentityRewrite) {
  const std::string src = "a = f(1)\nb = f(2)\n";
  auto p = parse_pattern("f(:[x])");
  auto r = apply_rewrite(p, parse_replacement(p.to_string()), src, py());
  EXPECT_EQ(r.text, src);
  EXPECT_EQ(r.count, 2u);
}

TEST(ApplyRewrite, InferredEncryptRuleReindents) {
  auto match = parse_pattern(":[x1] = :[x2].encrypt(:[x3])");
  auto replace = parse_replacement(
      "padded_data = pad(:[x3], AES.block_size)\n:[x1] = iv + :[x2].encrypt(padded_data)");
  auto r = apply_rewrite(match, replace, "encrypted_data = fernet.encrypt(data)", py());
  EXPECT_EQ(r.text,
            "padded_data = pad(data, AES.block_size)\n"
            "encrypted_data = iv + fernet.encrypt(padded_data)");
  auto nested = apply_rewrite(match, replace,
                              "def f(data):\n    encrypted_data = fernet.encrypt(data)\n", py());
  EXPECT_EQ(nested.text,
            "def f(data):\n    padded_data = pad(data, AES.block_size)\n"
            "    encrypted_data = iv + fernet.encrypt(padded_data)\n");
}

TEST(ApplyRewrite, OutputStaysBalanced) {
  const std::string src = "x = foo(a, (b))\nprint(foo([1]))\n";
  auto r = apply_rewrite(parse_pattern("foo(:[a+])"), parse_replacement("bar([:[a]])"), src, py());
  EXPECT_NO_THROW(lex(r.text, py()));
  EXPECT_EQ(r.count, 2u);
}

TEST(ApplyRewrite, Deterministic) {
  const std::string src = "a(b(c(d)))\n";
  auto p = parse_pattern(":[f](:[x])");
  auto q = parse_replacement(":[x]");
  EXPECT_EQ(apply_rewrite(p, q, src, py()).text, apply_rewrite(p, q, src, py()).text);
}

// Small slice of the exhaustive comparison run by the acceptance suite.
TEST(FindMatches, AgreesWithBruteForceOracle) {
  auto patterns = testing::enumerate_patterns(3);
  auto sources = testing::enumerate_sources(4);
  std::size_t compared = 0;
  for (const auto& src : sources) {
    TokenTree tree;
    try {
      tree = lex(src, py());
    } catch (const Error&) {
      continue;
    }
    for (const auto& p : patterns) {
      auto diff = testing::compare_on(p, tree);
      ASSERT_TRUE(diff.empty()) << diff;
      ++compared;
    }
  }
  EXPECT_GT(compared, 100000u);
}

}  // namespace
}  // namespace rulesynth

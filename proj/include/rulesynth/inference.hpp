#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rulesynth/pattern.hpp"
#include "rulesynth/profile.hpp"
#include "rulesynth/rulegraph.hpp"

namespace rulesynth {

/// Lines deleted from and added to one region of a file. Line indices are
/// zero-based; both ranges are half-open.
struct DiffHunk {
  std::vector<std::string> deleted;
  std::vector<std::string> added;
  std::size_t source_begin = 0;
  std::size_t source_end = 0;
  std::size_t target_begin = 0;
  std::size_t target_end = 0;
  friend bool operator==(const DiffHunk&, const DiffHunk&) = default;
};

struct AtomicRule {
  Pattern match;
  Pattern replace;
  std::size_t hole_count = 0;
  DiffHunk provenance;
};

/// Splits text into lines without their terminators. A trailing newline
/// does not produce an empty final line.
std::vector<std::string> split_lines(std::string_view text);

/// Line-level LCS diff; maximal runs of non-equal lines form one hunk.
std::vector<DiffHunk> diff_hunks(std::string_view source, std::string_view migrated);

/// Splits a hunk into line-aligned sub-hunks: each deleted line is paired
/// with its most similar added line (monotone alignment), and unpaired lines
/// join the next pair.
std::vector<DiffHunk> align_hunk(const DiffHunk& hunk, const LanguageProfile& profile);

/// Names bound by import statements (`import a.b` binds `a`, `from m import
/// n as k` binds `k`).
std::set<std::string> imported_names(std::string_view source, const LanguageProfile& profile);

/// Abstracts identifiers and literals shared by both sides into holes
/// x1, x2, ... Returns nothing for add-only hunks and for results with no
/// concrete identifier or operator left in the match pattern.
std::optional<AtomicRule> anti_unify(const DiffHunk& hunk, const std::set<std::string>& denylist,
                                     const LanguageProfile& profile = LanguageProfile::python());

/// The initial ruleset: anti_unify over every aligned sub-hunk, in order.
std::vector<AtomicRule> infer_ruleset(std::string_view source, std::string_view migrated,
                                      const std::set<std::string>& denylist,
                                      const LanguageProfile& profile = LanguageProfile::python());

/// Same, with the denylist taken from the imports of both sides.
std::vector<AtomicRule> infer_ruleset(std::string_view source, std::string_view migrated,
                                      const LanguageProfile& profile = LanguageProfile::python());

/// Rule file holding every rule as a seed (named rule_1, rule_2, ...) and no edges.
RuleGraph ruleset_to_graph(const std::vector<AtomicRule>& rules);

}  // namespace rulesynth

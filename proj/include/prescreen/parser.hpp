#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace prescreen::parser {

// ---------------------------------------------------------------------------
// Extraction of structured scores from free-text model replies.
//
// The rule set is the normative contract the default prompt templates are
// written against: anchored answer lines ("Likelihood of Ongoing Mental
// Health Disorder: N/7", "Estimated PHQ-8 Score: a+...+h=T", "Score: k",
// agree/disagree phrasing). Rules are tried in a fixed order and the rule
// order is versioned so recorded fixtures stay stable. A reply that matches
// a rule but fails validation (range, arithmetic) is NA with a diagnostic;
// we never silently correct inconsistent arithmetic.
// ---------------------------------------------------------------------------

struct RuleSet {
  std::string version = "ruleset-v1";
  // Secondary rule mapping ten English number words ("seven out of 7").
  // Off by default to keep fixture parses stable.
  bool word_numbers = false;

  static const RuleSet& v1();
};

template <typename V>
struct ParseOutcome {
  std::optional<V> value;
  std::optional<std::string> matched_rule;
  std::vector<std::string> diagnostics;

  bool is_na() const { return !value.has_value(); }
};

struct Phq8Total {
  int total = 0;  // 0..24
  std::optional<std::array<int, 8>> addends;  // present only for 8-addend sums
};

struct ItemBreakdown {
  std::array<int, 8> item_scores{};  // PHQ-8 item order, each 0..3
  int total = 0;                     // == sum of item_scores
};

enum class verdict { agree, disagree, unclear };

const char* verdict_str(verdict v) noexcept;
std::optional<verdict> verdict_from_str(const std::string& s) noexcept;

struct VerdictResult {
  verdict decision = verdict::unclear;
  std::optional<int> revised_total;  // 0..24
};

// Removes markdown emphasis runs (*, **, __) and HTML bold tags so that
// decorated score tokens match the same rules as plain ones.
std::string strip_emphasis(std::string_view text);

// Splits a (stripped) reply at "Participant <id>" headers. Each expected id
// maps to the text from its header to the next header or end of reply; ids
// without a header are absent from the result.
std::map<int, std::string> segment_by_participant(const std::string& stripped,
                                                  const std::vector<int>& expected_ids);

// Task 1: one 1..7 likelihood per expected participant; the last anchored
// "N/7" in a participant's segment wins. Ids absent from the reply are NA.
std::map<int, ParseOutcome<int>> parse_likelihood(const std::string& reply,
                                                  const std::vector<int>& expected_ids,
                                                  const RuleSet& rules = RuleSet::v1());

// Stage 1: anchored sum expression first ("a+b+...+h=T", addends 0..3 and
// recomputed sum must equal T), then anchored bare integer 0..24.
ParseOutcome<Phq8Total> parse_phq8_total(const std::string& reply,
                                         const RuleSet& rules = RuleSet::v1());

// Stage 2: the closing 8-addend total expression is authoritative; falls back
// to exactly eight per-item "Score: k" lines.
ParseOutcome<ItemBreakdown> parse_item_breakdown(const std::string& reply,
                                                 const RuleSet& rules = RuleSet::v1());

// Stage 3: negation-aware agree/disagree with last-phrase-wins; the revised
// total comes from "revised PHQ-8 score of T" or the nearest valid sum
// expression after the verdict.
ParseOutcome<VerdictResult> parse_verdict(const std::string& reply,
                                          const RuleSet& rules = RuleSet::v1());

}  // namespace prescreen::parser

#include "prescreen/parser.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <regex>

namespace prescreen::parser {

namespace {

const std::regex kParticipantHeader{R"(Participant\s+(\d+)\s*:?)",
                                    std::regex::icase};
// Anchored likelihood line; the value sits directly before "/7".
const std::regex kLikelihoodAnchored{R"(likelihood[^\n]*?:\s*(\d{1,2})\s*/\s*7(?!\d))",
                                     std::regex::icase};
const std::regex kLikelihoodBare{R"((\d{1,2})\s*/\s*7(?!\d))"};
const std::regex kLikelihoodWord{
    R"((zero|one|two|three|four|five|six|seven|eight|nine)\s+(?:out\s+of|over)\s+(?:7|seven))",
    std::regex::icase};
// "... PHQ-8 Score: <payload>" anchor shared by the total rules.
const std::regex kTotalSumExpr{
    R"(PHQ-?8\s*Score\s*:?\s*(\d{1,2}(?:\s*\+\s*\d{1,2})+)\s*=\s*(\d{1,2})(?!\d))",
    std::regex::icase};
const std::regex kTotalBareInt{R"(PHQ-?8\s*Score\s*:?\s*(\d{1,2}))", std::regex::icase};
const std::regex kBareSumExpr{R"((\d{1,2}(?:\s*\+\s*\d{1,2})+)\s*=\s*(\d{1,2})(?!\d))"};
const std::regex kItemScoreLine{R"(Score\s*:?\s*(\d))", std::regex::icase};
const std::regex kVerdictWord{R"(\b(dis)?agree(?:s|d|ing)?\b)", std::regex::icase};
const std::regex kNegation{R"(\bnot\b|n['’]t|\bnever\b|\bcannot\b|\bhardly\b)",
                           std::regex::icase};
const std::regex kRevisedScore{
    R"(revised\s+PHQ-?8\s+score\s*(?:of|is|to|:)?\s*(\d{1,2})(?!\d))", std::regex::icase};

const std::map<std::string, int> kNumberWords = {
    {"zero", 0}, {"one", 1}, {"two", 2},   {"three", 3}, {"four", 4},
    {"five", 5}, {"six", 6}, {"seven", 7}, {"eight", 8}, {"nine", 9}};

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

struct Match {
  std::smatch m;
  std::size_t pos = 0;
  bool found = false;
};

// Last occurrence of a pattern; model replies refine toward their conclusion,
// so the final statement of a value is the one that counts.
Match last_match(const std::string& text, const std::regex& re) {
  Match result;
  auto begin = std::sregex_iterator(text.begin(), text.end(), re);
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    result.m = *it;
    result.pos = static_cast<std::size_t>(it->position(0));
    result.found = true;
  }
  return result;
}

// True when the character right after the match would extend it into a
// larger token (digit continuation, a sum, or an N/M fraction).
bool extends_numeric_token(const std::string& text, std::size_t end) {
  std::size_t i = end;
  while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
  if (i >= text.size()) return false;
  return text[i] == '+' || text[i] == '/' || std::isdigit(static_cast<unsigned char>(text[i]));
}

std::vector<int> parse_addends(const std::string& expr) {
  std::vector<int> addends;
  int current = -1;
  for (char c : expr) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      current = (current < 0 ? 0 : current * 10) + (c - '0');
    } else if (c == '+') {
      addends.push_back(current);
      current = -1;
    }
  }
  if (current >= 0) addends.push_back(current);
  return addends;
}

// Validates a sum expression "a+b+...=T": every addend 0..3, total 0..24,
// and the stated total must equal the recomputed sum.
bool validate_sum_expression(const std::vector<int>& addends, int stated_total,
                             std::vector<std::string>& diagnostics) {
  for (int a : addends) {
    if (a < 0 || a > 3) {
      diagnostics.push_back("addend " + std::to_string(a) + " outside 0..3");
      return false;
    }
  }
  const int sum = std::accumulate(addends.begin(), addends.end(), 0);
  if (sum != stated_total) {
    diagnostics.push_back("arithmetic mismatch: addends sum to " + std::to_string(sum) +
                          ", stated total is " + std::to_string(stated_total));
    return false;
  }
  if (stated_total < 0 || stated_total > 24) {
    diagnostics.push_back("total " + std::to_string(stated_total) + " outside 0..24");
    return false;
  }
  return true;
}

ParseOutcome<int> likelihood_from_segment(const std::string& segment, const RuleSet& rules) {
  ParseOutcome<int> out;
  Match m = last_match(segment, kLikelihoodAnchored);
  if (m.found) {
    out.matched_rule = "likelihood/anchored-scale";
  } else {
    m = last_match(segment, kLikelihoodBare);
    if (m.found) out.matched_rule = "likelihood/bare-scale";
  }
  if (m.found) {
    const int value = std::stoi(m.m[1].str());
    if (value < 1 || value > 7) {
      out.diagnostics.push_back("likelihood " + std::to_string(value) + " out of range 1..7");
      return out;
    }
    out.value = value;
    return out;
  }
  if (rules.word_numbers) {
    m = last_match(segment, kLikelihoodWord);
    if (m.found) {
      out.matched_rule = "likelihood/word-number";
      const int value = kNumberWords.at(to_lower(m.m[1].str()));
      if (value < 1 || value > 7) {
        out.diagnostics.push_back("likelihood " + std::to_string(value) + " out of range 1..7");
        return out;
      }
      out.value = value;
      return out;
    }
  }
  out.diagnostics.push_back("no likelihood pattern found");
  return out;
}

}  // namespace

const RuleSet& RuleSet::v1() {
  static const RuleSet instance{};
  return instance;
}

const char* verdict_str(verdict v) noexcept {
  switch (v) {
    case verdict::agree: return "agree";
    case verdict::disagree: return "disagree";
    case verdict::unclear: return "unclear";
  }
  return "?";
}

std::optional<verdict> verdict_from_str(const std::string& s) noexcept {
  if (s == "agree") return verdict::agree;
  if (s == "disagree") return verdict::disagree;
  if (s == "unclear") return verdict::unclear;
  return std::nullopt;
}

std::string strip_emphasis(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    const char c = text[i];
    if (c == '*') {
      while (i < text.size() && text[i] == '*') ++i;
      continue;
    }
    if (c == '_' && i + 1 < text.size() && text[i + 1] == '_') {
      while (i < text.size() && text[i] == '_') ++i;
      continue;
    }
    if (c == '<') {
      static const std::array<std::string_view, 4> tags = {"<b>", "</b>", "<strong>",
                                                           "</strong>"};
      bool skipped = false;
      for (auto tag : tags) {
        if (text.size() - i >= tag.size()) {
          bool eq = true;
          for (std::size_t k = 0; k < tag.size(); ++k) {
            if (std::tolower(static_cast<unsigned char>(text[i + k])) != tag[k]) {
              eq = false;
              break;
            }
          }
          if (eq) {
            i += tag.size();
            skipped = true;
            break;
          }
        }
      }
      if (skipped) continue;
    }
    out += c;
    ++i;
  }
  return out;
}

std::map<int, std::string> segment_by_participant(const std::string& stripped,
                                                  const std::vector<int>& expected_ids) {
  struct Header {
    int id;
    std::size_t start;  // of the header itself
    std::size_t body;   // just after the header
  };
  std::vector<Header> headers;
  auto begin = std::sregex_iterator(stripped.begin(), stripped.end(), kParticipantHeader);
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    headers.push_back({std::stoi((*it)[1].str()), static_cast<std::size_t>(it->position(0)),
                       static_cast<std::size_t>(it->position(0) + it->length(0))});
  }
  std::map<int, std::string> segments;
  for (std::size_t i = 0; i < headers.size(); ++i) {
    const std::size_t end = i + 1 < headers.size() ? headers[i + 1].start : stripped.size();
    // First header for an id wins; repeated mentions don't re-open a segment.
    if (!segments.count(headers[i].id) &&
        std::find(expected_ids.begin(), expected_ids.end(), headers[i].id) !=
            expected_ids.end()) {
      segments[headers[i].id] = stripped.substr(headers[i].body, end - headers[i].body);
    }
  }
  return segments;
}

std::map<int, ParseOutcome<int>> parse_likelihood(const std::string& reply,
                                                  const std::vector<int>& expected_ids,
                                                  const RuleSet& rules) {
  const std::string stripped = strip_emphasis(reply);
  auto segments = segment_by_participant(stripped, expected_ids);

  std::map<int, ParseOutcome<int>> out;
  // A single-participant reply often skips the header; with nothing to
  // segment, the whole reply is that participant's segment.
  if (segments.empty() && expected_ids.size() == 1) {
    auto outcome = likelihood_from_segment(stripped, rules);
    if (outcome.matched_rule) outcome.matched_rule = "likelihood/unsegmented-single";
    out[expected_ids[0]] = std::move(outcome);
    return out;
  }
  for (int id : expected_ids) {
    auto it = segments.find(id);
    if (it == segments.end()) {
      ParseOutcome<int> na;
      na.diagnostics.push_back("participant " + std::to_string(id) + " not found in reply");
      out[id] = std::move(na);
      continue;
    }
    out[id] = likelihood_from_segment(it->second, rules);
  }
  return out;
}

ParseOutcome<Phq8Total> parse_phq8_total(const std::string& reply, const RuleSet&) {
  const std::string stripped = strip_emphasis(reply);
  ParseOutcome<Phq8Total> out;

  if (Match m = last_match(stripped, kTotalSumExpr); m.found) {
    out.matched_rule = "total/sum-expression";
    const auto addends = parse_addends(m.m[1].str());
    const int stated = std::stoi(m.m[2].str());
    if (!validate_sum_expression(addends, stated, out.diagnostics)) return out;
    Phq8Total value;
    value.total = stated;
    if (addends.size() == 8) {
      std::array<int, 8> arr{};
      std::copy(addends.begin(), addends.end(), arr.begin());
      value.addends = arr;
    } else {
      out.diagnostics.push_back("sum expression has " + std::to_string(addends.size()) +
                                " addends, expected 8; keeping total only");
    }
    out.value = value;
    return out;
  }

  // Bare integer, guarded against swallowing the head of a sum or fraction.
  Match best;
  auto begin = std::sregex_iterator(stripped.begin(), stripped.end(), kTotalBareInt);
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const auto end = static_cast<std::size_t>(it->position(1) + it->length(1));
    if (extends_numeric_token(stripped, end)) continue;
    best.m = *it;
    best.found = true;
  }
  if (best.found) {
    out.matched_rule = "total/bare-integer";
    const int stated = std::stoi(best.m[1].str());
    if (stated < 0 || stated > 24) {
      out.diagnostics.push_back("total " + std::to_string(stated) + " outside 0..24");
      return out;
    }
    out.value = Phq8Total{stated, std::nullopt};
    return out;
  }

  out.diagnostics.push_back("no PHQ-8 total pattern found");
  return out;
}

ParseOutcome<ItemBreakdown> parse_item_breakdown(const std::string& reply, const RuleSet&) {
  const std::string stripped = strip_emphasis(reply);
  ParseOutcome<ItemBreakdown> out;

  // The closing 8-addend expression is authoritative even when fewer item
  // lines were narrated.
  Match expr;
  auto begin = std::sregex_iterator(stripped.begin(), stripped.end(), kBareSumExpr);
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    if (parse_addends((*it)[1].str()).size() == 8) {
      expr.m = *it;
      expr.found = true;
    }
  }
  if (expr.found) {
    out.matched_rule = "items/sum-expression";
    const auto addends = parse_addends(expr.m[1].str());
    const int stated = std::stoi(expr.m[2].str());
    if (!validate_sum_expression(addends, stated, out.diagnostics)) return out;
    ItemBreakdown value;
    std::copy(addends.begin(), addends.end(), value.item_scores.begin());
    value.total = stated;
    out.value = value;
    return out;
  }

  std::vector<int> scores;
  begin = std::sregex_iterator(stripped.begin(), stripped.end(), kItemScoreLine);
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const auto end = static_cast<std::size_t>(it->position(1) + it->length(1));
    if (extends_numeric_token(stripped, end)) continue;
    scores.push_back(std::stoi((*it)[1].str()));
  }
  if (!scores.empty()) out.matched_rule = "items/score-lines";
  if (scores.size() != 8) {
    out.diagnostics.push_back("found " + std::to_string(scores.size()) +
                              " item score lines, need exactly 8");
    return out;
  }
  for (int s : scores) {
    if (s < 0 || s > 3) {
      out.diagnostics.push_back("item score " + std::to_string(s) + " outside 0..3");
      return out;
    }
  }
  ItemBreakdown value;
  std::copy(scores.begin(), scores.end(), value.item_scores.begin());
  value.total = std::accumulate(scores.begin(), scores.end(), 0);
  out.value = value;
  return out;
}

ParseOutcome<VerdictResult> parse_verdict(const std::string& reply, const RuleSet&) {
  const std::string stripped = strip_emphasis(reply);
  ParseOutcome<VerdictResult> out;

  // Last verdict phrase wins; a bare "agree" preceded by a nearby negation
  // ("do not agree", "can't agree") counts as disagreement.
  bool found = false;
  bool agrees = false;
  std::size_t verdict_end = 0;
  auto begin = std::sregex_iterator(stripped.begin(), stripped.end(), kVerdictWord);
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    found = true;
    verdict_end = static_cast<std::size_t>(it->position(0) + it->length(0));
    if ((*it)[1].matched) {
      agrees = false;
      continue;
    }
    const std::size_t window_start =
        static_cast<std::size_t>(it->position(0)) > 24
            ? static_cast<std::size_t>(it->position(0)) - 24
            : 0;
    const std::string window =
        stripped.substr(window_start, static_cast<std::size_t>(it->position(0)) - window_start);
    agrees = !std::regex_search(window, kNegation);
  }

  VerdictResult value;
  if (!found) {
    value.decision = verdict::unclear;
    out.matched_rule = "verdict/unclear";
    out.diagnostics.push_back("no agree/disagree phrase found");
  } else {
    value.decision = agrees ? verdict::agree : verdict::disagree;
    out.matched_rule = "verdict/phrase";
  }

  if (Match m = last_match(stripped, kRevisedScore); m.found) {
    const int revised = std::stoi(m.m[1].str());
    if (revised >= 0 && revised <= 24) {
      value.revised_total = revised;
    } else {
      out.diagnostics.push_back("revised total " + std::to_string(revised) + " outside 0..24");
    }
  } else if (found) {
    // Nearest valid sum expression after the verdict.
    auto eb = std::sregex_iterator(stripped.begin(), stripped.end(), kBareSumExpr);
    for (auto it = eb; it != std::sregex_iterator(); ++it) {
      if (static_cast<std::size_t>(it->position(0)) < verdict_end) continue;
      const auto addends = parse_addends((*it)[1].str());
      const int stated = std::stoi((*it)[2].str());
      std::vector<std::string> scratch;
      if (validate_sum_expression(addends, stated, scratch)) {
        value.revised_total = stated;
        break;
      }
    }
  }

  out.value = value;
  return out;
}

}  // namespace prescreen::parser

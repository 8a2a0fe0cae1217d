#include <doctest.h>

#include <algorithm>
#include <random>

#include "helpers/oracles.hpp"
#include "prescreen/parser.hpp"

using namespace prescreen::parser;

namespace {

const std::filesystem::path kFixtures = PRESCREEN_FIXTURES_DIR;

std::string fixture(const char* name) {
  const auto text = oracles::slurp(kFixtures / "replies" / name);
  REQUIRE(!text.empty());
  return text;
}

// Deterministic noise: leading/trailing prose plus emphasis, which must not
// change any parsed value.
std::string noisy(const std::string& reply, unsigned seed) {
  std::mt19937 rng(seed);
  const std::vector<std::string> prefixes = {
      "Sure, here is my assessment.\n\n", "Thank you for the transcript.\n",
      "Below are the findings you asked for:\n\n"};
  const std::vector<std::string> suffixes = {
      "\n\nLet me know if you need anything else.", "\nEnd of assessment.",
      "\n\nPlease consult a professional for a formal diagnosis."};
  std::string out = prefixes[rng() % prefixes.size()] + reply + suffixes[rng() % suffixes.size()];
  if (rng() % 2 == 0) {
    // Re-emphasize a digit here and there.
    std::string decorated;
    for (char c : out) {
      if (std::isdigit(static_cast<unsigned char>(c)) && rng() % 7 == 0) {
        decorated += "**";
        decorated += c;
        decorated += "**";
      } else {
        decorated += c;
      }
    }
    out = decorated;
  }
  return out;
}

const std::vector<int> kBatchIds = {300, 306, 308, 309, 311};

}  // namespace

TEST_CASE("strip_emphasis removes markers but keeps text") {
  CHECK(strip_emphasis("**6/7**") == "6/7");
  CHECK(strip_emphasis("*italic* and __bold__") == "italic and bold");
  CHECK(strip_emphasis("<b>Score:</b> 2 <strong>ok</strong>") == "Score: 2 ok");
  CHECK(strip_emphasis("l_a stays") == "l_a stays");  // single underscores are content
}

TEST_CASE("parse_likelihood on the recorded five-participant reply") {
  const auto out = parse_likelihood(fixture("task1_batch.txt"), kBatchIds);
  REQUIRE(out.size() == 5);
  CHECK(out.at(300).value == 2);
  CHECK(out.at(306).value == 3);
  CHECK(out.at(308).value == 6);
  CHECK(out.at(309).value == 5);
  CHECK(out.at(311).value == 7);
  for (int id : kBatchIds) CHECK(out.at(id).matched_rule == "likelihood/anchored-scale");
}

TEST_CASE("parse_likelihood handles bold tokens and rejects out-of-range scores") {
  const auto bold = parse_likelihood(
      "Participant 42:\nLikelihood of Ongoing Mental Health Disorder: **6/7**\n", {42});
  CHECK(bold.at(42).value == 6);

  const auto high = parse_likelihood(
      "Participant 42:\nLikelihood of Ongoing Mental Health Disorder: 8/7\n", {42});
  CHECK(high.at(42).is_na());
  REQUIRE(!high.at(42).diagnostics.empty());
  CHECK(high.at(42).diagnostics[0].find("out of range") != std::string::npos);
}

TEST_CASE("numeric tokens are not split mid-number") {
  // "2/70" is not a 7-point rating and "123" is not a 0..24 revision.
  const auto out = parse_likelihood(
      "Participant 8:\nLikelihood of Ongoing Mental Health Disorder: 2/70\n", {8});
  CHECK(out.at(8).is_na());

  const auto review = parse_verdict("I disagree. The revised PHQ-8 score of 123 stands.");
  CHECK(review.value->decision == verdict::disagree);
  CHECK(!review.value->revised_total.has_value());

  CHECK(parse_phq8_total("Estimated PHQ-8 Score: 1+2+3+1=75").is_na());
}

TEST_CASE("parse_likelihood maps missing participants to NA") {
  const auto out = parse_likelihood(
      "Participant 300:\nLikelihood of Ongoing Mental Health Disorder: 4/7\n", {300, 301});
  CHECK(out.at(300).value == 4);
  CHECK(out.at(301).is_na());
}

TEST_CASE("parse_likelihood takes the last value in a segment") {
  const auto out = parse_likelihood(
      "Participant 9:\nLikelihood of Ongoing Mental Health Disorder: 3/7 at first glance.\n"
      "On reflection, Likelihood of Ongoing Mental Health Disorder: 5/7\n",
      {9});
  CHECK(out.at(9).value == 5);
}

TEST_CASE("parse_likelihood extracts only from the participant's own segment") {
  const std::string parts[] = {
      "Participant 300:\nLikelihood of Ongoing Mental Health Disorder: 2/7\n",
      "Participant 306:\nLikelihood of Ongoing Mental Health Disorder: 3/7\n",
      "Participant 308:\nLikelihood of Ongoing Mental Health Disorder: 6/7\n"};
  std::vector<int> order = {0, 1, 2};
  do {
    std::string reply = "Overall notes first.\n";
    for (int i : order) reply += parts[i];
    const auto out = parse_likelihood(reply, {300, 306, 308});
    CHECK(out.at(300).value == 2);
    CHECK(out.at(306).value == 3);
    CHECK(out.at(308).value == 6);
  } while (std::next_permutation(order.begin(), order.end()));
}

TEST_CASE("parse_likelihood falls back to the whole reply for a single participant") {
  const auto out =
      parse_likelihood("Likelihood of Ongoing Mental Health Disorder: 4/7", {77});
  CHECK(out.at(77).value == 4);
  CHECK(out.at(77).matched_rule == "likelihood/unsegmented-single");
}

TEST_CASE("word-number likelihoods only parse when the secondary rule is on") {
  const std::string reply = "Participant 5:\nI would rate this a seven out of 7.\n";
  CHECK(parse_likelihood(reply, {5}).at(5).is_na());

  RuleSet with_words;
  with_words.word_numbers = true;
  const auto out = parse_likelihood(reply, {5}, with_words);
  CHECK(out.at(5).value == 7);
}

TEST_CASE("parse_phq8_total reads the recorded stage-1 estimate") {
  const auto out = parse_phq8_total(fixture("stage1.txt"));
  REQUIRE(!out.is_na());
  CHECK(out.value->total == 13);
  REQUIRE(out.value->addends.has_value());
  CHECK(*out.value->addends == std::array<int, 8>{2, 3, 1, 2, 1, 2, 1, 1});
  CHECK(out.matched_rule == "total/sum-expression");
}

TEST_CASE("parse_phq8_total reads the stage-2 closing line") {
  const auto out = parse_phq8_total("Total PHQ-8 Score: 2+3+0+2+0+2+1+0 = 10");
  REQUIRE(!out.is_na());
  CHECK(out.value->total == 10);
}

TEST_CASE("parse_phq8_total rejects inconsistent arithmetic") {
  const auto out = parse_phq8_total("Estimated PHQ-8 Score: 2+2=5");
  CHECK(out.is_na());
  CHECK(out.matched_rule == "total/sum-expression");
  REQUIRE(!out.diagnostics.empty());
  CHECK(out.diagnostics[0].find("arithmetic mismatch") != std::string::npos);
}

TEST_CASE("parse_phq8_total accepts a bare integer and validates its range") {
  const auto plain = parse_phq8_total("Estimated PHQ-8 Score: 15");
  CHECK(plain.value->total == 15);
  CHECK(!plain.value->addends.has_value());
  CHECK(plain.matched_rule == "total/bare-integer");

  CHECK(parse_phq8_total("Estimated PHQ-8 Score: 25").is_na());
  CHECK(parse_phq8_total("no score here").is_na());
}

TEST_CASE("parse_phq8_total rejects out-of-range addends") {
  const auto out = parse_phq8_total("Estimated PHQ-8 Score: 4+1+1+1+1+1+1+1=11");
  CHECK(out.is_na());
  REQUIRE(!out.diagnostics.empty());
  CHECK(out.diagnostics[0].find("outside 0..3") != std::string::npos);
}

TEST_CASE("parse_item_breakdown prefers the eight-addend expression") {
  const auto out = parse_item_breakdown(fixture("stage2.txt"));
  REQUIRE(!out.is_na());
  CHECK(out.value->item_scores == std::array<int, 8>{2, 3, 0, 2, 0, 2, 1, 0});
  CHECK(out.value->total == 10);
  CHECK(out.matched_rule == "items/sum-expression");
}

TEST_CASE("parse_item_breakdown falls back to eight Score lines") {
  std::string reply;
  const int scores[] = {1, 0, 2, 3, 1, 0, 2, 1};
  for (int s : scores) reply += "Item evidence here. Score: " + std::to_string(s) + "\n";
  const auto out = parse_item_breakdown(reply);
  REQUIRE(!out.is_na());
  CHECK(out.value->item_scores == std::array<int, 8>{1, 0, 2, 3, 1, 0, 2, 1});
  CHECK(out.value->total == 10);
  CHECK(out.matched_rule == "items/score-lines");
}

TEST_CASE("parse_item_breakdown needs all eight items") {
  std::string reply;
  for (int i = 0; i < 7; ++i) reply += "Score: 1\n";
  const auto out = parse_item_breakdown(reply);
  CHECK(out.is_na());
  REQUIRE(!out.diagnostics.empty());
  CHECK(out.diagnostics[0].find("need exactly 8") != std::string::npos);
}

TEST_CASE("parse_verdict on the recorded stage-3 review") {
  const auto out = parse_verdict(fixture("stage3.txt"));
  REQUIRE(!out.is_na());
  CHECK(out.value->decision == verdict::disagree);
  CHECK(out.value->revised_total == 10);
}

TEST_CASE("parse_verdict affirmative and unclear cases") {
  const auto agree = parse_verdict("I agree with the assigned score.");
  CHECK(agree.value->decision == verdict::agree);
  CHECK(!agree.value->revised_total.has_value());

  const auto unclear = parse_verdict("The transcript shows mixed signals.");
  CHECK(unclear.value->decision == verdict::unclear);
}

TEST_CASE("parse_verdict lets the last phrase win") {
  const auto out = parse_verdict(
      "The assessment is agreeable in parts, and I agree with the broad strokes; "
      "however I do not agree overall.");
  CHECK(out.value->decision == verdict::disagree);

  const auto flipped = parse_verdict("I disagreed at first, but now I agree.");
  CHECK(flipped.value->decision == verdict::agree);
}

TEST_CASE("parse_verdict understands contracted negations") {
  CHECK(parse_verdict("I don't agree with that score.").value->decision == verdict::disagree);
  CHECK(parse_verdict("I cannot agree with 5.").value->decision == verdict::disagree);
}

TEST_CASE("parse_verdict finds a revision after the verdict when unphrased") {
  const auto out = parse_verdict(
      "I disagree with the assigned value. My re-evaluation gives 1+2+1+2+1+2+1+2 = 12.");
  CHECK(out.value->decision == verdict::disagree);
  CHECK(out.value->revised_total == 12);
}

TEST_CASE("parsing is idempotent") {
  const auto reply = fixture("stage3.txt");
  const auto a = parse_verdict(reply);
  const auto b = parse_verdict(reply);
  CHECK(a.value->decision == b.value->decision);
  CHECK(a.value->revised_total == b.value->revised_total);
  CHECK(a.matched_rule == b.matched_rule);
}

TEST_CASE("noise wrapping never changes parsed values") {
  const auto batch = fixture("task1_batch.txt");
  const auto stage1 = fixture("stage1.txt");
  const auto stage2 = fixture("stage2.txt");
  const auto stage3 = fixture("stage3.txt");
  for (unsigned seed = 0; seed < 25; ++seed) {
    const auto lik = parse_likelihood(noisy(batch, seed), kBatchIds);
    CHECK(lik.at(300).value == 2);
    CHECK(lik.at(306).value == 3);
    CHECK(lik.at(308).value == 6);
    CHECK(lik.at(309).value == 5);
    CHECK(lik.at(311).value == 7);

    const auto total = parse_phq8_total(noisy(stage1, seed));
    CHECK(total.value->total == 13);

    const auto items = parse_item_breakdown(noisy(stage2, seed));
    CHECK(items.value->item_scores == std::array<int, 8>{2, 3, 0, 2, 0, 2, 1, 0});

    const auto review = parse_verdict(noisy(stage3, seed));
    CHECK(review.value->decision == verdict::disagree);
    CHECK(review.value->revised_total == 10);
  }
}

TEST_CASE("parsed values never leave their declared ranges") {
  std::mt19937 rng(97);
  const std::vector<std::string> shards = {
      "Participant 12:",       "Likelihood of Ongoing Mental Health Disorder:",
      "Estimated PHQ-8 Score:", "Total PHQ-8 Score:",
      "Score:",                "agree",
      "do not agree",          "revised PHQ-8 score of",
      "9/7",                   "3/7",
      "88",                    "12",
      "2+3+9=14",              "1+1+1+1+1+1+1+1=8",
      "=",                     "+",
      "random words here",     "\n"};
  for (int iter = 0; iter < 400; ++iter) {
    std::string text;
    const int n = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      text += shards[rng() % shards.size()];
      text += ' ';
    }
    const auto lik = parse_likelihood(text, {12});
    if (lik.at(12).value) CHECK((*lik.at(12).value >= 1 && *lik.at(12).value <= 7));
    const auto total = parse_phq8_total(text);
    if (total.value) CHECK((total.value->total >= 0 && total.value->total <= 24));
    const auto items = parse_item_breakdown(text);
    if (items.value) {
      for (int s : items.value->item_scores) CHECK((s >= 0 && s <= 3));
    }
    const auto review = parse_verdict(text);
    if (review.value->revised_total) {
      CHECK((*review.value->revised_total >= 0 && *review.value->revised_total <= 24));
    }
  }
}

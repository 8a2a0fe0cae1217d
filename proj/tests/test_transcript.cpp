#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "prescreen/transcript.hpp"

using namespace prescreen;

namespace {

Transcript parse_str(const std::string& content, int pid = 300) {
  std::istringstream in(content);
  return parse_transcript_file(in, pid);
}

std::vector<LabelRecord> labels_str(const std::string& content) {
  std::istringstream in(content);
  return load_labels(in);
}

constexpr const char* kHeader = "start_time\tstop_time\tspeaker\tvalue\n";

}  // namespace

TEST_CASE("parse_transcript_file reads interviewer and participant rows") {
  const auto t = parse_str(std::string(kHeader) +
                           "0.0\t1.2\tEllie\thi i'm ellie thanks for coming in today\n"
                           "2.0\t2.5\tParticipant\tgood\n");
  REQUIRE(t.utterances.size() == 2);
  CHECK(t.participant_id == 300);
  CHECK(t.utterances[0].speaker == speaker_role::interviewer);
  CHECK(t.utterances[0].text == "hi i'm ellie thanks for coming in today");
  CHECK(t.utterances[0].start_s == doctest::Approx(0.0));
  CHECK(t.utterances[0].stop_s == doctest::Approx(1.2));
  CHECK(t.utterances[1].speaker == speaker_role::participant);
}

TEST_CASE("parse_transcript_file error paths") {
  try {
    parse_str("");
    FAIL("expected EmptyFile");
  } catch (const error& e) {
    CHECK(e.code() == errc::empty_file);
  }
  try {
    parse_str(kHeader);  // header only, no data rows
    FAIL("expected EmptyFile");
  } catch (const error& e) {
    CHECK(e.code() == errc::empty_file);
  }
  try {
    parse_str(std::string(kHeader) + "0.0\t1.0\tRobot\thello\n");
    FAIL("expected UnknownSpeaker");
  } catch (const error& e) {
    CHECK(e.code() == errc::unknown_speaker);
  }
  try {
    parse_str(std::string(kHeader) + "0.0\t1.0\tEllie\n");
    FAIL("expected MalformedRow");
  } catch (const error& e) {
    CHECK(e.code() == errc::malformed_row);
  }
  try {
    parse_str(std::string(kHeader) + "abc\t1.0\tEllie\thi\n");
    FAIL("expected MalformedRow");
  } catch (const error& e) {
    CHECK(e.code() == errc::malformed_row);
  }
}

TEST_CASE("transcript serialization round-trips") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dt(0.0, 300.0);
  std::uniform_int_distribution<int> words(0, 5);
  const std::vector<std::string> vocab = {"good", "um", "<laughter>", "i love it",
                                          "atlanta georgia", ""};
  for (int iter = 0; iter < 50; ++iter) {
    Transcript t;
    t.participant_id = 300 + iter;
    double clock = 0.0;
    const int n = 1 + static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i) {
      Utterance u;
      u.start_s = clock;
      clock += dt(rng) / 100.0;
      u.stop_s = clock;
      u.speaker = rng() % 2 == 0 ? speaker_role::interviewer : speaker_role::participant;
      for (int w = 0; w < words(rng); ++w) {
        if (!u.text.empty()) u.text += ' ';
        u.text += vocab[rng() % vocab.size()];
      }
      t.utterances.push_back(u);
    }
    const auto reparsed = parse_str(serialize_transcript(t), t.participant_id);
    CHECK(reparsed == t);
  }
}

TEST_CASE("extract_participant_text joins with ./ markers") {
  Transcript t;
  t.participant_id = 300;
  t.utterances = {
      {0.0, 1.0, speaker_role::interviewer, "how are you doing today"},
      {1.5, 2.0, speaker_role::participant, "good"},
      {2.5, 3.0, speaker_role::interviewer, "where are you from originally"},
      {3.5, 4.0, speaker_role::participant, "atlanta georgia"},
  };
  const auto jd = extract_participant_text(t);
  CHECK(jd.text == "good./ atlanta georgia./");
  CHECK(jd.utterance_count == 2);
  CHECK(jd.participant_id == 300);
}

TEST_CASE("extract_participant_text trims and drops whitespace-only turns") {
  Transcript t;
  t.utterances = {
      {0.0, 1.0, speaker_role::participant, "  i love it  "},
      {1.0, 2.0, speaker_role::participant, "   "},
  };
  const auto jd = extract_participant_text(t);
  CHECK(jd.text == "i love it./");
  CHECK(jd.utterance_count == 1);
}

TEST_CASE("extract_participant_text on interviewer-only transcript") {
  Transcript t;
  t.utterances = {{0.0, 1.0, speaker_role::interviewer, "hi"}};
  const auto jd = extract_participant_text(t);
  CHECK(jd.text.empty());
  CHECK(jd.utterance_count == 0);
}

TEST_CASE("joint dialogue separator count matches utterance count") {
  std::mt19937 rng(11);
  const std::vector<std::string> vocab = {"yes", "um okay", "<sigh>", " spaced  out "};
  for (int iter = 0; iter < 40; ++iter) {
    Transcript t;
    std::size_t kept = 0;
    const int n = static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      const bool from_participant = rng() % 2 == 0;
      std::string text = rng() % 4 == 0 ? "  " : vocab[rng() % vocab.size()];
      if (from_participant && !trim(text).empty()) ++kept;
      t.utterances.push_back({static_cast<double>(i), static_cast<double>(i) + 0.5,
                              from_participant ? speaker_role::participant
                                               : speaker_role::interviewer,
                              text});
    }
    const auto jd = extract_participant_text(t);
    CHECK(jd.utterance_count == kept);
    std::size_t markers = 0;
    for (std::size_t pos = 0; (pos = jd.text.find("./", pos)) != std::string::npos; pos += 2) {
      ++markers;
    }
    CHECK(markers == kept);
  }
}

TEST_CASE("load_labels parses and validates rows") {
  const auto records = labels_str(
      "Participant_ID,PHQ8_Binary,PHQ8_Score\n"
      "308,1,16\n"
      "300,0,3\n");
  REQUIRE(records.size() == 2);
  CHECK(records[0].participant_id == 308);
  CHECK(records[0].phq8_total == 16);
  CHECK(records[0].phq8_binary == 1);
  CHECK(!records[0].item_scores.has_value());
  CHECK(records[1].phq8_binary == 0);

  try {
    labels_str("Participant_ID,PHQ8_Binary,PHQ8_Score\n301,1,4\n");
    FAIL("expected InconsistentLabel");
  } catch (const error& e) {
    CHECK(e.code() == errc::inconsistent_label);
  }
}

TEST_CASE("load_labels reads optional item columns") {
  const auto records = labels_str(
      "Participant_ID,PHQ8_Binary,PHQ8_Score,PHQ8_NoInterest,PHQ8_Depressed,PHQ8_Sleep,"
      "PHQ8_Tired,PHQ8_Appetite,PHQ8_Failure,PHQ8_Concentrating,PHQ8_Moving\n"
      "308,1,16,2,3,2,2,2,2,2,1\n");
  REQUIRE(records.size() == 1);
  REQUIRE(records[0].item_scores.has_value());
  CHECK((*records[0].item_scores)[1] == 3);

  try {
    labels_str(
        "Participant_ID,PHQ8_Binary,PHQ8_Score,PHQ8_NoInterest,PHQ8_Depressed,PHQ8_Sleep,"
        "PHQ8_Tired,PHQ8_Appetite,PHQ8_Failure,PHQ8_Concentrating,PHQ8_Moving\n"
        "308,1,16,2,3,2,2,2,2,2,0\n");
    FAIL("expected InconsistentLabel");
  } catch (const error& e) {
    CHECK(e.code() == errc::inconsistent_label);
  }
}

namespace {

std::vector<LabelRecord> synthetic_labels(std::size_t n_pos, std::size_t n_neg) {
  std::vector<LabelRecord> labels;
  int id = 1;
  for (std::size_t i = 0; i < n_pos; ++i) {
    labels.push_back({id++, 15, 1, std::nullopt});
  }
  for (std::size_t i = 0; i < n_neg; ++i) {
    labels.push_back({id++, 4, 0, std::nullopt});
  }
  return labels;
}

}  // namespace

TEST_CASE("summarize_cohort reproduces the overall and test ratios") {
  const auto overall = summarize_cohort(synthetic_labels(55, 132));
  CHECK(overall.n_total == 187);
  CHECK(overall.n_positive == 55);
  CHECK(overall.n_negative == 132);
  CHECK(overall.ratio == doctest::Approx(0.42));

  const auto test_shaped = summarize_cohort(synthetic_labels(14, 33));
  CHECK(test_shaped.ratio == doctest::Approx(0.42));

  const auto train_shaped = summarize_cohort(synthetic_labels(30, 75));
  CHECK(train_shaped.ratio == doctest::Approx(0.40));
}

TEST_CASE("summarize_cohort with no negatives reports NaN ratio") {
  const auto cs = summarize_cohort(synthetic_labels(3, 0));
  CHECK(std::isnan(cs.ratio));
  CHECK(cs.n_total == cs.n_positive + cs.n_negative);
}

TEST_CASE("summarize_cohort partition always adds up") {
  std::mt19937 rng(3);
  for (int iter = 0; iter < 30; ++iter) {
    const auto labels = synthetic_labels(rng() % 40, rng() % 40);
    if (labels.empty()) continue;
    const auto cs = summarize_cohort(labels);
    CHECK(cs.n_total == cs.n_positive + cs.n_negative);
  }
}

TEST_CASE("summarize_cohort over a split demands labels") {
  const auto labels = synthetic_labels(2, 2);
  DatasetSplit split;
  split.name = split_name::test;
  split.participant_ids = {1, 999};
  try {
    summarize_cohort(labels, &split);
    FAIL("expected MissingLabel");
  } catch (const error& e) {
    CHECK(e.code() == errc::missing_label);
  }
  split.participant_ids = {1, 3};
  const auto cs = summarize_cohort(labels, &split);
  CHECK(cs.n_total == 2);
  CHECK(cs.n_positive == 1);
}

TEST_CASE("validate_splits rejects overlapping ids") {
  DatasetSplit train{split_name::train, {300, 301}};
  DatasetSplit test{split_name::test, {302, 300}};
  try {
    validate_splits({train, test});
    FAIL("expected OverlappingSplits");
  } catch (const error& e) {
    CHECK(e.code() == errc::overlapping_splits);
  }
  test.participant_ids = {302, 303};
  CHECK_NOTHROW(validate_splits({train, test}));
}

TEST_CASE("count_tokens whitespace approximation") {
  CHECK(count_tokens("") == 0);
  CHECK(count_tokens("good./ atlanta georgia./") == 4);  // 3 words * 4/3 rounded up
  CHECK(count_tokens("one") == 2);                       // ceil(4/3)

  TokenizerSpec exact;
  exact.name = "char-count";
  exact.fn = [](std::string_view s) { return s.size(); };
  CHECK(count_tokens("abc", exact) == 3);
}

TEST_CASE("count_tokens is monotone under concatenation") {
  std::mt19937 rng(17);
  const std::vector<std::string> pieces = {"", "a", "word ", " two words", "x y z ", "\t\n"};
  for (int iter = 0; iter < 200; ++iter) {
    const auto& a = pieces[rng() % pieces.size()];
    const auto& b = pieces[rng() % pieces.size()];
    CHECK(count_tokens(a + b) >= count_tokens(a));
    CHECK(count_tokens(a + b) >= count_tokens(b));
  }
}

TEST_CASE("token_histogram bins as documented") {
  auto dialogue = [](std::size_t words) {
    JointDialogue d;
    for (std::size_t i = 0; i < words; ++i) d.text += "w ";
    return d;
  };
  // Token counts 100, 150, 310 come from 75, 112, and 232 words (ceil * 4/3
  // is 100, 150, 310 respectively  -- 112*4=448, ceil/3=150).
  CHECK(count_tokens(dialogue(75).text) == 100);
  CHECK(count_tokens(dialogue(112).text) == 150);
  CHECK(count_tokens(dialogue(232).text) == 310);

  const auto bins = token_histogram({dialogue(75), dialogue(112), dialogue(232)}, 200);
  REQUIRE(bins.size() == 2);
  CHECK(bins[0] == HistogramBin{0, 2});
  CHECK(bins[1] == HistogramBin{200, 1});

  CHECK(token_histogram({}, 50).empty());

  const auto single = token_histogram({dialogue(10)}, 64);
  REQUIRE(single.size() == 1);
  CHECK(single[0].count == 1);
}

TEST_CASE("token_histogram counts sum to input size") {
  std::mt19937 rng(23);
  for (int iter = 0; iter < 30; ++iter) {
    std::vector<JointDialogue> dialogues;
    const std::size_t n = rng() % 25;
    for (std::size_t i = 0; i < n; ++i) {
      JointDialogue d;
      const std::size_t words = rng() % 300;
      for (std::size_t w = 0; w < words; ++w) d.text += "t ";
      dialogues.push_back(std::move(d));
    }
    const std::size_t bin_width = 1 + rng() % 100;
    const auto bins = token_histogram(dialogues, bin_width);
    std::size_t total = 0;
    for (const auto& b : bins) total += b.count;
    CHECK(total == dialogues.size());
  }
}

TEST_CASE("the shipped fixture dataset has the documented cohort shape") {
  std::ifstream labels_in(std::filesystem::path(PRESCREEN_FIXTURES_DIR) / "labels.csv");
  REQUIRE(labels_in.good());
  const auto labels = load_labels(labels_in);
  REQUIRE(labels.size() == 10);

  const auto overall = summarize_cohort(labels);
  CHECK(overall.n_positive == 5);
  CHECK(overall.n_negative == 5);
  CHECK(overall.ratio == doctest::Approx(1.0));

  std::vector<DatasetSplit> splits;
  const std::map<std::string, split_name> names = {
      {"train.txt", split_name::train}, {"dev.txt", split_name::dev},
      {"test.txt", split_name::test}};
  for (const auto& [file, name] : names) {
    std::ifstream in(std::filesystem::path(PRESCREEN_FIXTURES_DIR) / "splits" / file);
    REQUIRE(in.good());
    splits.push_back(load_split(in, name));
  }
  CHECK_NOTHROW(validate_splits(splits));

  for (const auto& split : splits) {
    const auto cs = summarize_cohort(labels, &split);
    if (split.name == split_name::test) {
      CHECK(cs.n_total == 5);
      CHECK(cs.n_positive == 3);
      CHECK(cs.ratio == doctest::Approx(1.5));
    } else {
      CHECK(cs.n_total == cs.n_positive + cs.n_negative);
    }
  }
}

TEST_CASE("dialogues_to_csv quotes when needed") {
  JointDialogue plain{300, "good./ atlanta georgia./", 2};
  JointDialogue tricky{301, "said \"hi, there\"./", 1};
  const auto csv = dialogues_to_csv({plain, tricky});
  CHECK(csv ==
        "participant_id,text\n"
        "300,good./ atlanta georgia./\n"
        "301,\"said \"\"hi, there\"\"./\"\n");
}

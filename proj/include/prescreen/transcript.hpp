#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "prescreen/errors.hpp"

namespace prescreen {

// ---------------------------------------------------------------------------
// Interview transcripts and screening labels.
//
// Transcript files are UTF-8 TSV with a header row
//   start_time \t stop_time \t speaker \t value
// one file per participant. Label files are CSV with Participant_ID,
// PHQ8_Binary, PHQ8_Score and optionally the eight per-item columns.
// ---------------------------------------------------------------------------

enum class speaker_role { interviewer, participant };

struct Utterance {
  double start_s = 0.0;
  double stop_s = 0.0;
  speaker_role speaker = speaker_role::interviewer;
  std::string text;  // raw cell content, may be empty

  bool operator==(const Utterance&) const = default;
};

struct Transcript {
  int participant_id = 0;
  std::vector<Utterance> utterances;  // non-decreasing start_s

  bool operator==(const Transcript&) const = default;
};

// Per-participant concatenation of participant utterances; every retained
// utterance is trimmed and suffixed with "./", entries joined by one space.
struct JointDialogue {
  int participant_id = 0;
  std::string text;
  std::size_t utterance_count = 0;
};

inline constexpr int kPhq8Max = 24;
inline constexpr int kPhq8PositiveCutoff = 10;  // total >= 10 screens positive

struct LabelRecord {
  int participant_id = 0;
  int phq8_total = 0;   // 0..24
  int phq8_binary = 0;  // 1 iff total >= 10
  std::optional<std::array<int, 8>> item_scores;  // each 0..3, sums to total
};

enum class split_name { train, dev, test };

const char* split_name_str(split_name s) noexcept;

struct DatasetSplit {
  split_name name = split_name::train;
  std::set<int> participant_ids;
};

struct CohortSummary {
  std::size_t n_total = 0;
  std::size_t n_positive = 0;  // phq8_total >= 10
  std::size_t n_negative = 0;
  double ratio = 0.0;  // positives / negatives, rounded to 2 decimals; NaN if no negatives
};

// Pluggable token counter. The default approximates chat-model BPE as
// ceil(whitespace_words * 4 / 3); exact tokenizers can be plugged in via fn.
struct TokenizerSpec {
  std::string name = "whitespace-4per3";
  std::function<std::size_t(std::string_view)> fn;  // overrides the named builtin when set
};

struct HistogramBin {
  std::size_t bin_start = 0;
  std::size_t count = 0;

  bool operator==(const HistogramBin&) const = default;
};

// --- operations ------------------------------------------------------------

// Throws: empty_file (no data rows), malformed_row, unknown_speaker.
Transcript parse_transcript_file(std::istream& raw, int participant_id);

// Inverse of parse_transcript_file up to float formatting; reparsing the
// result yields an identical Transcript.
std::string serialize_transcript(const Transcript& t);

JointDialogue extract_participant_text(const Transcript& t);

// Throws: malformed_row, inconsistent_label, empty_file.
std::vector<LabelRecord> load_labels(std::istream& raw);

// One participant id per line; blank lines ignored. Throws malformed_row.
DatasetSplit load_split(std::istream& raw, split_name name);

// Throws overlapping_splits if any id appears in two splits.
void validate_splits(const std::vector<DatasetSplit>& splits);

// Throws missing_label when a split id has no label.
CohortSummary summarize_cohort(const std::vector<LabelRecord>& labels,
                               const DatasetSplit* split = nullptr);

std::size_t count_tokens(std::string_view text, const TokenizerSpec& tokenizer = {});

// Bins cover [0, max_count]; zero-count interior bins are included, so bin
// counts always sum to dialogues.size(). Empty input gives an empty list.
std::vector<HistogramBin> token_histogram(const std::vector<JointDialogue>& dialogues,
                                          std::size_t bin_width,
                                          const TokenizerSpec& tokenizer = {});

// Joint-dialogue export: one "participant_id,text" row per dialogue with
// standard CSV quoting.
std::string dialogues_to_csv(const std::vector<JointDialogue>& dialogues);

std::string trim(std::string_view s);

}  // namespace prescreen

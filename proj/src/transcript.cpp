#include "prescreen/transcript.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>

namespace prescreen {

namespace {

constexpr std::string_view kWhitespace = " \t\r\n\f\v";

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> cells;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      cells.emplace_back(line.substr(pos));
      return cells;
    }
    cells.emplace_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
}

double parse_time(const std::string& cell, std::size_t line_no) {
  const std::string s = trim(cell);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value) || value < 0.0) {
    throw error(errc::malformed_row,
                "line " + std::to_string(line_no) + ": non-numeric time '" + cell + "'");
  }
  return value;
}

int parse_int(const std::string& cell, std::size_t line_no, const char* what) {
  const std::string s = trim(cell);
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw error(errc::malformed_row, "line " + std::to_string(line_no) + ": bad " +
                                         std::string(what) + " '" + cell + "'");
  }
  return value;
}

std::string format_time(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Reads a line and drops a trailing '\r' so CRLF files parse like LF files.
bool getline_norm(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

const std::array<std::string, 8> kItemColumns = {
    "PHQ8_NoInterest", "PHQ8_Depressed",     "PHQ8_Sleep",  "PHQ8_Tired",
    "PHQ8_Appetite",   "PHQ8_Failure",       "PHQ8_Concentrating", "PHQ8_Moving"};

}  // namespace

std::string trim(std::string_view s) {
  const std::size_t first = s.find_first_not_of(kWhitespace);
  if (first == std::string_view::npos) return {};
  const std::size_t last = s.find_last_not_of(kWhitespace);
  return std::string(s.substr(first, last - first + 1));
}

const char* errc_name(errc code) noexcept {
  switch (code) {
    case errc::malformed_row: return "MalformedRow";
    case errc::unknown_speaker: return "UnknownSpeaker";
    case errc::empty_file: return "EmptyFile";
    case errc::inconsistent_label: return "InconsistentLabel";
    case errc::missing_label: return "MissingLabel";
    case errc::overlapping_splits: return "OverlappingSplits";
    case errc::missing_document: return "MissingDocument";
    case errc::unknown_preset: return "UnknownPreset";
    case errc::invalid_template: return "InvalidTemplate";
    case errc::token_budget_exceeded: return "TokenBudgetExceeded";
    case errc::score_out_of_range: return "ScoreOutOfRange";
    case errc::threshold_out_of_range: return "ThresholdOutOfRange";
    case errc::degenerate_classes: return "DegenerateClasses";
    case errc::insufficient_data: return "InsufficientData";
    case errc::empty_input: return "EmptyInput";
    case errc::duplicate_fingerprint: return "DuplicateFingerprint";
    case errc::config_error: return "ConfigError";
    case errc::io_error: return "IoError";
  }
  return "Error";
}

const char* split_name_str(split_name s) noexcept {
  switch (s) {
    case split_name::train: return "train";
    case split_name::dev: return "dev";
    case split_name::test: return "test";
  }
  return "?";
}

Transcript parse_transcript_file(std::istream& raw, int participant_id) {
  std::string line;
  if (!getline_norm(raw, line)) throw error(errc::empty_file, "no content");

  // Header is required; accept any casing of the canonical column names.
  {
    auto header = split(line, '\t');
    if (header.size() != 4 || trim(header[0]).find("start") == std::string::npos) {
      throw error(errc::malformed_row, "bad header: '" + line + "'");
    }
  }

  Transcript t;
  t.participant_id = participant_id;
  std::size_t line_no = 1;
  while (getline_norm(raw, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split(line, '\t');
    if (cells.size() != 4) {
      throw error(errc::malformed_row, "line " + std::to_string(line_no) + ": expected 4 columns, got " +
                                           std::to_string(cells.size()));
    }
    Utterance u;
    u.start_s = parse_time(cells[0], line_no);
    u.stop_s = parse_time(cells[1], line_no);
    if (u.stop_s < u.start_s) {
      throw error(errc::malformed_row, "line " + std::to_string(line_no) + ": stop_time before start_time");
    }
    const std::string speaker = trim(cells[2]);
    if (speaker == "Ellie") {
      u.speaker = speaker_role::interviewer;
    } else if (speaker == "Participant") {
      u.speaker = speaker_role::participant;
    } else {
      throw error(errc::unknown_speaker, "line " + std::to_string(line_no) + ": '" + speaker + "'");
    }
    u.text = cells[3];
    t.utterances.push_back(std::move(u));
  }
  if (t.utterances.empty()) throw error(errc::empty_file, "header only, no data rows");

  std::stable_sort(t.utterances.begin(), t.utterances.end(),
                   [](const Utterance& a, const Utterance& b) { return a.start_s < b.start_s; });
  return t;
}

std::string serialize_transcript(const Transcript& t) {
  std::string out = "start_time\tstop_time\tspeaker\tvalue\n";
  for (const auto& u : t.utterances) {
    out += format_time(u.start_s);
    out += '\t';
    out += format_time(u.stop_s);
    out += '\t';
    out += u.speaker == speaker_role::interviewer ? "Ellie" : "Participant";
    out += '\t';
    out += u.text;
    out += '\n';
  }
  return out;
}

JointDialogue extract_participant_text(const Transcript& t) {
  JointDialogue jd;
  jd.participant_id = t.participant_id;
  for (const auto& u : t.utterances) {
    if (u.speaker != speaker_role::participant) continue;
    const std::string cleaned = trim(u.text);
    if (cleaned.empty()) continue;  // whitespace-only turns carry no signal
    if (jd.utterance_count > 0) jd.text += ' ';
    jd.text += cleaned;
    jd.text += "./";
    ++jd.utterance_count;
  }
  return jd;
}

std::vector<LabelRecord> load_labels(std::istream& raw) {
  std::string line;
  if (!getline_norm(raw, line)) throw error(errc::empty_file, "no content");

  auto header = split(line, ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;

  auto require = [&](const char* name) {
    auto it = col.find(name);
    if (it == col.end()) throw error(errc::malformed_row, std::string("missing column ") + name);
    return it->second;
  };
  const std::size_t id_col = require("Participant_ID");
  const std::size_t binary_col = require("PHQ8_Binary");
  const std::size_t total_col = require("PHQ8_Score");

  bool has_items = true;
  std::array<std::size_t, 8> item_cols{};
  for (std::size_t i = 0; i < 8; ++i) {
    auto it = col.find(kItemColumns[i]);
    if (it == col.end()) {
      has_items = false;
      break;
    }
    item_cols[i] = it->second;
  }

  std::vector<LabelRecord> records;
  std::size_t line_no = 1;
  while (getline_norm(raw, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    const std::size_t needed = std::max({id_col, binary_col, total_col});
    if (cells.size() <= needed) {
      throw error(errc::malformed_row, "line " + std::to_string(line_no) + ": too few columns");
    }
    LabelRecord rec;
    rec.participant_id = parse_int(cells[id_col], line_no, "participant id");
    rec.phq8_binary = parse_int(cells[binary_col], line_no, "binary label");
    rec.phq8_total = parse_int(cells[total_col], line_no, "total score");
    if (rec.participant_id <= 0) {
      throw error(errc::malformed_row, "line " + std::to_string(line_no) + ": non-positive id");
    }
    if (rec.phq8_total < 0 || rec.phq8_total > kPhq8Max) {
      throw error(errc::inconsistent_label, "line " + std::to_string(line_no) + ": total " +
                                                std::to_string(rec.phq8_total) + " outside 0..24");
    }
    const int expected_binary = rec.phq8_total >= kPhq8PositiveCutoff ? 1 : 0;
    if (rec.phq8_binary != expected_binary) {
      throw error(errc::inconsistent_label,
                  "line " + std::to_string(line_no) + ": binary " + std::to_string(rec.phq8_binary) +
                      " disagrees with total " + std::to_string(rec.phq8_total));
    }
    if (has_items && cells.size() > *std::max_element(item_cols.begin(), item_cols.end())) {
      std::array<int, 8> items{};
      int sum = 0;
      bool all_present = true;
      for (std::size_t i = 0; i < 8; ++i) {
        if (trim(cells[item_cols[i]]).empty()) {
          all_present = false;
          break;
        }
        items[i] = parse_int(cells[item_cols[i]], line_no, "item score");
        if (items[i] < 0 || items[i] > 3) {
          throw error(errc::inconsistent_label,
                      "line " + std::to_string(line_no) + ": item score outside 0..3");
        }
        sum += items[i];
      }
      if (all_present) {
        if (sum != rec.phq8_total) {
          throw error(errc::inconsistent_label, "line " + std::to_string(line_no) + ": items sum " +
                                                    std::to_string(sum) + " != total " +
                                                    std::to_string(rec.phq8_total));
        }
        rec.item_scores = items;
      }
    }
    records.push_back(rec);
  }
  return records;
}

DatasetSplit load_split(std::istream& raw, split_name name) {
  DatasetSplit s;
  s.name = name;
  std::string line;
  std::size_t line_no = 0;
  while (getline_norm(raw, line)) {
    ++line_no;
    const std::string cell = trim(line);
    if (cell.empty()) continue;
    const int id = parse_int(cell, line_no, "participant id");
    if (id <= 0) throw error(errc::malformed_row, "line " + std::to_string(line_no) + ": non-positive id");
    s.participant_ids.insert(id);
  }
  return s;
}

void validate_splits(const std::vector<DatasetSplit>& splits) {
  std::map<int, split_name> seen;
  for (const auto& s : splits) {
    for (int id : s.participant_ids) {
      auto [it, inserted] = seen.emplace(id, s.name);
      if (!inserted) {
        throw error(errc::overlapping_splits,
                    "participant " + std::to_string(id) + " in both " +
                        split_name_str(it->second) + " and " + split_name_str(s.name));
      }
    }
  }
}

CohortSummary summarize_cohort(const std::vector<LabelRecord>& labels, const DatasetSplit* split) {
  CohortSummary cs;
  std::set<int> seen;
  for (const auto& rec : labels) {
    if (split && !split->participant_ids.count(rec.participant_id)) continue;
    seen.insert(rec.participant_id);
    ++cs.n_total;
    if (rec.phq8_total >= kPhq8PositiveCutoff) {
      ++cs.n_positive;
    } else {
      ++cs.n_negative;
    }
  }
  if (split) {
    for (int id : split->participant_ids) {
      if (!seen.count(id)) {
        throw error(errc::missing_label, "participant " + std::to_string(id) + " has no label");
      }
    }
  }
  if (cs.n_negative == 0) {
    cs.ratio = std::numeric_limits<double>::quiet_NaN();
  } else {
    cs.ratio = std::round(100.0 * static_cast<double>(cs.n_positive) /
                          static_cast<double>(cs.n_negative)) /
               100.0;
  }
  return cs;
}

std::size_t count_tokens(std::string_view text, const TokenizerSpec& tokenizer) {
  if (tokenizer.fn) return tokenizer.fn(text);
  // whitespace-4per3: word count scaled by 4/3, rounded up.
  std::size_t words = 0;
  bool in_word = false;
  for (char c : text) {
    const bool ws = kWhitespace.find(c) != std::string_view::npos;
    if (!ws && !in_word) ++words;
    in_word = !ws;
  }
  return (words * 4 + 2) / 3;
}

std::vector<HistogramBin> token_histogram(const std::vector<JointDialogue>& dialogues,
                                          std::size_t bin_width, const TokenizerSpec& tokenizer) {
  if (bin_width == 0) throw error(errc::config_error, "bin_width must be positive");
  if (dialogues.empty()) return {};
  std::vector<std::size_t> counts;
  counts.reserve(dialogues.size());
  std::size_t max_count = 0;
  for (const auto& d : dialogues) {
    counts.push_back(count_tokens(d.text, tokenizer));
    max_count = std::max(max_count, counts.back());
  }
  std::vector<HistogramBin> bins(max_count / bin_width + 1);
  for (std::size_t i = 0; i < bins.size(); ++i) bins[i].bin_start = i * bin_width;
  for (std::size_t c : counts) ++bins[c / bin_width].count;
  return bins;
}

std::string dialogues_to_csv(const std::vector<JointDialogue>& dialogues) {
  std::string out = "participant_id,text\n";
  for (const auto& d : dialogues) {
    out += std::to_string(d.participant_id);
    out += ',';
    const bool needs_quotes = d.text.find_first_of(",\"\n") != std::string::npos;
    if (needs_quotes) {
      out += '"';
      for (char c : d.text) {
        if (c == '"') out += '"';
        out += c;
      }
      out += '"';
    } else {
      out += d.text;
    }
    out += '\n';
  }
  return out;
}

}  // namespace prescreen

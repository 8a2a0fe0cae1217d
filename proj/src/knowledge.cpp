#include "prescreen/knowledge.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace prescreen {

namespace {

const std::map<std::string, std::vector<doc_kind>> kPresets = {
    {"no-background", {}},
    {"phq8", {doc_kind::phq8_criteria}},
    {"dsm5", {doc_kind::dsm5_criteria}},
    {"dsm5-phq8", {doc_kind::phq8_criteria, doc_kind::dsm5_criteria}},
    {"enhanced",
     {doc_kind::phq8_criteria, doc_kind::dsm5_criteria, doc_kind::data_description,
      doc_kind::training_examples}},
};

const char* default_title(doc_kind k) {
  switch (k) {
    case doc_kind::phq8_criteria: return "PHQ-8 Screening Criteria";
    case doc_kind::dsm5_criteria: return "DSM-5 Diagnostic Criteria";
    case doc_kind::data_description: return "Dataset Description";
    case doc_kind::training_examples: return "Worked Examples";
  }
  return "Background";
}

std::string read_file(const std::filesystem::path& path, errc on_failure) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(on_failure, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

constexpr std::string_view kDocsSlot = "{docs}";
constexpr std::string_view kParticipantsSlot = "{participants}";
constexpr std::string_view kScoreSlot = "{external_score}";

std::string replace_all(std::string text, std::string_view slot, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = text.find(slot, pos)) != std::string::npos) {
    text.replace(pos, slot.size(), value);
    pos += value.size();
  }
  return text;
}

void check_placeholders(const std::string& tmpl, const char* name,
                        const std::set<std::string>& allowed,
                        const std::set<std::string>& required) {
  static const std::regex slot_re{R"(\{([a-z_]+)\})"};
  std::set<std::string> seen;
  auto begin = std::sregex_iterator(tmpl.begin(), tmpl.end(), slot_re);
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const std::string slot = (*it)[1].str();
    if (!allowed.count(slot)) {
      throw error(errc::invalid_template,
                  std::string(name) + " template: placeholder {" + slot + "} is never resolved");
    }
    seen.insert(slot);
  }
  for (const auto& slot : required) {
    if (!seen.count(slot)) {
      throw error(errc::invalid_template,
                  std::string(name) + " template: missing required placeholder {" + slot + "}");
    }
  }
}

std::string docs_block(const BackgroundConfig& cfg) {
  std::string block;
  for (const auto& doc : cfg.docs) {
    block += "## " + doc.title + "\n\n" + doc.body;
    if (block.back() != '\n') block += '\n';
    block += '\n';
  }
  if (!block.empty() && block.back() == '\n') block.pop_back();
  return block;
}

std::string participants_block(std::span<const JointDialogue> dialogues) {
  std::string block;
  for (const auto& d : dialogues) {
    if (!block.empty()) block += "\n\n";
    block += "Participant " + std::to_string(d.participant_id) + ":\n" + d.text;
  }
  return block;
}

AssembledPrompt assemble(const BackgroundConfig& cfg, const PromptBundle& bundle,
                         const std::string& instructions,
                         std::span<const JointDialogue> dialogues, const PromptLimits& limits) {
  if (dialogues.empty()) throw error(errc::config_error, "no dialogues to assemble");
  if (dialogues.size() > limits.max_batch) {
    throw error(errc::config_error, "batch of " + std::to_string(dialogues.size()) +
                                        " exceeds limit " + std::to_string(limits.max_batch));
  }
  bundle.validate();

  AssembledPrompt prompt;
  const std::string docs = docs_block(cfg);
  const bool docs_in_user = instructions.find(kDocsSlot) != std::string::npos;

  prompt.system_text = bundle.system_preamble;
  if (!docs.empty() && !docs_in_user) {
    if (!prompt.system_text.empty()) prompt.system_text += "\n\n";
    prompt.system_text += docs;
  }
  prompt.user_text = replace_all(instructions, kDocsSlot, docs);
  prompt.user_text = replace_all(prompt.user_text, kParticipantsSlot,
                                 participants_block(dialogues));

  if (limits.token_budget > 0) {
    const std::size_t estimated = count_tokens(prompt.full(), limits.tokenizer);
    if (estimated > limits.token_budget) {
      throw error(errc::token_budget_exceeded,
                  std::to_string(estimated) + " estimated tokens exceed budget " +
                      std::to_string(limits.token_budget));
    }
  }
  return prompt;
}

}  // namespace

const std::vector<std::string> kPresetNames = {"no-background", "phq8", "dsm5", "dsm5-phq8",
                                               "enhanced"};

const char* doc_kind_str(doc_kind k) noexcept {
  switch (k) {
    case doc_kind::phq8_criteria: return "phq8";
    case doc_kind::dsm5_criteria: return "dsm5";
    case doc_kind::data_description: return "data_description";
    case doc_kind::training_examples: return "training_examples";
  }
  return "?";
}

BackgroundConfig load_config(const std::string& preset_name,
                             const std::map<doc_kind, std::filesystem::path>& doc_paths) {
  auto preset = kPresets.find(preset_name);
  if (preset == kPresets.end()) {
    throw error(errc::unknown_preset, "'" + preset_name + "' (expected one of: no-background, "
                                          "phq8, dsm5, dsm5-phq8, enhanced)");
  }
  BackgroundConfig cfg;
  cfg.name = preset_name;
  std::vector<doc_kind> kinds = preset->second;
  std::sort(kinds.begin(), kinds.end());
  for (doc_kind kind : kinds) {
    auto path = doc_paths.find(kind);
    if (path == doc_paths.end()) {
      throw error(errc::missing_document, std::string("preset '") + preset_name +
                                              "' needs a " + doc_kind_str(kind) + " document");
    }
    KnowledgeDoc doc;
    doc.kind = kind;
    doc.title = default_title(kind);
    doc.source_path = path->second.string();
    doc.body = read_file(path->second, errc::missing_document);
    if (trim(doc.body).empty()) {
      throw error(errc::missing_document, path->second.string() + " is empty");
    }
    cfg.docs.push_back(std::move(doc));
  }
  return cfg;
}

PromptBundle PromptBundle::defaults() {
  PromptBundle b;
  b.system_preamble =
      "You are a careful clinical-text analyst. You review interview transcripts for "
      "signs of psychological distress and report structured findings. Your output is a "
      "pre-screening aid, not a diagnosis.";

  b.task1_instructions =
      "For each participant transcript below, do two things.\n"
      "1. Assess mental health status: analyze the linguistic indicators of anxiety, "
      "depression, stress, or bipolar disorder, citing the participant's own words where "
      "useful.\n"
      "2. Quantify condition severity on a 7-point scale, where 1 means not at all likely "
      "and 7 means extremely likely that the participant has an ongoing mental health "
      "disorder.\n\n"
      "Begin each participant's assessment with the header \"Participant <id>:\" and close "
      "it with exactly this line:\n"
      "Likelihood of Ongoing Mental Health Disorder: N/7\n\n"
      "{participants}";

  b.stage1_instructions =
      "Analyze the interview transcript below and determine the participant's mental "
      "health status.\n"
      "1. Mental health assessment: explain whether the participant shows signs of a "
      "mental health disorder, citing the transcript passages that support your reasoning "
      "and relating them to the evaluation criteria available to you.\n"
      "2. PHQ-8 score estimation: estimate the participant's PHQ-8 score on the 0-24 "
      "scale. Report it on one line of exactly this form, either as a single integer or "
      "as the eight per-item scores summed in order:\n"
      "Estimated PHQ-8 Score: a+b+c+d+e+f+g+h=T\n\n"
      "{participants}";

  b.stage2_instructions =
      "Break down how you derived the PHQ-8 score for each symptom. For each of the "
      "eight PHQ-8 items, in order, give one line naming the item, the supporting "
      "evidence from the transcript, and \"Score: k\" where k is 0-3. Close with exactly "
      "this line:\n"
      "Total PHQ-8 Score: a+b+c+d+e+f+g+h = T";

  b.stage3_instructions =
      "Another evaluator assigned this participant a PHQ-8 score of {external_score}.\n"
      "1. Agree or disagree: state clearly whether you agree with the assigned score of "
      "{external_score}.\n"
      "2. Explain reasoning: give a detailed explanation for your agreement or "
      "disagreement.\n"
      "3. Reanalyze and discuss: reanalyze the PHQ-8 score, discuss the implications, and "
      "note any discrepancies with your initial assessment. If your final estimate "
      "differs, report it as \"revised PHQ-8 score of T\".";
  return b;
}

PromptBundle PromptBundle::from_dir(const std::filesystem::path& dir) {
  PromptBundle b = defaults();
  if (!std::filesystem::is_directory(dir)) {
    throw error(errc::io_error, "template directory " + dir.string() + " not found");
  }
  auto maybe_load = [&](const char* file, std::string& target) {
    const auto path = dir / file;
    if (std::filesystem::exists(path)) target = read_file(path, errc::io_error);
  };
  maybe_load("system.txt", b.system_preamble);
  maybe_load("task1.txt", b.task1_instructions);
  maybe_load("stage1.txt", b.stage1_instructions);
  maybe_load("stage2.txt", b.stage2_instructions);
  maybe_load("stage3.txt", b.stage3_instructions);
  b.validate();
  return b;
}

void PromptBundle::validate() const {
  check_placeholders(system_preamble, "system", {}, {});
  check_placeholders(task1_instructions, "task1", {"docs", "participants"}, {"participants"});
  check_placeholders(stage1_instructions, "stage1", {"docs", "participants"}, {"participants"});
  check_placeholders(stage2_instructions, "stage2", {}, {});
  check_placeholders(stage3_instructions, "stage3", {"external_score"}, {"external_score"});
  // The task-1 scale endpoints must be stated for replies to be parseable.
  if (task1_instructions.find('7') == std::string::npos ||
      task1_instructions.find('1') == std::string::npos) {
    throw error(errc::invalid_template, "task1 template does not state the 1..7 scale");
  }
}

AssembledPrompt assemble_task1_prompt(const BackgroundConfig& cfg, const PromptBundle& bundle,
                                      std::span<const JointDialogue> dialogues,
                                      const PromptLimits& limits) {
  return assemble(cfg, bundle, bundle.task1_instructions, dialogues, limits);
}

AssembledPrompt assemble_stage1_prompt(const BackgroundConfig& cfg, const PromptBundle& bundle,
                                       const JointDialogue& dialogue,
                                       const PromptLimits& limits) {
  return assemble(cfg, bundle, bundle.stage1_instructions, {&dialogue, 1}, limits);
}

std::string assemble_stage2_prompt(const PromptBundle& bundle) {
  bundle.validate();
  return bundle.stage2_instructions;
}

std::string assemble_stage3_prompt(const PromptBundle& bundle, int external_score) {
  if (external_score < 0 || external_score > kPhq8Max) {
    throw error(errc::score_out_of_range,
                "external score " + std::to_string(external_score) + " outside 0..24");
  }
  bundle.validate();
  return replace_all(bundle.stage3_instructions, kScoreSlot, std::to_string(external_score));
}

}  // namespace prescreen

#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prescreen/errors.hpp"
#include "prescreen/transcript.hpp"

namespace prescreen {

// ---------------------------------------------------------------------------
// Background-knowledge configurations and prompt assembly.
//
// Five presets select which knowledge documents are attached:
//   no-background  {}
//   phq8           {phq8_criteria}
//   dsm5           {dsm5_criteria}
//   dsm5-phq8      {phq8_criteria, dsm5_criteria}
//   enhanced       all four kinds
// Document bodies are user-supplied files; the repo ships short placeholder
// texts for testing only.
// ---------------------------------------------------------------------------

enum class doc_kind { phq8_criteria, dsm5_criteria, data_description, training_examples };

const char* doc_kind_str(doc_kind k) noexcept;

struct KnowledgeDoc {
  doc_kind kind = doc_kind::phq8_criteria;
  std::string title;
  std::string body;  // non-empty
  std::string source_path;
};

struct BackgroundConfig {
  std::string name;
  std::vector<KnowledgeDoc> docs;  // unique kinds, ordered by kind for determinism
};

extern const std::vector<std::string> kPresetNames;

// Throws unknown_preset, missing_document (unreadable or empty file, or a
// required kind with no path).
BackgroundConfig load_config(const std::string& preset_name,
                             const std::map<doc_kind, std::filesystem::path>& doc_paths);

// Prompt templates. Each instruction template is the text of the user
// message; `{docs}` (optional) positions the knowledge block inside it,
// otherwise docs are appended to the system preamble. `{participants}` is
// required in the task-1 and stage-1 templates, `{external_score}` in the
// stage-3 template.
struct PromptBundle {
  std::string system_preamble;
  std::string task1_instructions;
  std::string stage1_instructions;
  std::string stage2_instructions;
  std::string stage3_instructions;

  static PromptBundle defaults();
  // Overrides defaults with any of system.txt, task1.txt, stage1.txt,
  // stage2.txt, stage3.txt found in dir. Throws io_error, invalid_template.
  static PromptBundle from_dir(const std::filesystem::path& dir);

  // Throws invalid_template on unknown placeholders, missing required ones,
  // or a task-1 template that does not state the 1..7 scale.
  void validate() const;
};

struct PromptLimits {
  std::size_t max_batch = 64;
  std::size_t token_budget = 0;  // 0 = unlimited
  TokenizerSpec tokenizer;
};

// A prompt split into the system and user messages it will be sent as.
struct AssembledPrompt {
  std::string system_text;
  std::string user_text;

  // Full prompt in reading order: preamble, docs, instructions, participants.
  std::string full() const {
    return system_text.empty() ? user_text : system_text + "\n\n" + user_text;
  }
};

AssembledPrompt assemble_task1_prompt(const BackgroundConfig& cfg, const PromptBundle& bundle,
                                      std::span<const JointDialogue> dialogues,
                                      const PromptLimits& limits = {});

AssembledPrompt assemble_stage1_prompt(const BackgroundConfig& cfg, const PromptBundle& bundle,
                                       const JointDialogue& dialogue,
                                       const PromptLimits& limits = {});

// Stage 2 continues the stage-1 conversation; no docs or participants.
std::string assemble_stage2_prompt(const PromptBundle& bundle);

// Throws score_out_of_range unless external_score is in 0..24.
std::string assemble_stage3_prompt(const PromptBundle& bundle, int external_score);

}  // namespace prescreen

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prescreen/backend.hpp"
#include "prescreen/knowledge.hpp"
#include "prescreen/parser.hpp"
#include "prescreen/transcript.hpp"

namespace prescreen {

// ---------------------------------------------------------------------------
// Dual-task driver. Task 1 sends batched likelihood prompts; Task 2 runs the
// three-stage assessment as one threaded conversation per participant
// (initial estimate, per-item breakdown, independent review of an external
// score). Any per-participant failure becomes NA; it never aborts the run.
// ---------------------------------------------------------------------------

struct Task1Assessment {
  int participant_id = 0;
  std::optional<int> likelihood;  // 1..7
  std::string rationale;          // the participant's segment of the reply
  std::string raw_reply;
  std::vector<std::string> diagnostics;
};

struct Phq8Estimate {
  std::optional<int> total;  // 0..24
  std::optional<std::array<int, 8>> addends;
  std::string raw_reply;
  std::vector<std::string> diagnostics;
};

struct ItemizedBreakdown {
  std::optional<std::array<int, 8>> item_scores;  // each 0..3
  std::optional<int> total;                       // sum of items when present
  std::string raw_reply;
  std::vector<std::string> diagnostics;
};

struct IndependentReview {
  parser::verdict verdict = parser::verdict::unclear;
  std::optional<int> revised_total;
  int external_score = 0;
  std::string raw_reply;
  std::vector<std::string> diagnostics;
};

struct Task2Session {
  int participant_id = 0;
  Phq8Estimate stage1;
  ItemizedBreakdown stage2;
  IndependentReview stage3;
  std::vector<ChatMessage> transcript;  // the threaded conversation, in order
};

struct RunManifest {
  std::string run_id;
  int task = 1;
  std::string config_name;
  std::string model_id;
  int batch_size = 1;
  std::string started_at;   // ISO 8601 UTC
  std::string finished_at;
  std::string cassette_path;
  std::size_t n_participants = 0;
  std::size_t n_na = 0;  // participants with at least one NA value
};

struct OrchestratorOptions {
  std::string model_id = "gpt-4";
  double temperature = 0.0;
  int batch_size = 1;
  int repair_retries = 1;  // one format-clarification re-ask, then NA
  int max_in_flight = 1;
  PromptLimits limits;
  parser::RuleSet rules = parser::RuleSet::v1();
};

struct Task1Run {
  std::vector<Task1Assessment> assessments;  // input order
  std::vector<CompletionOutcome> outcomes;   // one per request sent
  RunManifest manifest;
};

struct Task2Run {
  std::vector<Task2Session> sessions;  // input order
  std::vector<CompletionOutcome> outcomes;
  RunManifest manifest;
};

// Throws config_error for invalid inputs; model failures surface as NA.
Task1Run run_task1(ChatBackend& backend, const BackgroundConfig& cfg,
                   const PromptBundle& bundle, std::span<const JointDialogue> dialogues,
                   const OrchestratorOptions& options = {});

// external_score comes from the dataset label (0..24).
Task2Session run_task2(ChatBackend& backend, const BackgroundConfig& cfg,
                       const PromptBundle& bundle, const JointDialogue& dialogue,
                       int external_score, const OrchestratorOptions& options = {});

// Per-participant sessions are independent; participants run concurrently up
// to max_in_flight, results collected in input order.
Task2Run run_task2_all(ChatBackend& backend, const BackgroundConfig& cfg,
                       const PromptBundle& bundle, std::span<const JointDialogue> dialogues,
                       const std::map<int, int>& external_scores,
                       const OrchestratorOptions& options = {});

}  // namespace prescreen

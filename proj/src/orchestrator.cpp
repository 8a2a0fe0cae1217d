#include "prescreen/orchestrator.hpp"

#include <chrono>
#include <ctime>
#include <future>
#include <semaphore>
#include <set>
#include <sstream>

namespace prescreen {

namespace {

std::string now_iso8601_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ChatRequest make_request(const std::vector<ChatMessage>& conversation,
                         const OrchestratorOptions& options) {
  ChatRequest req;
  req.model_id = options.model_id;
  req.temperature = options.temperature;
  req.messages = conversation;
  return req;
}

std::vector<ChatMessage> seed_conversation(const AssembledPrompt& prompt) {
  std::vector<ChatMessage> conversation;
  if (!prompt.system_text.empty()) {
    conversation.push_back({chat_role::system, prompt.system_text});
  }
  conversation.push_back({chat_role::user, prompt.user_text});
  return conversation;
}

std::string task1_clarification(const std::vector<int>& missing_ids) {
  std::string ids;
  for (std::size_t i = 0; i < missing_ids.size(); ++i) {
    if (i > 0) ids += ", ";
    ids += std::to_string(missing_ids[i]);
  }
  return "I could not extract a score for participant(s) " + ids +
         ". For each of them, restate your assessment under the header \"Participant "
         "<id>:\" and close it with exactly this line:\n"
         "Likelihood of Ongoing Mental Health Disorder: N/7";
}

constexpr const char* kStage1Clarification =
    "Your previous reply did not contain a parseable score line. Restate your estimate "
    "on one line of exactly this form, either as a single integer or as the eight "
    "per-item scores summed in order:\n"
    "Estimated PHQ-8 Score: a+b+c+d+e+f+g+h=T";

constexpr const char* kStage2Clarification =
    "Your previous reply did not contain a parseable breakdown. Give one \"Score: k\" "
    "line per PHQ-8 item (eight in total, each k between 0 and 3) and close with "
    "exactly this line:\n"
    "Total PHQ-8 Score: a+b+c+d+e+f+g+h = T";

std::string stage3_clarification(int external_score) {
  return "Please state explicitly whether you agree or disagree with the assigned PHQ-8 "
         "score of " +
         std::to_string(external_score) +
         ", and if your final estimate differs, report it as \"revised PHQ-8 score of T\".";
}

// Asks once, then re-asks with a format clarification while the parse keeps
// missing, up to repair_retries extra attempts. Non-ok outcomes end the stage
// immediately: timeouts and transport failures are data, not retryable here.
// try_parse returns true once it has extracted a value from the reply.
bool converse_with_repair(ChatBackend& backend, std::vector<ChatMessage>& conversation,
                          const OrchestratorOptions& options, const std::string& clarification,
                          const std::function<bool(const std::string&)>& try_parse,
                          std::vector<CompletionOutcome>& outcome_log,
                          std::vector<std::string>& diagnostics, std::string& last_reply) {
  for (int attempt = 0; attempt <= options.repair_retries; ++attempt) {
    if (attempt > 0) conversation.push_back({chat_role::user, clarification});
    const CompletionOutcome out = backend.complete(make_request(conversation, options));
    outcome_log.push_back(out);
    if (!out.ok()) {
      diagnostics.push_back(std::string(completion_status_str(out.status)) + ": " + out.error);
      return false;
    }
    if (out.response.content.empty()) {
      diagnostics.push_back("empty reply");
      continue;
    }
    conversation.push_back({chat_role::assistant, out.response.content});
    last_reply = out.response.content;
    if (try_parse(out.response.content)) return true;
    if (attempt < options.repair_retries) {
      diagnostics.push_back("reply unparsable, re-asking with format clarification");
    }
  }
  return false;
}

}  // namespace

Task1Run run_task1(ChatBackend& backend, const BackgroundConfig& cfg, const PromptBundle& bundle,
                   std::span<const JointDialogue> dialogues,
                   const OrchestratorOptions& options) {
  if (options.batch_size < 1) throw error(errc::config_error, "batch_size must be >= 1");

  Task1Run run;
  run.manifest.task = 1;
  run.manifest.config_name = cfg.name;
  run.manifest.model_id = options.model_id;
  run.manifest.batch_size = options.batch_size;
  run.manifest.started_at = now_iso8601_utc();
  run.manifest.n_participants = dialogues.size();

  std::vector<std::span<const JointDialogue>> batches;
  for (std::size_t i = 0; i < dialogues.size();
       i += static_cast<std::size_t>(options.batch_size)) {
    batches.push_back(dialogues.subspan(
        i, std::min<std::size_t>(options.batch_size, dialogues.size() - i)));
  }

  struct BatchResult {
    std::vector<Task1Assessment> assessments;
    std::vector<CompletionOutcome> outcomes;
  };

  auto run_batch = [&](std::span<const JointDialogue> batch) {
    BatchResult result;
    std::vector<int> ids;
    for (const auto& d : batch) ids.push_back(d.participant_id);

    std::map<int, Task1Assessment> by_id;
    for (int id : ids) by_id[id].participant_id = id;

    const AssembledPrompt prompt = assemble_task1_prompt(cfg, bundle, batch, options.limits);
    std::vector<ChatMessage> conversation = seed_conversation(prompt);

    std::vector<int> missing = ids;
    for (int attempt = 0; attempt <= options.repair_retries && !missing.empty(); ++attempt) {
      if (attempt > 0) {
        conversation.push_back({chat_role::user, task1_clarification(missing)});
      }
      const CompletionOutcome out = backend.complete(make_request(conversation, options));
      result.outcomes.push_back(out);
      if (!out.ok()) {
        for (int id : missing) {
          by_id[id].diagnostics.push_back(
              std::string(completion_status_str(out.status)) + ": " + out.error);
        }
        break;
      }
      if (out.response.content.empty()) {
        for (int id : missing) by_id[id].diagnostics.push_back("empty reply");
        continue;
      }
      conversation.push_back({chat_role::assistant, out.response.content});

      auto parsed = parser::parse_likelihood(out.response.content, missing, options.rules);
      const std::string stripped = parser::strip_emphasis(out.response.content);
      auto segments = parser::segment_by_participant(stripped, missing);

      std::vector<int> still_missing;
      for (int id : missing) {
        auto& assessment = by_id[id];
        assessment.raw_reply = out.response.content;
        auto& outcome = parsed.at(id);
        for (const auto& d : outcome.diagnostics) assessment.diagnostics.push_back(d);
        if (auto seg = segments.find(id); seg != segments.end()) {
          assessment.rationale = trim(seg->second);
        } else if (missing.size() == 1) {
          assessment.rationale = trim(stripped);
        }
        if (outcome.value) {
          assessment.likelihood = outcome.value;
        } else {
          still_missing.push_back(id);
        }
      }
      missing = std::move(still_missing);
    }

    for (int id : ids) result.assessments.push_back(std::move(by_id[id]));
    return result;
  };

  // Batches are independent; run them concurrently up to max_in_flight and
  // collect in input order.
  std::vector<BatchResult> results(batches.size());
  if (options.max_in_flight <= 1 || batches.size() <= 1) {
    for (std::size_t i = 0; i < batches.size(); ++i) results[i] = run_batch(batches[i]);
  } else {
    std::counting_semaphore<> gate(options.max_in_flight);
    std::vector<std::future<void>> futures;
    futures.reserve(batches.size());
    for (std::size_t i = 0; i < batches.size(); ++i) {
      futures.push_back(std::async(std::launch::async, [&, i] {
        gate.acquire();
        results[i] = run_batch(batches[i]);
        gate.release();
      }));
    }
    for (auto& f : futures) f.get();
  }

  for (auto& r : results) {
    for (auto& a : r.assessments) {
      if (!a.likelihood) ++run.manifest.n_na;
      run.assessments.push_back(std::move(a));
    }
    for (auto& o : r.outcomes) run.outcomes.push_back(std::move(o));
  }
  run.manifest.finished_at = now_iso8601_utc();
  return run;
}

namespace {

Task2Session run_task2_impl(ChatBackend& backend, const BackgroundConfig& cfg,
                            const PromptBundle& bundle, const JointDialogue& dialogue,
                            int external_score, const OrchestratorOptions& options,
                            std::vector<CompletionOutcome>& outcome_log) {
  Task2Session session;
  session.participant_id = dialogue.participant_id;
  session.stage3.external_score = external_score;

  // Stage 1: initial analysis and PHQ-8 estimate.
  const AssembledPrompt stage1 = assemble_stage1_prompt(cfg, bundle, dialogue, options.limits);
  session.transcript = seed_conversation(stage1);
  converse_with_repair(
      backend, session.transcript, options, kStage1Clarification,
      [&](const std::string& reply) {
        auto parsed = parser::parse_phq8_total(reply, options.rules);
        for (const auto& d : parsed.diagnostics) session.stage1.diagnostics.push_back(d);
        if (!parsed.value) return false;
        session.stage1.total = parsed.value->total;
        session.stage1.addends = parsed.value->addends;
        return true;
      },
      outcome_log, session.stage1.diagnostics, session.stage1.raw_reply);

  // Stage 2: per-item breakdown, appended to the same conversation.
  session.transcript.push_back({chat_role::user, assemble_stage2_prompt(bundle)});
  converse_with_repair(
      backend, session.transcript, options, kStage2Clarification,
      [&](const std::string& reply) {
        auto parsed = parser::parse_item_breakdown(reply, options.rules);
        for (const auto& d : parsed.diagnostics) session.stage2.diagnostics.push_back(d);
        if (!parsed.value) return false;
        session.stage2.item_scores = parsed.value->item_scores;
        session.stage2.total = parsed.value->total;
        return true;
      },
      outcome_log, session.stage2.diagnostics, session.stage2.raw_reply);

  // Stage 3: independent review of the externally assigned score. An unclear
  // verdict counts as a parse miss and triggers the same repair re-ask.
  session.transcript.push_back(
      {chat_role::user, assemble_stage3_prompt(bundle, external_score)});
  converse_with_repair(
      backend, session.transcript, options, stage3_clarification(external_score),
      [&](const std::string& reply) {
        auto parsed = parser::parse_verdict(reply, options.rules);
        for (const auto& d : parsed.diagnostics) session.stage3.diagnostics.push_back(d);
        session.stage3.verdict = parsed.value->decision;
        session.stage3.revised_total = parsed.value->revised_total;
        return parsed.value->decision != parser::verdict::unclear;
      },
      outcome_log, session.stage3.diagnostics, session.stage3.raw_reply);
  return session;
}

}  // namespace

Task2Session run_task2(ChatBackend& backend, const BackgroundConfig& cfg,
                       const PromptBundle& bundle, const JointDialogue& dialogue,
                       int external_score, const OrchestratorOptions& options) {
  std::vector<CompletionOutcome> discarded;
  return run_task2_impl(backend, cfg, bundle, dialogue, external_score, options, discarded);
}

Task2Run run_task2_all(ChatBackend& backend, const BackgroundConfig& cfg,
                       const PromptBundle& bundle, std::span<const JointDialogue> dialogues,
                       const std::map<int, int>& external_scores,
                       const OrchestratorOptions& options) {
  for (const auto& d : dialogues) {
    if (!external_scores.count(d.participant_id)) {
      throw error(errc::missing_label,
                  "no external score for participant " + std::to_string(d.participant_id));
    }
  }

  Task2Run run;
  run.manifest.task = 2;
  run.manifest.config_name = cfg.name;
  run.manifest.model_id = options.model_id;
  run.manifest.batch_size = 1;  // task 2 is one conversation per participant
  run.manifest.started_at = now_iso8601_utc();
  run.manifest.n_participants = dialogues.size();

  std::vector<Task2Session> sessions(dialogues.size());
  std::vector<std::vector<CompletionOutcome>> logs(dialogues.size());
  auto one = [&](std::size_t i) {
    sessions[i] = run_task2_impl(backend, cfg, bundle, dialogues[i],
                                 external_scores.at(dialogues[i].participant_id), options,
                                 logs[i]);
  };
  if (options.max_in_flight <= 1 || dialogues.size() <= 1) {
    for (std::size_t i = 0; i < dialogues.size(); ++i) one(i);
  } else {
    std::counting_semaphore<> gate(options.max_in_flight);
    std::vector<std::future<void>> futures;
    futures.reserve(dialogues.size());
    for (std::size_t i = 0; i < dialogues.size(); ++i) {
      futures.push_back(std::async(std::launch::async, [&, i] {
        gate.acquire();
        one(i);
        gate.release();
      }));
    }
    for (auto& f : futures) f.get();
  }

  for (std::size_t i = 0; i < sessions.size(); ++i) {
    auto& s = sessions[i];
    const bool any_na = !s.stage1.total.has_value() || !s.stage2.item_scores.has_value() ||
                        s.stage3.verdict == parser::verdict::unclear;
    if (any_na) ++run.manifest.n_na;
    run.sessions.push_back(std::move(s));
    for (auto& o : logs[i]) run.outcomes.push_back(std::move(o));
  }
  run.manifest.finished_at = now_iso8601_utc();
  return run;
}

}  // namespace prescreen

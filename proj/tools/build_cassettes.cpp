// Regenerates fixtures/cassettes/replay.jsonl from the committed fixture
// dataset and reply texts. The replies are fed through the real orchestrator
// via a scripted backend and recorded, so cassette fingerprints always match
// what an actual replay run will request. Rerun after changing transcripts,
// knowledge docs, or prompt templates:
//
//   prescreen-build-cassettes <fixtures_dir>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "prescreen/backend.hpp"
#include "prescreen/knowledge.hpp"
#include "prescreen/orchestrator.hpp"
#include "prescreen/transcript.hpp"

namespace fs = std::filesystem;
using namespace prescreen;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(errc::io_error, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

JointDialogue load_dialogue(const fs::path& transcripts_dir, int id) {
  std::ifstream in(transcripts_dir / (std::to_string(id) + "_TRANSCRIPT"));
  return extract_participant_text(parse_transcript_file(in, id));
}

// Synthetic three-stage replies for the non-recorded participants. 306 uses
// the recorded texts plus an intentionally unparsable stage 2 (and a failed
// repair), which keeps one NA path in the shipped end-to-end fixtures.
std::vector<ScriptedReply> task2_script(const fs::path& replies) {
  std::vector<ScriptedReply> script;
  auto add = [&](std::string content) { script.push_back({std::move(content), 0.0}); };

  // 300 (external score 3)
  add("The participant reports a steady routine, regular sleep, and active social ties. "
      "Work deadlines cause brief frustration that resolves once projects ship.\n"
      "Estimated PHQ-8 Score: 0+0+1+0+0+0+1+0=2\n"
      "Overall the transcript shows little evidence of a depressive disorder.");
  add("1. Little interest or pleasure: hobbies are active (hiking, cooking). Score: 0\n"
      "2. Feeling down or hopeless: brief frustration only. Score: 0\n"
      "3. Sleep trouble: an occasional late night before deadlines. Score: 1\n"
      "4. Fatigue: none reported. Score: 0\n"
      "5. Appetite change: none reported. Score: 0\n"
      "6. Feeling bad about self: none reported. Score: 0\n"
      "7. Concentration trouble: transient, deadline-linked. Score: 1\n"
      "8. Psychomotor change: none observed. Score: 0\n"
      "Total PHQ-8 Score: 0+0+1+0+0+0+1+0 = 2");
  add("The assigned PHQ-8 score of 3 is close to my own reading of the transcript. "
      "I agree with the assigned score of 3; the one-point difference falls within "
      "ordinary scoring variation for sleep and concentration.");

  // 306 (external score 5): recorded stage 1 and stage 3, dead stage 2.
  add(slurp(replies / "stage1.txt"));
  add("I am unable to break the assessment down item by item for this transcript.");
  add("I still cannot provide a per-item breakdown beyond my overall impression.");
  add(slurp(replies / "stage3.txt"));

  // 308 (external score 16)
  add("The participant describes job loss, housing instability, bereavement, pervasive "
      "hopelessness, and chronic insomnia. These map onto most questionnaire items at "
      "high frequency.\n"
      "Estimated PHQ-8 Score: 15\n"
      "The picture is consistent with a moderately severe depressive episode.");
  add("1. Little interest or pleasure: no activities mentioned beyond waiting rooms. Score: 2\n"
      "2. Feeling down or hopeless: \"hopeless mostly\". Score: 3\n"
      "3. Sleep trouble: awake until three or four most nights. Score: 2\n"
      "4. Fatigue: daytime exhaustion follows the insomnia. Score: 2\n"
      "5. Appetite change: not directly reported. Score: 1\n"
      "6. Feeling bad about self: ties self-worth to the layoff. Score: 2\n"
      "7. Concentration trouble: \"staring at the ceiling\", scattered answers. Score: 2\n"
      "8. Psychomotor change: slowed speech noted by the interviewer. Score: 1\n"
      "Total PHQ-8 Score: 2+3+2+2+1+2+2+1 = 15");
  add("I agree with the assigned PHQ-8 score of 16. It matches the breadth and frequency "
      "of the symptoms described, and my own estimate differs by a single point.");

  // 309 (external score 12)
  add("The participant alternates between driven late-night activity and days of being "
      "unable to leave the couch, with longstanding low mood and irritability after a "
      "recent separation.\n"
      "Estimated PHQ-8 Score: 2+2+1+2+1+2+1+1=12\n"
      "Mood variability with depressive weight is the dominant pattern.");
  add("1. Little interest or pleasure: withdrawal on low days. Score: 2\n"
      "2. Feeling down or hopeless: \"the blues on and off since i was a kid\". Score: 2\n"
      "3. Sleep trouble: cleaning the house at two a.m. Score: 1\n"
      "4. Fatigue: couch-bound days. Score: 2\n"
      "5. Appetite change: not reported. Score: 1\n"
      "6. Feeling bad about self: guilt after snapping at his brother. Score: 2\n"
      "7. Concentration trouble: restless task-switching. Score: 1\n"
      "8. Psychomotor change: agitation alternating with slowing. Score: 1\n"
      "Total PHQ-8 Score: 2+2+1+2+1+2+1+1 = 12");
  add("Although the assigned score of 12 captures the broad picture, the reported sleep "
      "disruption, fatigue, and agitation point slightly higher. I do not agree with the "
      "assigned score. The revised PHQ-8 score of 14 reflects the transcript more closely.");

  // 311 (external score 20)
  add("The participant reports two psychiatric hospitalizations, auditory hallucinations, "
      "pervasive low mood, social withdrawal, and severe sleep disruption.\n"
      "Estimated PHQ-8 Score: 3+3+2+3+2+3+2+2=20\n"
      "This is a severe presentation needing professional follow-up.");
  add("1. Little interest or pleasure: curtains shut, waiting the day out. Score: 3\n"
      "2. Feeling down or hopeless: \"bad most days\". Score: 3\n"
      "3. Sleep trouble: no sleep after night-time hallucinations. Score: 2\n"
      "4. Fatigue: day-long inactivity. Score: 3\n"
      "5. Appetite change: meals skipped while isolating. Score: 2\n"
      "6. Feeling bad about self: hopeless framing of relapse. Score: 3\n"
      "7. Concentration trouble: loses the thread mid-answer. Score: 2\n"
      "8. Psychomotor change: marked slowing. Score: 2\n"
      "Total PHQ-8 Score: 3+3+2+3+2+3+2+2 = 20");
  add("I agree with the assigned PHQ-8 score of 20; the transcript describes severe, "
      "pervasive symptoms across nearly every questionnaire item.");

  return script;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path fixtures = argc > 1 ? argv[1] : "fixtures";
  try {
    const std::map<doc_kind, fs::path> doc_paths = {
        {doc_kind::phq8_criteria, fixtures / "knowledge" / "phq8.txt"},
        {doc_kind::dsm5_criteria, fixtures / "knowledge" / "dsm5.txt"},
    };
    const BackgroundConfig cfg = load_config("dsm5-phq8", doc_paths);
    const PromptBundle bundle = PromptBundle::defaults();

    const std::vector<int> test_ids = {300, 306, 308, 309, 311};
    std::vector<JointDialogue> dialogues;
    for (int id : test_ids) dialogues.push_back(load_dialogue(fixtures / "transcripts", id));
    const std::map<int, int> externals = {{300, 3}, {306, 5}, {308, 16}, {309, 12}, {311, 20}};

    Cassette cassette;
    OrchestratorOptions opt;
    opt.model_id = "gpt-4";
    opt.batch_size = 5;
    opt.repair_retries = 1;
    opt.max_in_flight = 1;  // keeps the scripted reply order aligned

    {
      ScriptedBackend scripted({{slurp(fixtures / "replies" / "task1_batch.txt"), 0.0}}, 60.0);
      RecordingBackend recorder(scripted, cassette);
      const auto run = run_task1(recorder, cfg, bundle, dialogues, opt);
      if (run.manifest.n_na != 0) {
        throw error(errc::config_error, "task-1 fixture reply failed to parse");
      }
    }
    {
      ScriptedBackend scripted(task2_script(fixtures / "replies"), 60.0);
      RecordingBackend recorder(scripted, cassette);
      const auto run = run_task2_all(recorder, cfg, bundle, dialogues, externals, opt);
      // 306's dead stage 2 is the one intended NA.
      if (run.manifest.n_na != 1) {
        throw error(errc::config_error, "task-2 fixture replies parsed unexpectedly");
      }
    }

    const fs::path out = fixtures / "cassettes" / "replay.jsonl";
    fs::create_directories(out.parent_path());
    cassette.save(out);
    std::cout << "wrote " << out.string() << " (" << cassette.size() << " entries)\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

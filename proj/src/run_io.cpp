#include "prescreen/run_io.hpp"

#include <algorithm>
#include <fstream>

namespace prescreen {

namespace {

using nlohmann::json;

json optional_int(const std::optional<int>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<int> int_or_nullopt(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<int>();
}

json addends_json(const std::optional<std::array<int, 8>>& a) {
  if (!a) return nullptr;
  return json(*a);
}

std::optional<std::array<int, 8>> addends_from_json(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  std::array<int, 8> arr{};
  const auto& src = j[key];
  for (std::size_t i = 0; i < 8; ++i) arr[i] = src.at(i).get<int>();
  return arr;
}

json manifest_json(const RunManifest& m) {
  return json{{"run_id", m.run_id},
              {"task", m.task},
              {"config_name", m.config_name},
              {"model_id", m.model_id},
              {"batch_size", m.batch_size},
              {"started_at", m.started_at},
              {"finished_at", m.finished_at},
              {"cassette_path", m.cassette_path},
              {"n_participants", m.n_participants},
              {"n_na", m.n_na}};
}

json transcript_json(const std::vector<ChatMessage>& transcript) {
  json arr = json::array();
  for (const auto& m : transcript) {
    arr.push_back({{"role", chat_role_str(m.role)}, {"content", m.content}});
  }
  return arr;
}

std::vector<ChatMessage> transcript_from_json(const json& arr) {
  std::vector<ChatMessage> out;
  for (const auto& m : arr) {
    ChatMessage msg;
    const std::string role = m.at("role").get<std::string>();
    msg.role = role == "system"      ? chat_role::system
               : role == "assistant" ? chat_role::assistant
                                     : chat_role::user;
    msg.content = m.at("content").get<std::string>();
    out.push_back(std::move(msg));
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error(errc::io_error, "cannot write " + path.string());
  out << content;
}

void prepare(const RunPaths& paths) {
  std::filesystem::create_directories(paths.raw_dir());
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw error(errc::io_error, "cannot read " + path.string());
  return in;
}

}  // namespace

void write_task1_run(const RunPaths& paths, const Task1Run& run) {
  prepare(paths);
  write_text(paths.manifest_path(), manifest_json(run.manifest).dump(2) + "\n");

  std::string sessions;
  for (const auto& a : run.assessments) {
    json j{{"task", 1},
           {"participant_id", a.participant_id},
           {"likelihood", optional_int(a.likelihood)},
           {"rationale", a.rationale},
           {"raw_reply", a.raw_reply},
           {"diagnostics", a.diagnostics}};
    sessions += j.dump();
    sessions += '\n';
    write_text(paths.raw_dir() / (std::to_string(a.participant_id) + "_task1.txt"),
               a.raw_reply);
  }
  write_text(paths.sessions_path(), sessions);
}

void write_task2_run(const RunPaths& paths, const Task2Run& run) {
  prepare(paths);
  write_text(paths.manifest_path(), manifest_json(run.manifest).dump(2) + "\n");

  std::string sessions;
  for (const auto& s : run.sessions) {
    json j{{"task", 2},
           {"participant_id", s.participant_id},
           {"stage1",
            {{"total", optional_int(s.stage1.total)},
             {"addends", addends_json(s.stage1.addends)},
             {"raw_reply", s.stage1.raw_reply},
             {"diagnostics", s.stage1.diagnostics}}},
           {"stage2",
            {{"item_scores", addends_json(s.stage2.item_scores)},
             {"total", optional_int(s.stage2.total)},
             {"raw_reply", s.stage2.raw_reply},
             {"diagnostics", s.stage2.diagnostics}}},
           {"stage3",
            {{"verdict", parser::verdict_str(s.stage3.verdict)},
             {"revised_total", optional_int(s.stage3.revised_total)},
             {"external_score", s.stage3.external_score},
             {"raw_reply", s.stage3.raw_reply},
             {"diagnostics", s.stage3.diagnostics}}},
           {"transcript", transcript_json(s.transcript)}};
    sessions += j.dump();
    sessions += '\n';
    const std::string id = std::to_string(s.participant_id);
    write_text(paths.raw_dir() / (id + "_stage1.txt"), s.stage1.raw_reply);
    write_text(paths.raw_dir() / (id + "_stage2.txt"), s.stage2.raw_reply);
    write_text(paths.raw_dir() / (id + "_stage3.txt"), s.stage3.raw_reply);
  }
  write_text(paths.sessions_path(), sessions);
}

RunManifest load_manifest(const std::filesystem::path& run_dir) {
  auto in = open_or_throw(run_dir / "manifest.json");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw error(errc::io_error, (run_dir / "manifest.json").string() + ": " + e.what());
  }
  RunManifest m;
  m.run_id = j.value("run_id", "");
  m.task = j.value("task", 1);
  m.config_name = j.value("config_name", "");
  m.model_id = j.value("model_id", "");
  m.batch_size = j.value("batch_size", 1);
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  m.cassette_path = j.value("cassette_path", "");
  m.n_participants = j.value("n_participants", std::size_t{0});
  m.n_na = j.value("n_na", std::size_t{0});
  return m;
}

std::vector<Task1Assessment> load_task1_sessions(const std::filesystem::path& run_dir) {
  auto in = open_or_throw(run_dir / "sessions.jsonl");
  std::vector<Task1Assessment> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.value("task", 1) != 1) {
      throw error(errc::io_error, "expected task-1 sessions in " + run_dir.string());
    }
    Task1Assessment a;
    a.participant_id = j.at("participant_id").get<int>();
    a.likelihood = int_or_nullopt(j, "likelihood");
    a.rationale = j.value("rationale", "");
    a.raw_reply = j.value("raw_reply", "");
    a.diagnostics = j.value("diagnostics", std::vector<std::string>{});
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Task2Session> load_task2_sessions(const std::filesystem::path& run_dir) {
  auto in = open_or_throw(run_dir / "sessions.jsonl");
  std::vector<Task2Session> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.value("task", 2) != 2) {
      throw error(errc::io_error, "expected task-2 sessions in " + run_dir.string());
    }
    Task2Session s;
    s.participant_id = j.at("participant_id").get<int>();
    const json& s1 = j.at("stage1");
    s.stage1.total = int_or_nullopt(s1, "total");
    s.stage1.addends = addends_from_json(s1, "addends");
    s.stage1.raw_reply = s1.value("raw_reply", "");
    s.stage1.diagnostics = s1.value("diagnostics", std::vector<std::string>{});
    const json& s2 = j.at("stage2");
    s.stage2.item_scores = addends_from_json(s2, "item_scores");
    s.stage2.total = int_or_nullopt(s2, "total");
    s.stage2.raw_reply = s2.value("raw_reply", "");
    s.stage2.diagnostics = s2.value("diagnostics", std::vector<std::string>{});
    const json& s3 = j.at("stage3");
    s.stage3.verdict =
        parser::verdict_from_str(s3.value("verdict", "unclear")).value_or(parser::verdict::unclear);
    s.stage3.revised_total = int_or_nullopt(s3, "revised_total");
    s.stage3.external_score = s3.value("external_score", 0);
    s.stage3.raw_reply = s3.value("raw_reply", "");
    s.stage3.diagnostics = s3.value("diagnostics", std::vector<std::string>{});
    if (j.contains("transcript")) s.transcript = transcript_from_json(j["transcript"]);
    out.push_back(std::move(s));
  }
  return out;
}

std::optional<int> stage1_prediction(const Task2Session& s) { return s.stage1.total; }

std::optional<int> stage2_prediction(const Task2Session& s) { return s.stage2.total; }

std::optional<int> stage3_prediction(const Task2Session& s) {
  if (s.stage3.revised_total) return s.stage3.revised_total;
  if (s.stage3.verdict == parser::verdict::agree) return s.stage3.external_score;
  return std::nullopt;
}

nlohmann::json classification_report_json(const ClassificationReport& rep) {
  return json{{"f1", rep.f1},
              {"macro_f1", rep.macro_f1},
              {"accuracy", rep.accuracy},
              {"recall", rep.recall},
              {"precision", rep.precision},
              {"roc_auc", rep.roc_auc},
              {"n", rep.n},
              {"n_excluded", rep.n_excluded},
              {"flags", rep.flags},
              {"rendered",
               {{"f1", format3(rep.f1)},
                {"macro_f1", format3(rep.macro_f1)},
                {"accuracy", format3(rep.accuracy)},
                {"recall", format3(rep.recall)},
                {"precision", format3(rep.precision)},
                {"roc_auc", format3(rep.roc_auc)}}}};
}

nlohmann::json regression_report_json(const RegressionReport& rep) {
  return json{{"mae", rep.mae},
              {"rmse", rep.rmse},
              {"r_squared", rep.r_squared},
              {"n", rep.n},
              {"n_excluded", rep.n_excluded},
              {"flags", rep.flags},
              {"rendered",
               {{"mae", format3(rep.mae)},
                {"rmse", format3(rep.rmse)},
                {"r_squared", format3(rep.r_squared)}}}};
}

std::string comparison_csv(std::vector<ComparisonRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    return a.report.f1 > b.report.f1;
  });
  std::string csv =
      "run_id,config,model,f1,macro_f1,accuracy,recall,precision,roc_auc,n,n_excluded\n";
  for (const auto& row : rows) {
    csv += row.run_id + ',' + row.config_name + ',' + row.model_id + ',' +
           format3(row.report.f1) + ',' + format3(row.report.macro_f1) + ',' +
           format3(row.report.accuracy) + ',' + format3(row.report.recall) + ',' +
           format3(row.report.precision) + ',' + format3(row.report.roc_auc) + ',' +
           std::to_string(row.report.n) + ',' + std::to_string(row.report.n_excluded) + '\n';
  }
  return csv;
}

}  // namespace prescreen

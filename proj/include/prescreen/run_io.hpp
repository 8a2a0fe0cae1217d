#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prescreen/metrics.hpp"
#include "prescreen/orchestrator.hpp"

namespace prescreen {

// ---------------------------------------------------------------------------
// Run-directory persistence:
//   runs/<run_id>/manifest.json
//   runs/<run_id>/raw/<participant_id>_<stage>.txt
//   runs/<run_id>/sessions.jsonl
// Sessions and reports serialize with sorted keys and fixed float handling,
// so identical runs produce byte-identical files.
// ---------------------------------------------------------------------------

struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path manifest_path() const { return root / "manifest.json"; }
  std::filesystem::path sessions_path() const { return root / "sessions.jsonl"; }
  std::filesystem::path raw_dir() const { return root / "raw"; }
};

void write_task1_run(const RunPaths& paths, const Task1Run& run);
void write_task2_run(const RunPaths& paths, const Task2Run& run);

// Throws io_error when the run directory is missing or unreadable.
RunManifest load_manifest(const std::filesystem::path& run_dir);
std::vector<Task1Assessment> load_task1_sessions(const std::filesystem::path& run_dir);
std::vector<Task2Session> load_task2_sessions(const std::filesystem::path& run_dir);

// Task-2 point predictions per stage. Stage 3's final word is the revised
// total when one was given; an agreement without a revision adopts the
// external score.
std::optional<int> stage1_prediction(const Task2Session& s);
std::optional<int> stage2_prediction(const Task2Session& s);
std::optional<int> stage3_prediction(const Task2Session& s);

// Reports carry full-precision values plus the 3-decimal renderings used in
// printed tables.
nlohmann::json classification_report_json(const ClassificationReport& rep);
nlohmann::json regression_report_json(const RegressionReport& rep);

struct ComparisonRow {
  std::string run_id;
  std::string config_name;
  std::string model_id;
  ClassificationReport report;
};

// One CSV row per run, sorted by F1 descending.
std::string comparison_csv(std::vector<ComparisonRow> rows);

}  // namespace prescreen

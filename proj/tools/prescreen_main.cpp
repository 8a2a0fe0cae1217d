// prescreen: reproduce transcript-based mental-health pre-screening runs.
//
// Subcommands wire the pipeline end to end: ingest transcripts into joint
// dialogues, assess them against a chat backend (live, replay, or scripted),
// calibrate the likelihood threshold, and evaluate the full metric suite.
//
// Exit codes: 0 success (NA-bearing runs included), 2 input error, 3 backend
// configuration error.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "prescreen/backend.hpp"
#include "prescreen/knowledge.hpp"
#include "prescreen/metrics.hpp"
#include "prescreen/orchestrator.hpp"
#include "prescreen/run_io.hpp"
#include "prescreen/transcript.hpp"

namespace fs = std::filesystem;
using namespace prescreen;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitBackend = 3;

struct RunConfig {
  fs::path transcripts_dir;
  fs::path labels_file;
  std::map<split_name, fs::path> split_files;
  std::string preset = "no-background";
  std::map<doc_kind, fs::path> doc_paths;
  fs::path templates_dir;
  fs::path backend_spec;
  int batch_size = 1;
  fs::path output_dir = "out";
  unsigned seed = 42;  // reserved for randomized fixture generation
};

// Flat "key = value" document; '#' starts a comment. Data paths resolve
// against the config file's directory, output_dir against the working
// directory.
RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw error(errc::io_error, "cannot read config " + path.string());
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& value) {
    fs::path p(value);
    return p.is_absolute() ? p : base / p;
  };

  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw error(errc::config_error,
                  path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));

    if (key == "transcripts_dir") cfg.transcripts_dir = resolve(value);
    else if (key == "labels") cfg.labels_file = resolve(value);
    else if (key == "split_train") cfg.split_files[split_name::train] = resolve(value);
    else if (key == "split_dev") cfg.split_files[split_name::dev] = resolve(value);
    else if (key == "split_test") cfg.split_files[split_name::test] = resolve(value);
    else if (key == "preset") cfg.preset = value;
    else if (key == "doc_phq8") cfg.doc_paths[doc_kind::phq8_criteria] = resolve(value);
    else if (key == "doc_dsm5") cfg.doc_paths[doc_kind::dsm5_criteria] = resolve(value);
    else if (key == "doc_data_description")
      cfg.doc_paths[doc_kind::data_description] = resolve(value);
    else if (key == "doc_training_examples")
      cfg.doc_paths[doc_kind::training_examples] = resolve(value);
    else if (key == "templates_dir") cfg.templates_dir = resolve(value);
    else if (key == "backend") cfg.backend_spec = resolve(value);
    else if (key == "batch_size" || key == "seed") {
      try {
        if (key == "batch_size") cfg.batch_size = std::stoi(value);
        else cfg.seed = static_cast<unsigned>(std::stoul(value));
      } catch (const std::exception&) {
        throw error(errc::config_error, path.string() + ":" + std::to_string(line_no) +
                                            ": '" + key + "' needs an integer, got '" +
                                            value + "'");
      }
    }
    else if (key == "output_dir") cfg.output_dir = value;
    else {
      throw error(errc::config_error, path.string() + ":" + std::to_string(line_no) +
                                          ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

struct Dataset {
  std::vector<JointDialogue> dialogues;  // ordered by participant id
  std::vector<LabelRecord> labels;
  std::map<int, LabelRecord> labels_by_id;
  std::vector<DatasetSplit> splits;
};

std::vector<std::pair<int, fs::path>> list_transcripts(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw error(errc::io_error, "transcripts directory " + dir.string() + " not found");
  }
  std::vector<std::pair<int, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    const auto underscore = name.find("_TRANSCRIPT");
    if (underscore == std::string::npos || underscore == 0) continue;
    try {
      files.emplace_back(std::stoi(name.substr(0, underscore)), entry.path());
    } catch (const std::exception&) {
      continue;  // not an <id>_TRANSCRIPT file
    }
  }
  if (files.empty()) {
    throw error(errc::empty_file, "no <id>_TRANSCRIPT files in " + dir.string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Dataset load_dataset(const RunConfig& cfg, bool need_labels) {
  Dataset ds;
  for (const auto& [id, path] : list_transcripts(cfg.transcripts_dir)) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error(errc::io_error, "cannot read " + path.string());
    try {
      ds.dialogues.push_back(extract_participant_text(parse_transcript_file(in, id)));
    } catch (const error& e) {
      throw error(e.code(), path.string() + ": " + e.what());
    }
  }

  if (!cfg.labels_file.empty()) {
    std::ifstream in(cfg.labels_file);
    if (!in) throw error(errc::io_error, "cannot read labels " + cfg.labels_file.string());
    ds.labels = load_labels(in);
    for (const auto& rec : ds.labels) ds.labels_by_id[rec.participant_id] = rec;
  } else if (need_labels) {
    throw error(errc::config_error, "this command needs a labels file (config key 'labels')");
  }

  for (const auto& [name, path] : cfg.split_files) {
    std::ifstream in(path);
    if (!in) throw error(errc::io_error, "cannot read split " + path.string());
    ds.splits.push_back(load_split(in, name));
  }
  validate_splits(ds.splits);
  return ds;
}

const DatasetSplit* find_split(const Dataset& ds, const std::string& name) {
  for (const auto& s : ds.splits) {
    if (split_name_str(s.name) == name) return &s;
  }
  return nullptr;
}

std::vector<JointDialogue> select_dialogues(const Dataset& ds, const std::string& split) {
  if (split == "overall") return ds.dialogues;
  const DatasetSplit* s = find_split(ds, split);
  if (s == nullptr) {
    throw error(errc::config_error, "split '" + split + "' is not configured");
  }
  std::vector<JointDialogue> out;
  for (const auto& d : ds.dialogues) {
    if (s->participant_ids.count(d.participant_id)) out.push_back(d);
  }
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error(errc::io_error, "cannot write " + path.string());
  out << content;
}

std::string ratio_str(double ratio) {
  if (std::isnan(ratio)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", ratio);
  return buf;
}

// --- subcommands -----------------------------------------------------------

int cmd_ingest(const RunConfig& cfg) {
  const Dataset ds = load_dataset(cfg, /*need_labels=*/true);
  fs::create_directories(cfg.output_dir);
  const auto csv_path = cfg.output_dir / "dialogues.csv";
  write_file(csv_path, dialogues_to_csv(ds.dialogues));

  std::vector<std::pair<std::string, CohortSummary>> columns;
  columns.emplace_back("overall", summarize_cohort(ds.labels));
  for (const auto& split : ds.splits) {
    columns.emplace_back(split_name_str(split.name), summarize_cohort(ds.labels, &split));
  }

  auto row = [&](const char* label, auto value_of) {
    std::cout << label;
    for (const auto& [name, cs] : columns) {
      std::cout << '\t' << value_of(cs);
    }
    std::cout << '\n';
  };
  std::cout << "cohort";
  for (const auto& [name, cs] : columns) std::cout << '\t' << name;
  std::cout << '\n';
  row("participants", [](const CohortSummary& c) { return std::to_string(c.n_total); });
  row("phq8 >= 10 (A)", [](const CohortSummary& c) { return std::to_string(c.n_positive); });
  row("phq8 < 10 (B)", [](const CohortSummary& c) { return std::to_string(c.n_negative); });
  row("ratio A/B", [](const CohortSummary& c) { return ratio_str(c.ratio); });

  std::cout << "\nwrote " << csv_path.string() << " (" << ds.dialogues.size()
            << " dialogues)\n";
  return 0;
}

int cmd_tokens(const RunConfig& cfg, bool histogram, std::size_t bin_width) {
  Dataset ds = load_dataset(cfg, /*need_labels=*/false);
  if (!histogram) {
    std::cout << "participant\ttokens\n";
    for (const auto& d : ds.dialogues) {
      std::cout << d.participant_id << '\t' << count_tokens(d.text) << '\n';
    }
    return 0;
  }
  const auto bins = token_histogram(ds.dialogues, bin_width);
  std::string csv = "bin_start,count\n";
  std::cout << "tokens\tcount\n";
  for (const auto& b : bins) {
    std::cout << b.bin_start << "-" << b.bin_start + bin_width - 1 << '\t' << b.count << '\n';
    csv += std::to_string(b.bin_start) + ',' + std::to_string(b.count) + '\n';
  }
  fs::create_directories(cfg.output_dir);
  write_file(cfg.output_dir / "token_histogram.csv", csv);
  return 0;
}

struct AssessArgs {
  int task = 1;
  std::string split = "overall";
  std::string run_id;
  std::string backend_override;
  std::string cassette_override;
  bool record = false;
  int batch_size = 0;  // 0 = from config
  std::string preset_override;
};

int cmd_assess(const RunConfig& cfg, const AssessArgs& args) {
  const Dataset ds = load_dataset(cfg, /*need_labels=*/args.task == 2);
  const auto dialogues = select_dialogues(ds, args.split);

  const std::string preset = args.preset_override.empty() ? cfg.preset : args.preset_override;
  const BackgroundConfig background = load_config(preset, cfg.doc_paths);
  const PromptBundle bundle = cfg.templates_dir.empty()
                                  ? PromptBundle::defaults()
                                  : PromptBundle::from_dir(cfg.templates_dir);

  // Backend wiring failures are exit-code-3 territory; everything after this
  // block degrades to NA per participant.
  fs::path spec_path = args.backend_override.empty() ? cfg.backend_spec
                                                     : fs::path(args.backend_override);
  BackendSpec spec;
  std::unique_ptr<ChatBackend> backend;
  Cassette recording;
  try {
    if (spec_path.empty()) {
      throw error(errc::config_error, "no backend spec (config key 'backend' or --backend)");
    }
    spec = BackendSpec::from_json_file(spec_path);
    if (!args.cassette_override.empty() && spec.kind == backend_kind::replay) {
      spec.cassette_path = args.cassette_override;
    }
    backend = make_backend(spec);
  } catch (const error& e) {
    std::cerr << "backend error: " << e.what() << '\n';
    return kExitBackend;
  }

  ChatBackend* effective = backend.get();
  std::unique_ptr<RecordingBackend> recorder;
  if (args.record) {
    if (args.cassette_override.empty()) {
      std::cerr << "backend error: --record needs --cassette <path>\n";
      return kExitBackend;
    }
    recorder = std::make_unique<RecordingBackend>(*backend, recording);
    effective = recorder.get();
  }

  OrchestratorOptions opt;
  opt.model_id = spec.model_id.empty() ? "gpt-4" : spec.model_id;
  opt.batch_size = args.batch_size > 0 ? args.batch_size : cfg.batch_size;
  opt.max_in_flight = spec.max_in_flight;

  std::string run_id = args.run_id;
  if (run_id.empty()) {
    run_id = "task" + std::to_string(args.task) + "-" + preset + "-" + args.split;
  }
  const RunPaths paths{cfg.output_dir / "runs" / run_id};

  std::size_t n_na = 0;
  std::size_t n_participants = dialogues.size();
  if (args.task == 1) {
    Task1Run run = run_task1(*effective, background, bundle, dialogues, opt);
    run.manifest.run_id = run_id;
    run.manifest.cassette_path = spec.cassette_path;
    write_task1_run(paths, run);
    n_na = run.manifest.n_na;
  } else {
    std::map<int, int> externals;
    for (const auto& d : dialogues) {
      auto it = ds.labels_by_id.find(d.participant_id);
      if (it == ds.labels_by_id.end()) {
        std::cerr << "input error: no label (external score) for participant "
                  << d.participant_id << '\n';
        return kExitInput;
      }
      externals[d.participant_id] = it->second.phq8_total;
    }
    Task2Run run = run_task2_all(*effective, background, bundle, dialogues, externals, opt);
    run.manifest.run_id = run_id;
    run.manifest.cassette_path = spec.cassette_path;
    write_task2_run(paths, run);
    n_na = run.manifest.n_na;
  }

  if (args.record) recording.save(args.cassette_override);

  std::cout << "run " << run_id << ": " << n_participants << " participants, " << n_na
            << " with NA results\n"
            << "wrote " << paths.sessions_path().string() << '\n';
  return 0;
}

std::map<int, std::optional<int>> likelihoods_of(const std::vector<Task1Assessment>& as) {
  std::map<int, std::optional<int>> out;
  for (const auto& a : as) out[a.participant_id] = a.likelihood;
  return out;
}

std::map<int, int> binary_labels_for(const Dataset& ds,
                                     const std::map<int, std::optional<int>>& preds) {
  std::map<int, int> labels;
  for (const auto& [id, unused] : preds) {
    auto it = ds.labels_by_id.find(id);
    if (it == ds.labels_by_id.end()) {
      throw error(errc::missing_label, "participant " + std::to_string(id));
    }
    labels[id] = it->second.phq8_binary;
  }
  return labels;
}

int cmd_calibrate(const RunConfig& cfg, const fs::path& run_dir) {
  const Dataset ds = load_dataset(cfg, /*need_labels=*/true);
  const auto manifest = load_manifest(run_dir);
  if (manifest.task != 1) {
    throw error(errc::config_error, "calibrate needs a task-1 run");
  }
  const auto preds = likelihoods_of(load_task1_sessions(run_dir));
  const auto labels = binary_labels_for(ds, preds);
  const auto sweep = threshold_sweep(preds, labels);

  json out{{"best_threshold", sweep.best_threshold}, {"accuracy_by_threshold", json::object()}};
  std::cout << "threshold\taccuracy\n";
  for (const auto& [thr, acc] : sweep.accuracy_by_threshold) {
    std::cout << thr << '\t' << format3(acc) << '\n';
    out["accuracy_by_threshold"][std::to_string(thr)] = acc;
  }
  std::cout << "best threshold: " << sweep.best_threshold << '\n';
  write_file(run_dir / "calibration.json", out.dump(2) + "\n");
  return 0;
}

ClassificationReport task1_report(const Dataset& ds,
                                  const std::map<int, std::optional<int>>& preds,
                                  int threshold) {
  const auto labels = binary_labels_for(ds, preds);
  const auto cr = confusion(binarize(preds, threshold), labels);
  if (cr.cm.n() == 0) {
    ClassificationReport rep;
    rep.n_excluded = cr.n_excluded;
    rep.flags.push_back("empty: all predictions excluded as NA");
    return rep;
  }
  std::map<int, double> scores;
  for (const auto& [id, lik] : preds) {
    if (lik) scores[id] = static_cast<double>(*lik);
  }
  return classification_report(cr, scores, labels);
}

RegressionReport stage_report(const std::map<int, std::optional<int>>& preds,
                              const std::map<int, int>& truths) {
  try {
    return regression_report(preds, truths);
  } catch (const error& e) {
    if (e.code() != errc::insufficient_data) throw;
    RegressionReport rep;
    rep.n_excluded = static_cast<long>(preds.size());
    rep.flags.push_back("empty: all predictions excluded as NA");
    return rep;
  }
}

int cmd_evaluate(const RunConfig& cfg, const fs::path& run_dir, int threshold,
                 std::size_t bin_width) {
  const Dataset ds = load_dataset(cfg, /*need_labels=*/true);
  const auto manifest = load_manifest(run_dir);

  if (manifest.task == 1) {
    const auto preds = likelihoods_of(load_task1_sessions(run_dir));
    const auto rep = task1_report(ds, preds, threshold);
    json out{{"task", 1}, {"threshold", threshold}, {"classification",
                                                     classification_report_json(rep)}};
    write_file(run_dir / "report_task1.json", out.dump(2) + "\n");
    std::cout << "task 1 @ threshold " << threshold << ": f1 " << format3(rep.f1)
              << ", macro-f1 " << format3(rep.macro_f1) << ", accuracy "
              << format3(rep.accuracy) << ", recall " << format3(rep.recall)
              << ", precision " << format3(rep.precision) << ", roc-auc "
              << format3(rep.roc_auc) << ", n_excluded " << rep.n_excluded << '\n';
    return 0;
  }

  const auto sessions = load_task2_sessions(run_dir);
  std::map<int, int> truths;
  std::map<int, std::optional<int>> stage_preds[3];
  for (const auto& s : sessions) {
    auto it = ds.labels_by_id.find(s.participant_id);
    if (it == ds.labels_by_id.end()) {
      throw error(errc::missing_label, "participant " + std::to_string(s.participant_id));
    }
    truths[s.participant_id] = it->second.phq8_total;
    stage_preds[0][s.participant_id] = stage1_prediction(s);
    stage_preds[1][s.participant_id] = stage2_prediction(s);
    stage_preds[2][s.participant_id] = stage3_prediction(s);
  }

  json out{{"task", 2}};
  std::string histogram_csv = "stage,bin_start,count\n";
  for (int stage = 0; stage < 3; ++stage) {
    const auto rep = stage_report(stage_preds[stage], truths);
    const std::string name = "stage" + std::to_string(stage + 1);
    out[name] = regression_report_json(rep);
    std::cout << name << ": mae " << format3(rep.mae) << ", rmse " << format3(rep.rmse)
              << ", r_squared " << format3(rep.r_squared) << ", n " << rep.n
              << ", n_excluded " << rep.n_excluded << '\n';

    // Absolute-difference distribution per stage.
    std::map<std::size_t, std::size_t> bins;
    for (const auto& [id, pred] : stage_preds[stage]) {
      if (!pred) continue;
      const auto diff = static_cast<std::size_t>(std::abs(*pred - truths.at(id)));
      ++bins[diff / bin_width * bin_width];
    }
    for (const auto& [start, count] : bins) {
      histogram_csv += name + ',' + std::to_string(start) + ',' + std::to_string(count) + '\n';
    }
  }
  write_file(run_dir / "report_task2.json", out.dump(2) + "\n");
  write_file(run_dir / "abs_diff_histogram.csv", histogram_csv);
  return 0;
}

int cmd_compare(const RunConfig& cfg, const std::vector<fs::path>& run_dirs, int threshold) {
  const Dataset ds = load_dataset(cfg, /*need_labels=*/true);
  std::vector<ComparisonRow> rows;
  for (const auto& dir : run_dirs) {
    const auto manifest = load_manifest(dir);
    if (manifest.task != 1) {
      throw error(errc::config_error, "compare handles task-1 runs, got " + dir.string());
    }
    const auto preds = likelihoods_of(load_task1_sessions(dir));
    rows.push_back({manifest.run_id, manifest.config_name, manifest.model_id,
                    task1_report(ds, preds, threshold)});
  }
  const std::string csv = comparison_csv(std::move(rows));
  std::cout << csv;
  fs::create_directories(cfg.output_dir);
  write_file(cfg.output_dir / "comparison.csv", csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transcript-based mental-health pre-screening pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir_override;
  app.add_option("--config", config_path, "run configuration file")->required();
  app.add_option("--output-dir", output_dir_override,
                 "override the config's output directory");

  auto* ingest = app.add_subcommand("ingest", "parse transcripts, export joint dialogues");

  auto* tokens = app.add_subcommand("tokens", "token counts of joint dialogues");
  std::size_t bin_width = 200;
  bool histogram = false;
  tokens->add_flag("--histogram", histogram, "bin the counts and export a histogram CSV");
  tokens->add_option("--bin-width", bin_width, "histogram bin width")->check(CLI::PositiveNumber);

  auto* assess = app.add_subcommand("assess", "run task 1 or task 2 against a backend");
  AssessArgs assess_args;
  assess->add_option("--task", assess_args.task, "1 = likelihood, 2 = three-stage PHQ-8")
      ->required()
      ->check(CLI::Range(1, 2));
  assess->add_option("--split", assess_args.split,
                     "participants to assess: overall|train|dev|test");
  assess->add_option("--run-id", assess_args.run_id, "run directory name");
  assess->add_option("--preset", assess_args.preset_override, "background-knowledge preset");
  assess->add_option("--backend", assess_args.backend_override, "backend spec JSON file");
  assess->add_option("--batch-size", assess_args.batch_size, "participants per task-1 prompt");
  assess->add_option("--cassette", assess_args.cassette_override,
                     "cassette path (replay source or --record target)");
  assess->add_flag("--record", assess_args.record, "record live responses into --cassette");

  auto* calibrate = app.add_subcommand("calibrate", "accuracy sweep over thresholds 3..7");
  std::string run_dir;
  calibrate->add_option("--run", run_dir, "task-1 run directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "metric reports for a finished run");
  std::string eval_run;
  int threshold = 5;
  std::size_t diff_bin_width = 1;
  evaluate->add_option("--run", eval_run, "run directory")->required();
  evaluate->add_option("--threshold", threshold, "binarization threshold (3..7)");
  evaluate->add_option("--bin-width", diff_bin_width, "absolute-difference histogram bin width")
      ->check(CLI::PositiveNumber);

  auto* compare = app.add_subcommand("compare", "one metric row per run, sorted by F1");
  std::vector<std::string> compare_runs;
  int compare_threshold = 5;
  compare->add_option("--run", compare_runs, "task-1 run directories")->required();
  compare->add_option("--threshold", compare_threshold, "binarization threshold (3..7)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitInput;
  }

  try {
    RunConfig cfg = load_run_config(config_path);
    if (!output_dir_override.empty()) cfg.output_dir = output_dir_override;
    if (ingest->parsed()) return cmd_ingest(cfg);
    if (tokens->parsed()) return cmd_tokens(cfg, histogram, bin_width);
    if (assess->parsed()) return cmd_assess(cfg, assess_args);
    if (calibrate->parsed()) return cmd_calibrate(cfg, run_dir);
    if (evaluate->parsed()) return cmd_evaluate(cfg, eval_run, threshold, diff_bin_width);
    if (compare->parsed()) {
      std::vector<fs::path> dirs(compare_runs.begin(), compare_runs.end());
      return cmd_compare(cfg, dirs, compare_threshold);
    }
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return 0;
}

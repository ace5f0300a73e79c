#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "qap/analysis.hpp"
#include "qap/dataset_io.hpp"
#include "qap/llm_gateway.hpp"
#include "qap/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitPartialFailures = 2;

int cmd_run(const std::string& config_path, const std::string& mock_script,
            const std::string& output_dir, const std::string& experiment_id) {
  qap::ExperimentConfig config = qap::load_config(config_path);
  if (!output_dir.empty()) config.output_dir = output_dir;
  if (!experiment_id.empty()) config.experiment_id = experiment_id;

  std::shared_ptr<qap::ChatBackend> backend;
  std::shared_ptr<qap::Clock> clock;
  if (!mock_script.empty()) {
    backend = qap::MockBackend::from_script_file(mock_script);
    // Mock runs use a virtual clock so scripted retries do not really sleep.
    clock = std::make_shared<qap::ManualClock>();
  } else {
    if (config.endpoint.empty()) {
      throw qap::ConfigError("config has no endpoint and no --mock script was given");
    }
    backend = std::make_shared<qap::HttpBackend>(config.endpoint, config.api_key_env);
    clock = std::make_shared<qap::SystemClock>();
  }

  qap::RunSummary summary = qap::run_experiment(config, backend, clock);
  std::cout << "experiment " << config.experiment_id << ": " << summary.total_tasks << " tasks, "
            << summary.completed << " completed, " << summary.skipped << " resumed, "
            << summary.failed << " failed\n"
            << "transcripts: " << (summary.experiment_dir / "transcripts.jsonl").string() << "\n";
  return summary.failed > 0 ? kExitPartialFailures : kExitOk;
}

int cmd_grade(const std::string& experiment_dir) {
  auto path = qap::grade_run(experiment_dir);
  std::cout << "graded results: " << path.string() << "\n";
  return kExitOk;
}

int cmd_report(const std::string& experiment_dir, const std::string& baseline) {
  qap::ReportBundle bundle = qap::report_run(experiment_dir, baseline);
  std::cout << "report written to " << (std::filesystem::path(experiment_dir) / "report").string()
            << " (" << bundle.accuracy.size() << " accuracy cells)\n";
  return kExitOk;
}

int cmd_validate(const std::string& path, const std::string& kind, int expect_count) {
  const qap::Dataset dataset = qap::dataset_from_string(kind);
  const auto records = qap::load_dataset(dataset, path);
  int numeric = 0, choice = 0, boolean_count = 0;
  for (const auto& r : records) {
    switch (r.answer_kind) {
      case qap::AnswerKind::numeric: ++numeric; break;
      case qap::AnswerKind::multiple_choice: ++choice; break;
      case qap::AnswerKind::boolean_answer: ++boolean_count; break;
    }
  }
  std::cout << kind << ": " << records.size() << " records (numeric " << numeric << ", choice "
            << choice << ", boolean " << boolean_count << ")\n";
  if (expect_count >= 0 && static_cast<size_t>(expect_count) != records.size()) {
    std::cerr << "error: expected " << expect_count << " records, loaded " << records.size()
              << "\n";
    return kExitConfigError;
  }
  return kExitOk;
}

int cmd_cache_stats(const std::string& dir) {
  qap::ResponseCache cache{std::filesystem::path(dir)};
  auto stats = cache.stats();
  std::cout << "cache " << dir << ": " << stats.entries << " entries, " << stats.bytes
            << " bytes\n";
  return kExitOk;
}

int cmd_cache_clear(const std::string& dir) {
  qap::ResponseCache cache{std::filesystem::path(dir)};
  auto before = cache.stats();
  cache.clear();
  std::cout << "cleared " << before.entries << " entries from " << dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qap: prompting-strategy evaluation harness"};
  app.require_subcommand(1);

  std::string config_path, mock_script, output_dir, experiment_id;
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--mock", mock_script, "Mock backend script; no network, no credential");
  run->add_option("--output-dir", output_dir, "Override the configured output directory");
  run->add_option("--experiment-id", experiment_id, "Override the configured experiment id");

  std::string grade_dir;
  auto* grade = app.add_subcommand("grade", "Grade the transcripts of an experiment");
  grade->add_option("dir", grade_dir, "Experiment directory")->required();

  std::string report_dir, baseline = "baseline";
  auto* report = app.add_subcommand("report", "Aggregate graded results into report tables");
  report->add_option("dir", report_dir, "Experiment directory")->required();
  report->add_option("--baseline", baseline, "Strategy defining the easy/hard split");

  auto* datasets = app.add_subcommand("datasets", "Dataset utilities");
  std::string validate_path, validate_kind;
  int expect_count = -1;
  auto* validate = datasets->add_subcommand("validate", "Load a dataset file and report counts");
  validate->add_option("path", validate_path, "Dataset file")->required();
  validate->add_option("--kind", validate_kind, "gsm8k|aqua|sat_math|strategyqa")->required();
  validate->add_option("--expect-count", expect_count, "Fail unless exactly this many records load");

  auto* cache = app.add_subcommand("cache", "Response cache utilities");
  std::string cache_dir_stats, cache_dir_clear;
  auto* stats = cache->add_subcommand("stats", "Show entry count and size");
  stats->add_option("--dir", cache_dir_stats, "Cache directory")->required();
  auto* clear = cache->add_subcommand("clear", "Delete all cache entries");
  clear->add_option("--dir", cache_dir_clear, "Cache directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, mock_script, output_dir, experiment_id);
    if (grade->parsed()) return cmd_grade(grade_dir);
    if (report->parsed()) return cmd_report(report_dir, baseline);
    if (datasets->parsed() && validate->parsed()) {
      return cmd_validate(validate_path, validate_kind, expect_count);
    }
    if (cache->parsed() && stats->parsed()) return cmd_cache_stats(cache_dir_stats);
    if (cache->parsed() && clear->parsed()) return cmd_cache_clear(cache_dir_clear);
    std::cerr << app.help();
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
}

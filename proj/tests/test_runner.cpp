#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "qap/dataset_io.hpp"
#include "qap/grading.hpp"
#include "qap/jsonl.hpp"
#include "qap/runner.hpp"

using namespace qap;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "qap_runner_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  out << content;
}

// 10 gsm8k questions; gold answer equals the line index.
fs::path write_questions(const fs::path& dir, int count = 10) {
  std::string content;
  for (int i = 0; i < count; ++i) {
    content += R"({"question": "What is )" + std::to_string(i) + R"( plus zero?", "answer": "#### )" +
               std::to_string(i) + "\"}\n";
  }
  const fs::path path = dir / "gsm8k.jsonl";
  write_file(path, content);
  return path;
}

fs::path write_registry(const fs::path& dir) {
  const fs::path path = dir / "registry.json";
  write_file(path, R"({"strategies": [
    {"name": "baseline", "kind": "baseline"},
    {"name": "qap50", "kind": "qap", "n": 50},
    {"name": "ts50", "kind": "two_stage_qap", "n": 50}
  ]})");
  return path;
}

ExperimentConfig base_config(const fs::path& dir) {
  ExperimentConfig config;
  config.experiment_id = "exp";
  config.model = "test-model";
  config.registry_path = write_registry(dir).string();
  config.dataset_paths[Dataset::gsm8k] = write_questions(dir).string();
  config.strategies = {"baseline", "qap50", "ts50"};
  config.pool_width = 2;
  config.output_dir = (dir / "runs").string();
  return config;
}

// Transcript lines with volatile fields cleared, for byte-level comparison.
std::string stripped_transcripts(const fs::path& path) {
  std::string out;
  for (const auto& [lineno, j] : read_jsonl(path)) {
    nlohmann::json copy = j;
    copy["timestamp"] = "";
    out += copy.dump() + "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("mock run produces one transcript per strategy-question pair") {
  const fs::path dir = fresh_dir("counts");
  ExperimentConfig config = base_config(dir);
  auto backend = std::make_shared<MockBackend>();
  auto clock = std::make_shared<ManualClock>();
  const RunSummary summary = run_experiment(config, backend, clock);

  CHECK(summary.total_tasks == 30);
  CHECK(summary.completed == 30);
  CHECK(summary.failed == 0);
  // Two single-stage strategies (10 requests each) plus one two-stage (20).
  CHECK(backend->total_calls() == 40);

  const auto transcripts = read_transcripts(summary.experiment_dir / "transcripts.jsonl");
  CHECK(transcripts.size() == 30);
  int with_stage1 = 0;
  for (const auto& t : transcripts) {
    if (t.stage1_response) ++with_stage1;
  }
  CHECK(with_stage1 == 10);
  CHECK(fs::exists(summary.experiment_dir / "questions.jsonl"));
  CHECK(read_records(summary.experiment_dir / "questions.jsonl").size() == 10);
}

TEST_CASE("identical mock runs are byte-identical modulo timestamps") {
  const fs::path dir = fresh_dir("determinism");
  ExperimentConfig config = base_config(dir);
  config.pool_width = 3;

  config.output_dir = (dir / "runs_a").string();
  auto summary_a = run_experiment(config, std::make_shared<MockBackend>(),
                                  std::make_shared<ManualClock>());
  config.output_dir = (dir / "runs_b").string();
  auto summary_b = run_experiment(config, std::make_shared<MockBackend>(),
                                  std::make_shared<ManualClock>());

  CHECK(stripped_transcripts(summary_a.experiment_dir / "transcripts.jsonl") ==
        stripped_transcripts(summary_b.experiment_dir / "transcripts.jsonl"));

  grade_run(summary_a.experiment_dir);
  grade_run(summary_b.experiment_dir);
  CHECK(read_file(summary_a.experiment_dir / "graded.jsonl") ==
        read_file(summary_b.experiment_dir / "graded.jsonl"));
}

TEST_CASE("grading twice is byte-identical") {
  const fs::path dir = fresh_dir("idempotent");
  ExperimentConfig config = base_config(dir);
  auto summary = run_experiment(config, std::make_shared<MockBackend>(),
                                std::make_shared<ManualClock>());
  grade_run(summary.experiment_dir);
  const std::string first = read_file(summary.experiment_dir / "graded.jsonl");
  grade_run(summary.experiment_dir);
  CHECK(read_file(summary.experiment_dir / "graded.jsonl") == first);
}

TEST_CASE("resume skips completed items with zero backend dispatches") {
  const fs::path dir = fresh_dir("resume");
  ExperimentConfig config = base_config(dir);
  auto summary = run_experiment(config, std::make_shared<MockBackend>(),
                                std::make_shared<ManualClock>());
  const fs::path transcript_path = summary.experiment_dir / "transcripts.jsonl";
  const std::string full = stripped_transcripts(transcript_path);

  // Simulate a kill partway through: keep 23 lines, append a torn line.
  std::vector<std::string> lines;
  {
    std::ifstream in(transcript_path);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
  }
  REQUIRE(lines.size() == 30);
  std::string truncated;
  for (size_t i = 0; i < 23; ++i) truncated += lines[i] + "\n";
  truncated += lines[23].substr(0, lines[23].size() / 2);
  write_file(transcript_path, truncated);

  // Completed items are skipped; interrupted ones are replayed from the
  // response cache, so a sentinel backend proves zero network dispatches.
  // The sentinel impersonates the mock endpoint so cache keys line up.
  auto sentinel = std::make_shared<SentinelBackend>("mock");
  const RunSummary resumed = run_experiment(config, sentinel, std::make_shared<ManualClock>());
  CHECK(sentinel->calls() == 0);
  CHECK(resumed.skipped == 23);
  CHECK(resumed.completed == 7);
  CHECK(stripped_transcripts(transcript_path) == full);
}

TEST_CASE("a rerun over a finished experiment makes no backend calls") {
  const fs::path dir = fresh_dir("noop_rerun");
  ExperimentConfig config = base_config(dir);
  run_experiment(config, std::make_shared<MockBackend>(), std::make_shared<ManualClock>());
  auto sentinel = std::make_shared<SentinelBackend>("mock");
  const RunSummary again = run_experiment(config, sentinel, std::make_shared<ManualClock>());
  CHECK(again.skipped == 30);
  CHECK(sentinel->calls() == 0);
}

TEST_CASE("failed requests are recorded and the run continues") {
  const fs::path dir = fresh_dir("failures");
  ExperimentConfig config = base_config(dir);
  config.strategies = {"baseline"};
  auto backend = std::make_shared<MockBackend>();
  backend->add_entry("baseline|gsm8k|0003",
                     {"", FinishReason::stop(), {429, 429, 429, 429, 429}});
  const RunSummary summary = run_experiment(config, backend, std::make_shared<ManualClock>());
  CHECK(summary.failed == 1);
  CHECK(summary.completed == 9);

  const auto transcripts = read_transcripts(summary.experiment_dir / "transcripts.jsonl");
  CHECK(transcripts.size() == 10);
  int failed = 0;
  for (const auto& t : transcripts) {
    if (!t.error.empty()) {
      ++failed;
      CHECK_FALSE(t.response.has_value());
      CHECK(t.question_id == "0003");
    }
  }
  CHECK(failed == 1);

  // Failed rows grade as incorrect and incomplete.
  grade_run(summary.experiment_dir);
  int graded_failed = 0;
  for (const auto& [lineno, j] : read_jsonl(summary.experiment_dir / "graded.jsonl")) {
    const GradedResult g = graded_from_json(j);
    if (g.failed) {
      ++graded_failed;
      CHECK_FALSE(g.correct);
      CHECK(g.incomplete);
    }
  }
  CHECK(graded_failed == 1);
}

TEST_CASE("auth failures abort the run") {
  const fs::path dir = fresh_dir("auth");
  ExperimentConfig config = base_config(dir);
  config.strategies = {"baseline"};
  auto backend = std::make_shared<MockBackend>();
  backend->add_entry("baseline|gsm8k|0000", {"", FinishReason::stop(), {401}});
  CHECK_THROWS_AS(run_experiment(config, backend, std::make_shared<ManualClock>()),
                  GatewayError);
}

TEST_CASE("seeded sampling selects a stable subset") {
  const auto a = sample_indices(100, 10, 7, "gsm8k");
  const auto b = sample_indices(100, 10, 7, "gsm8k");
  CHECK(a == b);
  CHECK(a.size() == 10);
  CHECK(std::is_sorted(a.begin(), a.end()));
  const auto other_seed = sample_indices(100, 10, 8, "gsm8k");
  CHECK(a != other_seed);
  const auto other_salt = sample_indices(100, 10, 7, "aqua");
  CHECK(a != other_salt);
  CHECK(sample_indices(5, 10, 7, "x").size() == 5);

  // End to end: the sampled question subset is identical across runs.
  const fs::path dir = fresh_dir("sampling");
  ExperimentConfig config = base_config(dir);
  config.strategies = {"baseline"};
  config.sample_limit = 4;
  config.seed = 123;
  config.output_dir = (dir / "runs_a").string();
  auto summary_a = run_experiment(config, std::make_shared<MockBackend>(),
                                  std::make_shared<ManualClock>());
  config.output_dir = (dir / "runs_b").string();
  auto summary_b = run_experiment(config, std::make_shared<MockBackend>(),
                                  std::make_shared<ManualClock>());
  CHECK(read_file(summary_a.experiment_dir / "questions.jsonl") ==
        read_file(summary_b.experiment_dir / "questions.jsonl"));
  CHECK(read_records(summary_a.experiment_dir / "questions.jsonl").size() == 4);
}

TEST_CASE("config validation fails before any request") {
  const fs::path dir = fresh_dir("config_errors");
  SUBCASE("unknown strategy") {
    ExperimentConfig config = base_config(dir);
    config.strategies = {"not_in_registry"};
    auto sentinel = std::make_shared<SentinelBackend>();
    CHECK_THROWS_AS(run_experiment(config, sentinel, std::make_shared<ManualClock>()),
                    ConfigError);
    CHECK(sentinel->calls() == 0);
  }
  SUBCASE("sample_limit larger than the dataset") {
    ExperimentConfig config = base_config(dir);
    config.sample_limit = 11;
    auto sentinel = std::make_shared<SentinelBackend>();
    CHECK_THROWS_AS(run_experiment(config, sentinel, std::make_shared<ManualClock>()),
                    ConfigError);
    CHECK(sentinel->calls() == 0);
  }
  SUBCASE("unreadable dataset") {
    ExperimentConfig config = base_config(dir);
    config.dataset_paths[Dataset::gsm8k] = (dir / "missing.jsonl").string();
    CHECK_THROWS_AS(
        run_experiment(config, std::make_shared<SentinelBackend>(), std::make_shared<ManualClock>()),
        ConfigError);
  }
}

TEST_CASE("load_config parses and validates the JSON config") {
  const fs::path dir = fresh_dir("load_config");
  write_questions(dir);
  write_registry(dir);
  write_file(dir / "config.json", R"({
    "experiment_id": "exp1",
    "model": "test-model",
    "registry": "registry.json",
    "datasets": {"gsm8k": "gsm8k.jsonl"},
    "strategies": ["baseline", "qap50"],
    "sample_limit": 5,
    "seed": 9,
    "pool_width": 2,
    "rate_limit": 3.5,
    "temperature": 0.0,
    "max_output_tokens": 777,
    "output_dir": "runs"
  })");
  const ExperimentConfig config = load_config(dir / "config.json");
  CHECK(config.experiment_id == "exp1");
  CHECK(config.registry_path == (dir / "registry.json").string());
  CHECK(config.dataset_paths.at(Dataset::gsm8k) == (dir / "gsm8k.jsonl").string());
  CHECK(config.sample_limit == 5);
  CHECK(config.max_output_tokens == 777);
  CHECK(config.rate_limit == doctest::Approx(3.5));
  CHECK(config.output_dir == (dir / "runs").string());

  SUBCASE("missing required fields") {
    write_file(dir / "bad.json", R"({"model": "m"})");
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
  }
  SUBCASE("not json") {
    write_file(dir / "bad2.json", "nope");
    CHECK_THROWS_AS(load_config(dir / "bad2.json"), ConfigError);
  }
  SUBCASE("empty datasets") {
    write_file(dir / "bad3.json",
               R"({"experiment_id": "e", "model": "m", "datasets": {}, "strategies": ["baseline"]})");
    CHECK_THROWS_AS(load_config(dir / "bad3.json"), ConfigError);
  }
}

TEST_CASE("report_run needs graded results and full baseline coverage") {
  const fs::path dir = fresh_dir("report");
  ExperimentConfig config = base_config(dir);
  config.strategies = {"baseline", "qap50"};
  auto summary = run_experiment(config, std::make_shared<MockBackend>(),
                                std::make_shared<ManualClock>());

  SUBCASE("report before grade fails, naming the path") {
    try {
      report_run(summary.experiment_dir, "baseline");
      FAIL("expected error");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("graded.jsonl") != std::string::npos);
    }
  }
  SUBCASE("baseline strategy must exist in the run") {
    grade_run(summary.experiment_dir);
    CHECK_THROWS_AS(report_run(summary.experiment_dir, "tadb"), std::invalid_argument);
  }
  SUBCASE("happy path emits report files and identity rows") {
    grade_run(summary.experiment_dir);
    const ReportBundle bundle = report_run(summary.experiment_dir, "baseline");
    CHECK(fs::exists(summary.experiment_dir / "report" / "accuracy.csv"));
    CHECK(fs::exists(summary.experiment_dir / "report" / "report.md"));
    const auto easy = bundle.stratified_accuracy.find({"arithmetic", "baseline", Difficulty::easy});
    const auto hard = bundle.stratified_accuracy.find({"arithmetic", "baseline", Difficulty::hard});
    if (easy != bundle.stratified_accuracy.end()) {
      CHECK(easy->second.value == doctest::Approx(100.0));
    }
    if (hard != bundle.stratified_accuracy.end()) {
      CHECK(hard->second.value == doctest::Approx(0.0));
    }
  }
  SUBCASE("missing transcripts file names the path") {
    const fs::path empty_dir = fresh_dir("report_empty");
    try {
      grade_run(empty_dir);
      FAIL("expected error");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("questions.jsonl") != std::string::npos);
    }
  }
}

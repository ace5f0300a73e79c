#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qap/analysis.hpp"
#include "qap/llm_gateway.hpp"
#include "qap/prompt_strategies.hpp"
#include "qap/types.hpp"

namespace qap {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string experiment_id;
  std::string model;
  std::string endpoint;
  std::string api_key_env = "OPENAI_API_KEY";
  std::string registry_path;  // empty = stock registry
  std::map<Dataset, std::string> dataset_paths;
  std::vector<std::string> strategies;
  std::optional<int> sample_limit;  // per dataset
  unsigned seed = 0;                // sampling only
  int pool_width = 8;
  double rate_limit = 0.0;  // requests/second, 0 disables
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string output_dir;
  std::string cache_dir;  // empty = <output_dir>/<experiment_id>/cache
};

// Reads a JSON config file; relative paths are resolved against the file's
// directory. Validation problems raise ConfigError.
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunSummary {
  int total_tasks = 0;
  int completed = 0;   // includes resumed items
  int failed = 0;      // exhausted retries this run or recorded earlier
  int skipped = 0;     // already present before this run
  std::filesystem::path experiment_dir;
};

// Executes the experiment: loads datasets, renders every (strategy, question)
// pair, drives the gateway (two-stage aware) and appends transcripts.
// Resumable: items already in transcripts.jsonl are skipped. Throws
// ConfigError before any request on invalid configuration.
RunSummary run_experiment(const ExperimentConfig& config, std::shared_ptr<ChatBackend> backend,
                          std::shared_ptr<Clock> clock);

// Grades every transcript in the experiment directory into graded.jsonl.
// Deterministic and idempotent; re-runnable after extraction changes.
std::filesystem::path grade_run(const std::filesystem::path& experiment_dir);

// Builds the difficulty map from `baseline_strategy` and writes the report
// files under <experiment_dir>/report.
ReportBundle report_run(const std::filesystem::path& experiment_dir,
                        const std::string& baseline_strategy);

std::string request_tag(const std::string& strategy, Dataset dataset, const std::string& id,
                        bool stage1 = false);

// Deterministic per-dataset subsample: `limit` indices drawn without
// replacement, returned in ascending order.
std::vector<size_t> sample_indices(size_t total, size_t limit, unsigned seed,
                                   const std::string& salt);

// Tolerant transcript read for resume: returns the parsed prefix of good
// lines and the byte offset where a truncated trailing line (if any) begins.
struct TranscriptFile {
  std::vector<Transcript> transcripts;
  std::uintmax_t valid_bytes = 0;
};
TranscriptFile read_transcripts_tolerant(const std::filesystem::path& path);
std::vector<Transcript> read_transcripts(const std::filesystem::path& path);

}  // namespace qap

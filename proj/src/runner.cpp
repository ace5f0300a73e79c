#include "qap/runner.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <ctime>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "qap/dataset_io.hpp"
#include "qap/grading.hpp"
#include "qap/jsonl.hpp"

namespace qap {

namespace fs = std::filesystem;
using nlohmann::json;

std::string request_tag(const std::string& strategy, Dataset dataset, const std::string& id,
                        bool stage1) {
  std::string tag = strategy + "|" + to_string(dataset) + "|" + id;
  if (stage1) tag += "|stage1";
  return tag;
}

std::vector<size_t> sample_indices(size_t total, size_t limit, unsigned seed,
                                   const std::string& salt) {
  std::vector<size_t> indices(total);
  for (size_t i = 0; i < total; ++i) indices[i] = i;
  if (limit >= total) return indices;
  // Fisher-Yates with an explicit generator so the subset is stable across
  // platforms and runs.
  std::uint64_t state = seed ^ 0x6a09e667f3bcc908ULL;
  for (char c : salt) state = state * 1099511628211ULL + static_cast<unsigned char>(c);
  if (state == 0) state = 1;
  auto next = [&]() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return state;
  };
  for (size_t i = 0; i < limit; ++i) {
    const size_t j = i + static_cast<size_t>(next() % (total - i));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(limit);
  std::sort(indices.begin(), indices.end());
  return indices;
}

namespace {

std::string iso8601_utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path resolve_against(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute() || base.empty()) return path;
  return base / path;
}

struct Task {
  size_t index = 0;
  const PromptSpec* spec = nullptr;
  const QuestionRecord* record = nullptr;
};

// Serializes transcript lines in task order regardless of completion order,
// so identical runs produce byte-identical files.
class OrderedTranscriptWriter {
 public:
  OrderedTranscriptWriter(const fs::path& path, size_t next_index)
      : out_(path, std::ios::app | std::ios::binary), next_(next_index) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for append");
  }

  void deliver(size_t index, std::string line) {
    std::lock_guard<std::mutex> lock(mutex_);
    pending_[index] = std::move(line);
    while (!pending_.empty() && pending_.begin()->first == next_) {
      if (!pending_.begin()->second.empty()) {
        out_ << pending_.begin()->second << "\n";
        out_.flush();
      }
      pending_.erase(pending_.begin());
      ++next_;
    }
  }

  // Marks a task that needs no line (already persisted by an earlier run).
  void skip(size_t index) { deliver(index, std::string()); }

 private:
  std::ofstream out_;
  std::mutex mutex_;
  size_t next_;
  std::map<size_t, std::string> pending_;
};

}  // namespace

TranscriptFile read_transcripts_tolerant(const fs::path& path) {
  TranscriptFile result;
  std::ifstream in(path, std::ios::binary);
  if (!in) return result;
  std::string line;
  std::uintmax_t offset = 0;
  while (std::getline(in, line)) {
    const bool had_newline = !in.eof();
    const std::uintmax_t consumed = line.size() + (had_newline ? 1 : 0);
    if (line.empty()) {
      if (had_newline) {
        offset += consumed;
        continue;
      }
      break;
    }
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !had_newline) {
      // Truncated or corrupt tail, likely an interrupted append; the caller
      // rewinds the file to the last good line.
      break;
    }
    try {
      result.transcripts.push_back(transcript_from_json(j));
    } catch (const std::exception&) {
      break;
    }
    offset += consumed;
  }
  result.valid_bytes = offset;
  return result;
}

std::vector<Transcript> read_transcripts(const fs::path& path) {
  if (!fs::exists(path)) {
    throw std::runtime_error("transcript file not found: " + path.string());
  }
  std::vector<Transcript> out;
  for (const auto& [lineno, j] : read_jsonl(path)) {
    try {
      out.push_back(transcript_from_json(j));
    } catch (const std::exception& e) {
      throw LoadError(path.string(), lineno, e.what());
    }
  }
  return out;
}

ExperimentConfig load_config(const fs::path& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ConfigError("config " + path.string() + " is not a JSON object");
  }
  const fs::path base = path.parent_path();
  ExperimentConfig cfg;
  try {
    cfg.experiment_id = j.at("experiment_id").get<std::string>();
    cfg.model = j.at("model").get<std::string>();
    cfg.endpoint = j.value("endpoint", "");
    cfg.api_key_env = j.value("api_key_env", "OPENAI_API_KEY");
    if (j.contains("registry")) {
      cfg.registry_path = resolve_against(base, j.at("registry").get<std::string>()).string();
    }
    if (!j.contains("datasets") || !j.at("datasets").is_object() || j.at("datasets").empty()) {
      throw ConfigError("config needs a non-empty \"datasets\" object");
    }
    for (const auto& [name, value] : j.at("datasets").items()) {
      cfg.dataset_paths[dataset_from_string(name)] =
          resolve_against(base, value.get<std::string>()).string();
    }
    for (const auto& s : j.at("strategies")) cfg.strategies.push_back(s.get<std::string>());
    if (j.contains("sample_limit") && !j.at("sample_limit").is_null()) {
      cfg.sample_limit = j.at("sample_limit").get<int>();
    }
    cfg.seed = j.value("seed", 0u);
    cfg.pool_width = j.value("pool_width", 8);
    cfg.rate_limit = j.value("rate_limit", 0.0);
    cfg.temperature = j.value("temperature", 0.0);
    cfg.max_output_tokens = j.value("max_output_tokens", 1024);
    cfg.output_dir = resolve_against(base, j.value("output_dir", "runs")).string();
    if (j.contains("cache_dir")) {
      cfg.cache_dir = resolve_against(base, j.at("cache_dir").get<std::string>()).string();
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  if (cfg.experiment_id.empty()) throw ConfigError("experiment_id is empty");
  if (cfg.model.empty()) throw ConfigError("model is empty");
  if (cfg.strategies.empty()) throw ConfigError("no strategies configured");
  if (cfg.pool_width < 1) throw ConfigError("pool_width must be >= 1");
  if (cfg.max_output_tokens < 1) throw ConfigError("max_output_tokens must be >= 1");
  if (cfg.temperature < 0) throw ConfigError("temperature must be >= 0");
  if (cfg.sample_limit && *cfg.sample_limit < 1) throw ConfigError("sample_limit must be >= 1");
  return cfg;
}

RunSummary run_experiment(const ExperimentConfig& config, std::shared_ptr<ChatBackend> backend,
                          std::shared_ptr<Clock> clock) {
  // Configuration problems are fatal before any request is issued.
  Registry registry =
      config.registry_path.empty() ? default_registry() : registry_load(config.registry_path);
  std::vector<const PromptSpec*> specs;
  for (const auto& name : config.strategies) {
    auto it = registry.find(name);
    if (it == registry.end()) {
      throw ConfigError("strategy '" + name + "' is not in the registry");
    }
    specs.push_back(&it->second);
  }

  std::vector<QuestionRecord> questions;
  const std::vector<Dataset> order = {Dataset::gsm8k, Dataset::aqua, Dataset::sat_math,
                                      Dataset::strategyqa};
  for (Dataset d : order) {
    auto it = config.dataset_paths.find(d);
    if (it == config.dataset_paths.end()) continue;
    std::vector<QuestionRecord> loaded;
    try {
      loaded = load_dataset(d, it->second);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("loading ") + to_string(d) + ": " + e.what());
    }
    if (config.sample_limit) {
      if (static_cast<size_t>(*config.sample_limit) > loaded.size()) {
        throw ConfigError(std::string("sample_limit ") + std::to_string(*config.sample_limit) +
                          " exceeds " + to_string(d) + " size " + std::to_string(loaded.size()));
      }
      std::vector<size_t> keep = sample_indices(loaded.size(), *config.sample_limit, config.seed,
                                                to_string(d));
      std::vector<QuestionRecord> sampled;
      sampled.reserve(keep.size());
      for (size_t i : keep) sampled.push_back(std::move(loaded[i]));
      loaded = std::move(sampled);
    }
    for (auto& r : loaded) questions.push_back(std::move(r));
  }
  if (questions.empty()) throw ConfigError("no questions loaded");

  const fs::path experiment_dir = fs::path(config.output_dir) / config.experiment_id;
  fs::create_directories(experiment_dir);
  write_records(experiment_dir / "questions.jsonl", questions);

  // Run metadata (no wall-clock fields; reports and goldens read this).
  {
    nlohmann::ordered_json meta;
    meta["experiment_id"] = config.experiment_id;
    meta["model"] = config.model;
    meta["endpoint"] = backend->endpoint_id();
    meta["temperature"] = config.temperature;
    meta["max_output_tokens"] = config.max_output_tokens;
    meta["seed"] = config.seed;
    meta["sample_limit"] = config.sample_limit ? nlohmann::ordered_json(*config.sample_limit)
                                               : nlohmann::ordered_json(nullptr);
    meta["strategies"] = config.strategies;
    atomic_write(experiment_dir / "run_meta.json", meta.dump(2) + "\n");
  }

  // Resume: collect finished (strategy, dataset, question) keys and rewind a
  // torn trailing line if the previous run was interrupted mid-append.
  const fs::path transcript_path = experiment_dir / "transcripts.jsonl";
  std::set<std::string> done;
  int prior_failures = 0;
  if (fs::exists(transcript_path)) {
    TranscriptFile existing = read_transcripts_tolerant(transcript_path);
    if (existing.valid_bytes < fs::file_size(transcript_path)) {
      fs::resize_file(transcript_path, existing.valid_bytes);
    }
    for (const auto& t : existing.transcripts) {
      done.insert(request_tag(t.strategy_name, t.dataset, t.question_id));
      if (!t.error.empty()) ++prior_failures;
    }
  }

  std::vector<Task> tasks;
  for (const auto* spec : specs) {
    for (const auto& record : questions) {
      tasks.push_back({tasks.size(), spec, &record});
    }
  }

  auto limiter = config.rate_limit > 0
                     ? std::make_shared<RateLimiter>(config.rate_limit, clock)
                     : nullptr;
  Gateway gateway(backend, clock, RetryPolicy{}, limiter);
  ResponseCache cache(config.cache_dir.empty()
                          ? (experiment_dir / "cache").string()
                          : config.cache_dir);

  OrderedTranscriptWriter writer(transcript_path, 0);
  std::atomic<size_t> cursor{0};
  std::atomic<int> failures{prior_failures};
  std::atomic<int> completed{0};
  std::atomic<int> skipped{0};

  auto worker = [&]() {
    while (true) {
      const size_t i = cursor.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      const PromptSpec& spec = *task.spec;
      const QuestionRecord& record = *task.record;
      const std::string tag = request_tag(spec.name, record.dataset, record.id);
      if (done.count(tag)) {
        skipped.fetch_add(1);
        writer.skip(task.index);
        continue;
      }

      Transcript transcript;
      transcript.question_id = record.id;
      transcript.dataset = record.dataset;
      transcript.strategy_name = spec.name;
      transcript.timestamp = iso8601_utc_now();
      try {
        if (spec.kind == StrategyKind::two_stage_qap) {
          ChatRequest stage1;
          stage1.model = config.model;
          stage1.temperature = config.temperature;
          stage1.max_output_tokens = config.max_output_tokens;
          stage1.request_tag = request_tag(spec.name, record.dataset, record.id, true);
          stage1.messages = render(spec, record);
          auto [stage1_response, hit1] = gateway.cached_complete(stage1, cache);
          transcript.stage1_response = stage1_response.text;

          ChatRequest stage2;
          stage2.model = config.model;
          stage2.temperature = config.temperature;
          stage2.max_output_tokens = config.max_output_tokens;
          stage2.request_tag = tag;
          stage2.messages = render(spec, record, stage1_response.text);
          transcript.request = stage2;
          auto [response, hit2] = gateway.cached_complete(stage2, cache);
          transcript.response = std::move(response);
        } else {
          ChatRequest request;
          request.model = config.model;
          request.temperature = config.temperature;
          request.max_output_tokens = config.max_output_tokens;
          request.request_tag = tag;
          request.messages = render(spec, record);
          transcript.request = request;
          auto [response, hit] = gateway.cached_complete(request, cache);
          transcript.response = std::move(response);
        }
        completed.fetch_add(1);
      } catch (const GatewayError& e) {
        if (e.kind() == GatewayError::Kind::auth || e.kind() == GatewayError::Kind::config) {
          throw;  // fatal; surfaces to the caller
        }
        transcript.error = e.what();
        failures.fetch_add(1);
      }
      writer.deliver(task.index, transcript_to_json(transcript).dump());
    }
  };

  if (config.pool_width <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int w = 0; w < config.pool_width; ++w) {
      pool.emplace_back([&]() {
        try {
          worker();
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          cursor.store(tasks.size());  // drain remaining work
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  RunSummary summary;
  summary.total_tasks = static_cast<int>(tasks.size());
  summary.completed = completed.load();
  summary.failed = failures.load();
  summary.skipped = skipped.load();
  summary.experiment_dir = experiment_dir;
  return summary;
}

std::filesystem::path grade_run(const fs::path& experiment_dir) {
  const fs::path questions_path = experiment_dir / "questions.jsonl";
  const fs::path transcript_path = experiment_dir / "transcripts.jsonl";
  if (!fs::exists(questions_path)) {
    throw std::runtime_error("questions file not found: " + questions_path.string());
  }
  std::vector<QuestionRecord> questions = read_records(questions_path);
  std::map<std::pair<Dataset, std::string>, const QuestionRecord*> by_key;
  for (const auto& q : questions) by_key[{q.dataset, q.id}] = &q;

  std::vector<Transcript> transcripts = read_transcripts(transcript_path);
  std::vector<GradedResult> graded;
  graded.reserve(transcripts.size());
  for (const auto& t : transcripts) {
    auto it = by_key.find({t.dataset, t.question_id});
    if (it == by_key.end()) {
      throw std::runtime_error("transcript references unknown question " +
                               std::string(to_string(t.dataset)) + "/" + t.question_id);
    }
    graded.push_back(grade(*it->second, t));
  }
  std::sort(graded.begin(), graded.end(), [](const GradedResult& a, const GradedResult& b) {
    return std::tie(a.dataset, a.question_id, a.strategy_name) <
           std::tie(b.dataset, b.question_id, b.strategy_name);
  });
  std::ostringstream out;
  for (const auto& g : graded) out << graded_to_json(g).dump() << "\n";
  const fs::path graded_path = experiment_dir / "graded.jsonl";
  atomic_write(graded_path, out.str());
  return graded_path;
}

ReportBundle report_run(const fs::path& experiment_dir, const std::string& baseline_strategy) {
  const fs::path graded_path = experiment_dir / "graded.jsonl";
  if (!fs::exists(graded_path)) {
    throw std::runtime_error("graded results not found (run grade first): " +
                             graded_path.string());
  }
  std::vector<GradedResult> results;
  for (const auto& [lineno, j] : read_jsonl(graded_path)) {
    results.push_back(graded_from_json(j));
  }
  std::vector<QuestionKey> universe;
  for (const auto& q : read_records(experiment_dir / "questions.jsonl")) {
    universe.push_back({q.dataset, q.id});
  }
  std::vector<std::string> strategy_order;
  {
    const fs::path meta_path = experiment_dir / "run_meta.json";
    if (fs::exists(meta_path)) {
      json meta = json::parse(read_file(meta_path), nullptr, false);
      if (!meta.is_discarded() && meta.contains("strategies")) {
        for (const auto& s : meta.at("strategies")) strategy_order.push_back(s.get<std::string>());
      }
    }
  }
  bool baseline_present = false;
  for (const auto& r : results) {
    if (r.strategy_name == baseline_strategy) {
      baseline_present = true;
      break;
    }
  }
  if (!baseline_present) {
    throw std::invalid_argument("baseline strategy '" + baseline_strategy +
                                "' was not run in this experiment");
  }
  ReportBundle bundle = make_report(results, universe, baseline_strategy, strategy_order);
  emit_report(bundle, experiment_dir / "report");
  return bundle;
}

}  // namespace qap

#include "qap/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

#include "qap/jsonl.hpp"

namespace qap {

const char* to_string(Difficulty d) { return d == Difficulty::easy ? "easy" : "hard"; }

std::string group_of(Dataset d) {
  return d == Dataset::strategyqa ? "commonsense" : "arithmetic";
}

std::vector<std::string> stratified_groups() {
  return {"arithmetic", "commonsense", "gsm8k", "aqua", "sat_math", "strategyqa"};
}

double accuracy_percent(int correct, int total) {
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

DifficultyMap classify_difficulty(const std::vector<GradedResult>& baseline_results,
                                  const std::vector<QuestionKey>& universe) {
  DifficultyMap map;
  std::set<QuestionKey> seen;
  for (const auto& r : baseline_results) {
    const QuestionKey key{r.dataset, r.question_id};
    if (!seen.insert(key).second) {
      throw std::invalid_argument("duplicate baseline result for question " +
                                  std::string(to_string(key.first)) + "/" + key.second);
    }
    map[key] = r.correct ? Difficulty::easy : Difficulty::hard;
  }
  std::string missing;
  for (const auto& key : universe) {
    if (!map.count(key)) {
      if (!missing.empty()) missing += ", ";
      missing += std::string(to_string(key.first)) + "/" + key.second;
    }
  }
  if (!missing.empty()) {
    throw std::invalid_argument("baseline results missing for: " + missing);
  }
  return map;
}

namespace {

// Groups a result belongs to: its pooled group and its own dataset.
std::vector<std::string> groups_for(Dataset d) {
  return {group_of(d), to_string(d)};
}

Difficulty difficulty_for(const GradedResult& r, const DifficultyMap& difficulty) {
  const QuestionKey key{r.dataset, r.question_id};
  auto it = difficulty.find(key);
  if (it == difficulty.end()) {
    throw std::invalid_argument("no difficulty classification for question " +
                                std::string(to_string(key.first)) + "/" + key.second);
  }
  return it->second;
}

double median_of(std::vector<int>& values) {
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return (static_cast<double>(values[n / 2 - 1]) + values[n / 2]) / 2.0;
}

}  // namespace

std::map<std::tuple<std::string, std::string, Difficulty>, Cell> stratified_accuracy(
    const std::vector<GradedResult>& results, const DifficultyMap& difficulty) {
  std::map<std::tuple<std::string, std::string, Difficulty>, std::pair<int, int>> tallies;
  for (const auto& r : results) {
    const Difficulty d = difficulty_for(r, difficulty);
    for (const auto& group : groups_for(r.dataset)) {
      auto& [correct, total] = tallies[{group, r.strategy_name, d}];
      correct += r.correct ? 1 : 0;
      total += 1;
    }
  }
  std::map<std::tuple<std::string, std::string, Difficulty>, Cell> out;
  for (const auto& [key, tally] : tallies) {
    out[key] = {accuracy_percent(tally.first, tally.second), tally.second};
  }
  return out;
}

std::map<std::tuple<std::string, std::string, Difficulty>, WordCell> word_stats(
    const std::vector<GradedResult>& results, const DifficultyMap& difficulty) {
  std::map<std::tuple<std::string, std::string, Difficulty>, std::vector<int>> samples;
  for (const auto& r : results) {
    if (r.failed) continue;  // no response text to measure
    const Difficulty d = difficulty_for(r, difficulty);
    for (const auto& group : groups_for(r.dataset)) {
      samples[{group, r.strategy_name, d}].push_back(r.word_count);
    }
  }
  std::map<std::tuple<std::string, std::string, Difficulty>, WordCell> out;
  for (auto& [key, values] : samples) {
    WordCell cell;
    cell.n = static_cast<int>(values.size());
    long long sum = 0;
    for (int v : values) sum += v;
    cell.mean = static_cast<double>(sum) / values.size();
    cell.median = median_of(values);
    out[key] = cell;
  }
  return out;
}

std::map<std::pair<Dataset, std::string>, Cell> incomplete_rate(
    const std::vector<GradedResult>& results) {
  std::map<std::pair<Dataset, std::string>, std::pair<int, int>> tallies;
  for (const auto& r : results) {
    auto& [incomplete, total] = tallies[{r.dataset, r.strategy_name}];
    incomplete += r.incomplete ? 1 : 0;
    total += 1;
  }
  std::map<std::pair<Dataset, std::string>, Cell> out;
  for (const auto& [key, tally] : tallies) {
    out[key] = {accuracy_percent(tally.first, tally.second), tally.second};
  }
  return out;
}

ReportBundle make_report(const std::vector<GradedResult>& results,
                         const std::vector<QuestionKey>& universe,
                         const std::string& baseline_strategy,
                         const std::vector<std::string>& strategy_order) {
  ReportBundle bundle;
  bundle.strategy_order = strategy_order;

  std::vector<GradedResult> baseline_results;
  for (const auto& r : results) {
    if (r.strategy_name == baseline_strategy) baseline_results.push_back(r);
  }
  if (baseline_results.empty()) {
    throw std::invalid_argument("baseline strategy '" + baseline_strategy +
                                "' has no graded results");
  }
  const DifficultyMap difficulty = classify_difficulty(baseline_results, universe);

  std::map<std::pair<Dataset, std::string>, std::pair<int, int>> acc_tallies;
  std::map<std::pair<Dataset, std::string>, CountCell> counts;
  for (const auto& r : results) {
    const std::pair<Dataset, std::string> key{r.dataset, r.strategy_name};
    auto& [correct, total] = acc_tallies[key];
    correct += r.correct ? 1 : 0;
    total += 1;
    auto& cell = counts[key];
    cell.total += 1;
    if (r.failed) {
      cell.failed += 1;
    } else {
      cell.graded += 1;
    }
  }
  for (const auto& [key, tally] : acc_tallies) {
    if (tally.second == 0) {
      std::cerr << "warning: empty accuracy cell " << to_string(key.first) << "/" << key.second
                << " omitted\n";
      continue;
    }
    bundle.accuracy[key] = {accuracy_percent(tally.first, tally.second), tally.second};
  }

  bundle.counts = std::move(counts);
  bundle.stratified_accuracy = stratified_accuracy(results, difficulty);
  bundle.word_stats = word_stats(results, difficulty);
  bundle.incomplete_rate = incomplete_rate(results);
  return bundle;
}

std::string format_1dp(double v) {
  // Half-up at one decimal; percents and word counts are non-negative.
  const double scaled = std::floor(v * 10.0 + 0.5);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", scaled / 10.0);
  return buf;
}

namespace {

const std::vector<Dataset> kDatasetOrder = {Dataset::gsm8k, Dataset::aqua, Dataset::sat_math,
                                            Dataset::strategyqa};

std::vector<std::string> ordered_strategies(const ReportBundle& bundle) {
  std::vector<std::string> order = bundle.strategy_order;
  std::set<std::string> known(order.begin(), order.end());
  std::set<std::string> present;
  for (const auto& [key, cell] : bundle.accuracy) present.insert(key.second);
  for (const auto& s : present) {
    if (!known.count(s)) order.push_back(s);
  }
  // Drop configured strategies with no results at all.
  order.erase(std::remove_if(order.begin(), order.end(),
                             [&](const std::string& s) { return !present.count(s); }),
              order.end());
  return order;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  out << "dataset,strategy,metric,difficulty,value,n\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << csv_escape(row[i]);
    }
    out << '\n';
  }
  atomic_write(path, out.str());
}

}  // namespace

void emit_report(const ReportBundle& bundle, const std::filesystem::path& dir) {
  if (bundle.accuracy.empty()) {
    throw std::invalid_argument("refusing to emit an empty report bundle");
  }
  std::filesystem::create_directories(dir);
  const std::vector<std::string> strategies = ordered_strategies(bundle);

  // accuracy.csv
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& strategy : strategies) {
      for (Dataset d : kDatasetOrder) {
        auto it = bundle.accuracy.find({d, strategy});
        if (it == bundle.accuracy.end()) continue;
        rows.push_back({to_string(d), strategy, "accuracy", "all", format_1dp(it->second.value),
                        std::to_string(it->second.n)});
      }
    }
    write_csv(dir / "accuracy.csv", rows);
  }
  // stratified_accuracy.csv
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& group : stratified_groups()) {
      for (const auto& strategy : strategies) {
        for (Difficulty d : {Difficulty::easy, Difficulty::hard}) {
          auto it = bundle.stratified_accuracy.find({group, strategy, d});
          if (it == bundle.stratified_accuracy.end()) continue;
          rows.push_back({group, strategy, "accuracy", to_string(d), format_1dp(it->second.value),
                          std::to_string(it->second.n)});
        }
      }
    }
    write_csv(dir / "stratified_accuracy.csv", rows);
  }
  // word_stats.csv
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& group : stratified_groups()) {
      for (const auto& strategy : strategies) {
        for (Difficulty d : {Difficulty::easy, Difficulty::hard}) {
          auto it = bundle.word_stats.find({group, strategy, d});
          if (it == bundle.word_stats.end()) continue;
          rows.push_back({group, strategy, "word_mean", to_string(d),
                          format_1dp(it->second.mean), std::to_string(it->second.n)});
          rows.push_back({group, strategy, "word_median", to_string(d),
                          format_1dp(it->second.median), std::to_string(it->second.n)});
        }
      }
    }
    write_csv(dir / "word_stats.csv", rows);
  }
  // incomplete_rate.csv
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& strategy : strategies) {
      for (Dataset d : kDatasetOrder) {
        auto it = bundle.incomplete_rate.find({d, strategy});
        if (it == bundle.incomplete_rate.end()) continue;
        rows.push_back({to_string(d), strategy, "incomplete_rate", "all",
                        format_1dp(it->second.value), std::to_string(it->second.n)});
      }
    }
    write_csv(dir / "incomplete_rate.csv", rows);
  }
  // counts.csv
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& strategy : strategies) {
      for (Dataset d : kDatasetOrder) {
        auto it = bundle.counts.find({d, strategy});
        if (it == bundle.counts.end()) continue;
        const CountCell& c = it->second;
        rows.push_back({to_string(d), strategy, "total", "all", std::to_string(c.total),
                        std::to_string(c.total)});
        rows.push_back({to_string(d), strategy, "graded", "all", std::to_string(c.graded),
                        std::to_string(c.total)});
        rows.push_back({to_string(d), strategy, "failed", "all", std::to_string(c.failed),
                        std::to_string(c.total)});
      }
    }
    write_csv(dir / "counts.csv", rows);
  }

  // Markdown report: strategy rows x dataset columns for accuracy and
  // incomplete rates, strategy rows x easy/hard columns for the stratified
  // and word-count tables.
  std::ostringstream md;
  md << "# Experiment report\n";

  auto dataset_table = [&](const std::string& title,
                           const std::map<std::pair<Dataset, std::string>, Cell>& cells) {
    md << "\n## " << title << "\n\n| Strategy |";
    for (Dataset d : kDatasetOrder) md << " " << to_string(d) << " |";
    md << "\n|---|";
    for (size_t i = 0; i < kDatasetOrder.size(); ++i) md << "---|";
    md << "\n";
    for (const auto& strategy : strategies) {
      md << "| " << strategy << " |";
      for (Dataset d : kDatasetOrder) {
        auto it = cells.find({d, strategy});
        md << " " << (it == cells.end() ? std::string("-") : format_1dp(it->second.value)) << " |";
      }
      md << "\n";
    }
  };
  dataset_table("Accuracy (%)", bundle.accuracy);

  auto stratified_table = [&](const std::string& title, const std::string& group, auto getter) {
    md << "\n## " << title << "\n\n| Strategy | Easy | Hard |\n|---|---|---|\n";
    for (const auto& strategy : strategies) {
      md << "| " << strategy << " |";
      for (Difficulty d : {Difficulty::easy, Difficulty::hard}) {
        md << " " << getter(group, strategy, d) << " |";
      }
      md << "\n";
    }
  };
  auto acc_getter = [&](const std::string& group, const std::string& strategy, Difficulty d) {
    auto it = bundle.stratified_accuracy.find({group, strategy, d});
    return it == bundle.stratified_accuracy.end() ? std::string("-")
                                                  : format_1dp(it->second.value);
  };
  auto mean_getter = [&](const std::string& group, const std::string& strategy, Difficulty d) {
    auto it = bundle.word_stats.find({group, strategy, d});
    return it == bundle.word_stats.end() ? std::string("-") : format_1dp(it->second.mean);
  };
  auto median_getter = [&](const std::string& group, const std::string& strategy, Difficulty d) {
    auto it = bundle.word_stats.find({group, strategy, d});
    return it == bundle.word_stats.end() ? std::string("-") : format_1dp(it->second.median);
  };
  stratified_table("Accuracy for arithmetic reasoning (%)", "arithmetic", acc_getter);
  stratified_table("Accuracy for commonsense reasoning (%)", "commonsense", acc_getter);
  stratified_table("Mean word count for arithmetic reasoning", "arithmetic", mean_getter);
  stratified_table("Mean word count for commonsense reasoning", "commonsense", mean_getter);
  stratified_table("Median word count for arithmetic reasoning", "arithmetic", median_getter);
  stratified_table("Median word count for commonsense reasoning", "commonsense", median_getter);
  dataset_table("Incomplete responses (%)", bundle.incomplete_rate);

  md << "\n## Request counts\n\n| Strategy |";
  for (Dataset d : kDatasetOrder) md << " " << to_string(d) << " (graded/failed/total) |";
  md << "\n|---|";
  for (size_t i = 0; i < kDatasetOrder.size(); ++i) md << "---|";
  md << "\n";
  for (const auto& strategy : strategies) {
    md << "| " << strategy << " |";
    for (Dataset d : kDatasetOrder) {
      auto it = bundle.counts.find({d, strategy});
      if (it == bundle.counts.end()) {
        md << " - |";
      } else {
        md << " " << it->second.graded << "/" << it->second.failed << "/" << it->second.total
           << " |";
      }
    }
    md << "\n";
  }

  atomic_write(dir / "report.md", md.str());
}

}  // namespace qap

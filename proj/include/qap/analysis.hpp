#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "qap/types.hpp"

namespace qap {

enum class Difficulty { easy, hard };

const char* to_string(Difficulty d);

// Question key: ids are only unique within one dataset.
using QuestionKey = std::pair<Dataset, std::string>;
using DifficultyMap = std::map<QuestionKey, Difficulty>;

struct Cell {
  double value = 0.0;  // full precision; rounded only at emission
  int n = 0;

  bool operator==(const Cell&) const = default;
};

struct WordCell {
  double mean = 0.0;
  double median = 0.0;
  int n = 0;  // graded responses only; failed requests have no text

  bool operator==(const WordCell&) const = default;
};

struct CountCell {
  int total = 0;
  int graded = 0;
  int failed = 0;

  bool operator==(const CountCell&) const = default;
};

// Group axis for stratified tables: the pooled arithmetic/commonsense views
// plus one view per dataset.
std::string group_of(Dataset d);
std::vector<std::string> stratified_groups();

struct ReportBundle {
  // (dataset, strategy) -> percent
  std::map<std::pair<Dataset, std::string>, Cell> accuracy;
  // (group, strategy, difficulty) -> percent
  std::map<std::tuple<std::string, std::string, Difficulty>, Cell> stratified_accuracy;
  // (group, strategy, difficulty) -> word-count stats
  std::map<std::tuple<std::string, std::string, Difficulty>, WordCell> word_stats;
  // (dataset, strategy) -> percent
  std::map<std::pair<Dataset, std::string>, Cell> incomplete_rate;
  std::map<std::pair<Dataset, std::string>, CountCell> counts;
  std::vector<std::string> strategy_order;  // presentation order for tables
};

// 100 * correct / total. Callers must not pass total == 0.
double accuracy_percent(int correct, int total);

// easy iff the baseline graded the question correctly. `universe` lists every
// question the experiment ran; a baseline gap or duplicate raises
// std::invalid_argument naming the ids.
DifficultyMap classify_difficulty(const std::vector<GradedResult>& baseline_results,
                                  const std::vector<QuestionKey>& universe);

std::map<std::tuple<std::string, std::string, Difficulty>, Cell> stratified_accuracy(
    const std::vector<GradedResult>& results, const DifficultyMap& difficulty);

std::map<std::tuple<std::string, std::string, Difficulty>, WordCell> word_stats(
    const std::vector<GradedResult>& results, const DifficultyMap& difficulty);

std::map<std::pair<Dataset, std::string>, Cell> incomplete_rate(
    const std::vector<GradedResult>& results);

// Assembles the full bundle; the strategy named `baseline_strategy` defines
// the difficulty split and must cover every question in `universe`.
ReportBundle make_report(const std::vector<GradedResult>& results,
                         const std::vector<QuestionKey>& universe,
                         const std::string& baseline_strategy,
                         const std::vector<std::string>& strategy_order);

// Half-up rounding to one decimal, applied at emission only.
std::string format_1dp(double v);

// Writes accuracy.csv, stratified_accuracy.csv, word_stats.csv,
// incomplete_rate.csv, counts.csv and report.md under `dir`. An empty bundle
// is an error; no files are written.
void emit_report(const ReportBundle& bundle, const std::filesystem::path& dir);

}  // namespace qap

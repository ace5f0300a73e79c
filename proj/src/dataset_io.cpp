#include "qap/dataset_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "qap/numbers.hpp"

namespace qap {
namespace {

using nlohmann::json;

std::string padded_index(size_t i) {
  std::ostringstream ss;
  std::string digits = std::to_string(i);
  for (size_t k = digits.size(); k < 4; ++k) ss << '0';
  ss << digits;
  return ss.str();
}

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string require_string(const json& j, const char* field, const std::string& path, size_t line) {
  if (!j.contains(field) || !j.at(field).is_string()) {
    throw LoadError(path, line, std::string("missing or non-string field \"") + field + "\"");
  }
  return j.at(field).get<std::string>();
}

void check_unique_ids(const std::vector<QuestionRecord>& records, const std::string& path) {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.id).second) {
      throw LoadError(path + ": duplicate record id '" + r.id + "'");
    }
  }
}

void validate_or_rethrow(const QuestionRecord& r, const std::string& path, size_t line) {
  try {
    validate_record(r);
  } catch (const std::invalid_argument& e) {
    throw LoadError(path, line, e.what());
  }
}

// Splits "A)24" / "(A) 24" into label + text; the label must be a single
// letter A..E.
std::pair<std::string, std::string> parse_option(const std::string& raw, const std::string& path,
                                                 size_t line) {
  const size_t sep = raw.find(')');
  if (sep == std::string::npos) {
    throw LoadError(path, line, "option '" + raw + "' has no ')' separator");
  }
  std::string label = trim(raw.substr(0, sep));
  if (!label.empty() && label.front() == '(') label = trim(label.substr(1));
  std::string text = trim(raw.substr(sep + 1));
  if (label.size() != 1 || label[0] < 'A' || label[0] > 'E') {
    throw LoadError(path, line, "option '" + raw + "' has no single-letter A..E label");
  }
  return {label, text};
}

std::vector<QuestionRecord> load_choice_jsonl(Dataset dataset, const std::filesystem::path& path,
                                              const char* answer_field,
                                              const char* fallback_answer_field) {
  std::vector<QuestionRecord> records;
  for (const auto& [lineno, j] : read_jsonl(path)) {
    QuestionRecord r;
    r.dataset = dataset;
    r.answer_kind = AnswerKind::multiple_choice;
    r.id = j.contains("id") && j.at("id").is_string() ? j.at("id").get<std::string>()
                                                      : padded_index(records.size());
    r.question_text = require_string(j, "question", path.string(), lineno);
    if (j.contains("passage") && j.at("passage").is_string()) {
      const std::string passage = trim(j.at("passage").get<std::string>());
      if (!passage.empty()) r.question_text = passage + "\n" + r.question_text;
    }
    if (!j.contains("options") || !j.at("options").is_array() || j.at("options").empty()) {
      throw LoadError(path.string(), lineno, "missing or empty \"options\" array");
    }
    for (const auto& opt : j.at("options")) {
      if (!opt.is_string()) throw LoadError(path.string(), lineno, "non-string option");
      r.options.push_back(parse_option(opt.get<std::string>(), path.string(), lineno));
    }
    std::string correct;
    if (j.contains(answer_field) && j.at(answer_field).is_string()) {
      correct = j.at(answer_field).get<std::string>();
    } else if (fallback_answer_field && j.contains(fallback_answer_field) &&
               j.at(fallback_answer_field).is_string()) {
      correct = j.at(fallback_answer_field).get<std::string>();
    } else {
      throw LoadError(path.string(), lineno,
                      std::string("missing answer field \"") + answer_field + "\"");
    }
    correct = trim(correct);
    if (!correct.empty() && correct.front() == '(') correct = trim(correct.substr(1));
    if (!correct.empty() && correct.back() == ')') correct = trim(correct.substr(0, correct.size() - 1));
    if (correct.size() == 1) correct[0] = static_cast<char>(std::toupper(correct[0]));
    r.gold_answer = correct;
    bool found = false;
    for (const auto& [label, text] : r.options) {
      if (label == r.gold_answer) found = true;
    }
    if (!found) {
      throw LoadError(path.string(), lineno,
                      "correct answer '" + r.gold_answer + "' is not among the option labels");
    }
    validate_or_rethrow(r, path.string(), lineno);
    records.push_back(std::move(r));
  }
  check_unique_ids(records, path.string());
  return records;
}

QuestionRecord strategyqa_record(const json& j, size_t index, const std::string& path, size_t line) {
  QuestionRecord r;
  r.dataset = Dataset::strategyqa;
  r.answer_kind = AnswerKind::boolean_answer;
  if (j.contains("qid") && j.at("qid").is_string()) {
    r.id = j.at("qid").get<std::string>();
  } else if (j.contains("id") && j.at("id").is_string()) {
    r.id = j.at("id").get<std::string>();
  } else {
    r.id = padded_index(index);
  }
  r.question_text = require_string(j, "question", path, line);
  if (!j.contains("answer") || !j.at("answer").is_boolean()) {
    throw LoadError(path, line, "missing or non-boolean \"answer\" field");
  }
  r.gold_answer = j.at("answer").get<bool>() ? "yes" : "no";
  validate_or_rethrow(r, path, line);
  return r;
}

}  // namespace

std::vector<QuestionRecord> load_gsm8k(const std::filesystem::path& path) {
  std::vector<QuestionRecord> records;
  for (const auto& [lineno, j] : read_jsonl(path)) {
    QuestionRecord r;
    r.dataset = Dataset::gsm8k;
    r.answer_kind = AnswerKind::numeric;
    r.id = j.contains("id") && j.at("id").is_string() ? j.at("id").get<std::string>()
                                                      : padded_index(records.size());
    r.question_text = require_string(j, "question", path.string(), lineno);
    const std::string answer = require_string(j, "answer", path.string(), lineno);
    const size_t marker = answer.rfind("####");
    if (marker == std::string::npos) {
      throw LoadError(path.string(), lineno, "answer field has no \"####\" marker");
    }
    r.gold_answer = canonicalize_number(answer.substr(marker + 4));
    validate_or_rethrow(r, path.string(), lineno);
    records.push_back(std::move(r));
  }
  check_unique_ids(records, path.string());
  return records;
}

std::vector<QuestionRecord> load_aqua(const std::filesystem::path& path) {
  return load_choice_jsonl(Dataset::aqua, path, "correct", nullptr);
}

std::vector<QuestionRecord> load_agieval_sat(const std::filesystem::path& path) {
  return load_choice_jsonl(Dataset::sat_math, path, "label", "answer");
}

std::vector<QuestionRecord> load_strategyqa(const std::filesystem::path& path) {
  std::vector<QuestionRecord> records;
  // The official release is a JSON array; JSON-lines distributions also exist.
  std::string content = read_file(path);
  size_t first = content.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && content[first] == '[') {
    nlohmann::json root = nlohmann::json::parse(content, nullptr, false);
    if (root.is_discarded() || !root.is_array()) {
      throw LoadError(path.string() + ": malformed JSON array");
    }
    for (size_t i = 0; i < root.size(); ++i) {
      records.push_back(strategyqa_record(root[i], i, path.string(), i + 1));
    }
  } else {
    for (const auto& [lineno, j] : read_jsonl(path)) {
      records.push_back(strategyqa_record(j, records.size(), path.string(), lineno));
    }
  }
  check_unique_ids(records, path.string());
  return records;
}

std::vector<QuestionRecord> load_dataset(Dataset dataset, const std::filesystem::path& path) {
  switch (dataset) {
    case Dataset::gsm8k: return load_gsm8k(path);
    case Dataset::aqua: return load_aqua(path);
    case Dataset::sat_math: return load_agieval_sat(path);
    case Dataset::strategyqa: return load_strategyqa(path);
  }
  throw std::invalid_argument("unknown dataset");
}

nlohmann::ordered_json record_to_json(const QuestionRecord& record) {
  nlohmann::ordered_json j;
  j["id"] = record.id;
  j["dataset"] = to_string(record.dataset);
  j["question_text"] = record.question_text;
  j["answer_kind"] = to_string(record.answer_kind);
  j["gold_answer"] = record.gold_answer;
  if (record.options.empty()) {
    j["options"] = nullptr;
  } else {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [label, text] : record.options) {
      arr.push_back(nlohmann::ordered_json::array({label, text}));
    }
    j["options"] = std::move(arr);
  }
  return j;
}

QuestionRecord record_from_json(const nlohmann::json& j) {
  QuestionRecord r;
  r.id = j.at("id").get<std::string>();
  r.dataset = dataset_from_string(j.at("dataset").get<std::string>());
  r.question_text = j.at("question_text").get<std::string>();
  r.answer_kind = answer_kind_from_string(j.at("answer_kind").get<std::string>());
  r.gold_answer = j.at("gold_answer").get<std::string>();
  if (j.contains("options") && j.at("options").is_array()) {
    for (const auto& pair : j.at("options")) {
      r.options.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
    }
  }
  validate_record(r);
  return r;
}

void write_records(const std::filesystem::path& path, const std::vector<QuestionRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) out << record_to_json(r).dump() << "\n";
  atomic_write(path, out.str());
}

std::vector<QuestionRecord> read_records(const std::filesystem::path& path) {
  std::vector<QuestionRecord> records;
  for (const auto& [lineno, j] : read_jsonl(path)) {
    try {
      records.push_back(record_from_json(j));
    } catch (const std::exception& e) {
      throw LoadError(path.string(), lineno, e.what());
    }
  }
  check_unique_ids(records, path.string());
  return records;
}

}  // namespace qap

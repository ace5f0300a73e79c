#include <atomic>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "qap/jsonl.hpp"
#include "qap/numbers.hpp"
#include "qap/types.hpp"

namespace qap {

const char* to_string(Dataset d) {
  switch (d) {
    case Dataset::gsm8k: return "gsm8k";
    case Dataset::aqua: return "aqua";
    case Dataset::sat_math: return "sat_math";
    case Dataset::strategyqa: return "strategyqa";
  }
  return "?";
}

const char* to_string(AnswerKind k) {
  switch (k) {
    case AnswerKind::numeric: return "numeric";
    case AnswerKind::multiple_choice: return "multiple_choice";
    case AnswerKind::boolean_answer: return "boolean";
  }
  return "?";
}

const char* to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "?";
}

Dataset dataset_from_string(const std::string& s) {
  if (s == "gsm8k") return Dataset::gsm8k;
  if (s == "aqua") return Dataset::aqua;
  if (s == "sat_math") return Dataset::sat_math;
  if (s == "strategyqa") return Dataset::strategyqa;
  throw std::invalid_argument("unknown dataset: " + s);
}

AnswerKind answer_kind_from_string(const std::string& s) {
  if (s == "numeric") return AnswerKind::numeric;
  if (s == "multiple_choice") return AnswerKind::multiple_choice;
  if (s == "boolean") return AnswerKind::boolean_answer;
  throw std::invalid_argument("unknown answer kind: " + s);
}

Role role_from_string(const std::string& s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw std::invalid_argument("unknown role: " + s);
}

FinishReason FinishReason::from_raw(const std::string& raw) {
  if (raw == "stop") return stop();
  if (raw == "length") return length();
  return {Kind::other, raw};
}

void validate_record(const QuestionRecord& record) {
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument("record '" + record.id + "': " + why);
  };
  if (record.question_text.empty()) fail("question_text is empty");
  switch (record.answer_kind) {
    case AnswerKind::numeric: {
      if (!record.options.empty()) fail("numeric record carries options");
      if (!parse_decimal(canonicalize_number(record.gold_answer))) {
        fail("gold_answer '" + record.gold_answer + "' is not a finite decimal");
      }
      break;
    }
    case AnswerKind::multiple_choice: {
      if (record.options.empty()) fail("multiple_choice record has no options");
      if (record.options.size() > 5) fail("more than five options");
      for (size_t i = 0; i < record.options.size(); ++i) {
        const std::string expected(1, static_cast<char>('A' + i));
        if (record.options[i].first != expected) {
          fail("option label '" + record.options[i].first + "' at position " +
               std::to_string(i) + ", expected '" + expected + "'");
        }
      }
      bool gold_is_label = false;
      for (const auto& [label, text] : record.options) {
        if (label == record.gold_answer) gold_is_label = true;
      }
      if (!gold_is_label) fail("gold_answer '" + record.gold_answer + "' is not an option label");
      break;
    }
    case AnswerKind::boolean_answer: {
      if (!record.options.empty()) fail("boolean record carries options");
      if (record.gold_answer != "yes" && record.gold_answer != "no") {
        fail("gold_answer '" + record.gold_answer + "' is not yes/no");
      }
      break;
    }
  }
}

// ---- numbers ----

std::string canonicalize_number(const std::string& token) {
  std::string out;
  out.reserve(token.size());
  for (char c : token) {
    if (c == ',' || c == '$' || c == '%') continue;
    out.push_back(c);
  }
  size_t start = 0, end = out.size();
  while (start < end && std::isspace(static_cast<unsigned char>(out[start]))) ++start;
  while (end > start && std::isspace(static_cast<unsigned char>(out[end - 1]))) --end;
  out = out.substr(start, end - start);
  if (!out.empty() && out.back() == '.') out.pop_back();
  if (!out.empty() && out.front() == '+') out.erase(out.begin());
  return out;
}

std::optional<double> parse_decimal(const std::string& canonical) {
  if (canonical.empty()) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(canonical.c_str(), &end);
  if (end != canonical.c_str() + canonical.size()) return std::nullopt;
  if (errno == ERANGE || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::vector<NumberToken> find_numbers(const std::string& text) {
  std::vector<NumberToken> out;
  const size_t n = text.size();
  auto is_digit = [&](size_t i) {
    return i < n && std::isdigit(static_cast<unsigned char>(text[i]));
  };
  size_t i = 0;
  while (i < n) {
    if (!is_digit(i)) {
      ++i;
      continue;
    }
    size_t start = i;
    // pull in "$" prefix and a sign when it starts the token
    if (start > 0 && text[start - 1] == '$') --start;
    if (start > 0 && (text[start - 1] == '-' || text[start - 1] == '+')) {
      const size_t s = start - 1;
      const char before = s > 0 ? text[s - 1] : ' ';
      if (s == 0 || std::isspace(static_cast<unsigned char>(before)) || before == '(' ||
          before == '=' || before == ':') {
        start = s;
      }
    }
    // skip digits glued to an identifier ("QAP150")
    if (start > 0 && (std::isalnum(static_cast<unsigned char>(text[start - 1])) ||
                      text[start - 1] == '_')) {
      while (is_digit(i)) ++i;
      continue;
    }
    size_t j = i;
    while (is_digit(j)) ++j;
    // thousands groups
    while (j < n && text[j] == ',' && is_digit(j + 1)) {
      ++j;
      while (is_digit(j)) ++j;
    }
    // one decimal part
    if (j < n && text[j] == '.' && is_digit(j + 1)) {
      ++j;
      while (is_digit(j)) ++j;
    }
    if (j < n && text[j] == '%') ++j;
    out.push_back({start, text.substr(start, j - start)});
    i = j;
  }
  return out;
}

// ---- jsonl ----

std::vector<JsonLine> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<JsonLine> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool blank = true;
    for (char c : line) {
      if (!std::isspace(static_cast<unsigned char>(c))) {
        blank = false;
        break;
      }
    }
    if (blank) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw LoadError(path.string(), lineno, "malformed JSON line");
    }
    out.push_back({lineno, std::move(j)});
  }
  return out;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  static std::atomic<unsigned> counter{0};
  std::random_device rd;
  std::ostringstream tmp_name;
  tmp_name << "." << path.filename().string() << ".tmp." << rd() << "." << counter++;
  fs::path tmp = (dir.empty() ? fs::path(".") : dir) / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace qap

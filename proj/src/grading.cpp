#include "qap/grading.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>

#include "qap/numbers.hpp"

namespace qap {
namespace {

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

// Case-insensitive occurrences of `needle`, ascending.
std::vector<size_t> find_all_ci(const std::string& text, const std::string& needle) {
  std::vector<size_t> out;
  if (needle.empty() || text.size() < needle.size()) return out;
  for (size_t i = 0; i + needle.size() <= text.size(); ++i) {
    bool match = true;
    for (size_t k = 0; k < needle.size(); ++k) {
      if (lower(text[i + k]) != lower(needle[k])) {
        match = false;
        break;
      }
    }
    if (match) out.push_back(i);
  }
  return out;
}

// Marker end positions (after the marker text), ascending.
std::vector<size_t> marker_ends(const std::string& text, const std::vector<std::string>& markers) {
  std::vector<size_t> ends;
  for (const auto& m : markers) {
    for (size_t pos : find_all_ci(text, m)) ends.push_back(pos + m.size());
  }
  std::sort(ends.begin(), ends.end());
  return ends;
}

bool valid_label(char c, const std::vector<std::pair<std::string, std::string>>& options) {
  for (const auto& [label, text] : options) {
    if (!label.empty() && label[0] == c) return true;
  }
  return false;
}

std::string final_line(const std::string& text) {
  size_t end = text.find_last_not_of(" \t\r\n");
  if (end == std::string::npos) return "";
  size_t start = text.rfind('\n', end);
  start = (start == std::string::npos) ? 0 : start + 1;
  return text.substr(start, end - start + 1);
}

// Last sentence: the text after the previous '.', '!' or '?' terminator.
std::string final_sentence(const std::string& text) {
  size_t end = text.find_last_not_of(" \t\r\n");
  if (end == std::string::npos) return "";
  size_t cut = end;
  // Skip a terminator that closes the final sentence itself.
  while (cut > 0 && (text[cut] == '.' || text[cut] == '!' || text[cut] == '?')) --cut;
  size_t start = 0;
  for (size_t i = cut; i > 0; --i) {
    if (text[i - 1] == '.' || text[i - 1] == '!' || text[i - 1] == '?' || text[i - 1] == '\n') {
      start = i;
      break;
    }
  }
  return text.substr(start, end - start + 1);
}

// Last standalone yes/no (word boundaries, case-insensitive) at or after
// `from` within `text`; returns canonical "yes"/"no".
std::optional<std::string> last_yes_no(const std::string& text, size_t from) {
  std::optional<std::string> result;
  size_t best = 0;
  for (const char* word : {"yes", "no"}) {
    const size_t len = std::strlen(word);
    for (size_t pos : find_all_ci(text, word)) {
      if (pos < from) continue;
      if (pos > 0 && is_alpha(text[pos - 1])) continue;
      if (pos + len < text.size() && is_alpha(text[pos + len])) continue;
      if (!result || pos > best) {
        result = word;
        best = pos;
      }
    }
  }
  return result;
}

}  // namespace

std::optional<std::string> extract_numeric(const std::string& text) {
  const std::vector<NumberToken> numbers = find_numbers(text);
  if (numbers.empty()) return std::nullopt;
  const std::vector<size_t> ends = marker_ends(text, {"answer is", "answer:", "####"});
  // Last marker that is followed by a number wins.
  for (auto it = ends.rbegin(); it != ends.rend(); ++it) {
    for (const auto& tok : numbers) {
      if (tok.pos >= *it) {
        return canonicalize_number(tok.text);
      }
    }
  }
  return canonicalize_number(numbers.back().text);
}

std::optional<std::string> extract_choice(
    const std::string& text, const std::vector<std::pair<std::string, std::string>>& options) {
  if (options.empty()) return std::nullopt;
  auto canonical = [&](char c) -> std::optional<std::string> {
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (valid_label(upper, options)) return std::string(1, upper);
    return std::nullopt;
  };

  // (1) last "answer is X", allowing ":", "option"/"choice" words, "(X)" and a
  // lowercase letter.
  {
    std::vector<size_t> ends = marker_ends(text, {"answer is"});
    for (auto it = ends.rbegin(); it != ends.rend(); ++it) {
      size_t i = *it;
      while (i < text.size() && (text[i] == ' ' || text[i] == ':' || text[i] == '\n')) ++i;
      for (const char* word : {"option ", "choice ", "option(", "choice("}) {
        const size_t len = std::strlen(word);
        if (text.compare(i, len, word) == 0) {
          i += len;
          break;
        }
      }
      if (i < text.size() && text[i] == '(') ++i;
      if (i < text.size() && (i + 1 >= text.size() || !is_alnum(text[i + 1]))) {
        if (auto label = canonical(text[i])) return label;
      }
    }
  }
  // (2) rightmost of "(X)" (case-insensitive), "X)" and standalone "X"
  // (uppercase; lowercase letters collide with prose and enumerations).
  {
    std::optional<std::string> best;
    size_t best_pos = 0;
    auto consider = [&](size_t pos, const std::string& label) {
      if (!best || pos > best_pos) {
        best = label;
        best_pos = pos;
      }
    };
    for (size_t i = 0; i < text.size(); ++i) {
      if (text[i] == '(' && i + 2 < text.size() && text[i + 2] == ')') {
        if (auto label = canonical(text[i + 1])) consider(i + 1, *label);
      }
      const bool upper_label = valid_label(text[i], options) &&
                               std::isupper(static_cast<unsigned char>(text[i]));
      if (!upper_label) continue;
      const bool boundary_before = i == 0 || !is_alnum(text[i - 1]);
      if (boundary_before && i + 1 < text.size() && text[i + 1] == ')') {
        consider(i, std::string(1, text[i]));
      } else if (boundary_before && (i + 1 >= text.size() || !is_alnum(text[i + 1]))) {
        consider(i, std::string(1, text[i]));
      }
    }
    if (best) return best;
  }
  // (3) unique option text appearing verbatim in the final line.
  const std::string line = final_line(text);
  std::optional<std::string> match;
  for (const auto& [label, opt_text] : options) {
    if (!opt_text.empty() && line.find(opt_text) != std::string::npos) {
      if (match) return std::nullopt;  // ambiguous
      match = label;
    }
  }
  return match;
}

std::optional<std::string> extract_boolean(const std::string& text) {
  const std::vector<size_t> ends = marker_ends(text, {"answer is"});
  if (!ends.empty()) {
    if (auto hit = last_yes_no(text, ends.back())) return hit;
  }
  return last_yes_no(final_sentence(text), 0);
}

int word_count(const std::string& text) {
  int count = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++count;
    in_word = !space;
  }
  return count;
}

bool detect_incomplete(const ChatResponse& response, const std::optional<std::string>& extracted) {
  return response.finish_reason.kind == FinishReason::Kind::length || !extracted.has_value();
}

bool answers_match(AnswerKind kind, const std::string& gold, const std::string& extracted) {
  switch (kind) {
    case AnswerKind::numeric: {
      auto g = parse_decimal(canonicalize_number(gold));
      auto e = parse_decimal(canonicalize_number(extracted));
      return g && e && std::fabs(*g - *e) <= 1e-6;
    }
    case AnswerKind::multiple_choice:
    case AnswerKind::boolean_answer:
      return gold == extracted;
  }
  return false;
}

GradedResult grade(const QuestionRecord& record, const Transcript& transcript) {
  if (record.id != transcript.question_id) {
    throw std::invalid_argument("grade: record/transcript id mismatch (" + record.id + " vs " +
                                transcript.question_id + ")");
  }
  GradedResult g;
  g.question_id = transcript.question_id;
  g.dataset = transcript.dataset;
  g.strategy_name = transcript.strategy_name;
  if (!transcript.response) {
    g.failed = true;
    g.incomplete = true;
    return g;
  }
  const std::string& text = transcript.response->text;
  switch (record.answer_kind) {
    case AnswerKind::numeric:
      g.extracted = extract_numeric(text);
      break;
    case AnswerKind::multiple_choice:
      g.extracted = extract_choice(text, record.options);
      break;
    case AnswerKind::boolean_answer:
      g.extracted = extract_boolean(text);
      break;
  }
  g.correct = g.extracted && answers_match(record.answer_kind, record.gold_answer, *g.extracted);
  g.incomplete = detect_incomplete(*transcript.response, g.extracted);
  g.word_count = word_count(text);
  return g;
}

// ---- persistence ----

nlohmann::ordered_json message_sequence_to_json(const MessageSequence& messages) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& m : messages) {
    arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  return arr;
}

MessageSequence message_sequence_from_json(const nlohmann::json& j) {
  MessageSequence out;
  for (const auto& m : j) {
    out.push_back({role_from_string(m.at("role").get<std::string>()),
                   m.at("content").get<std::string>()});
  }
  return out;
}

nlohmann::ordered_json transcript_to_json(const Transcript& t) {
  nlohmann::ordered_json j;
  j["question_id"] = t.question_id;
  j["dataset"] = to_string(t.dataset);
  j["strategy"] = t.strategy_name;
  j["timestamp"] = t.timestamp;
  nlohmann::ordered_json req;
  req["model"] = t.request.model;
  req["temperature"] = t.request.temperature;
  req["max_output_tokens"] = t.request.max_output_tokens;
  req["request_tag"] = t.request.request_tag;
  req["messages"] = message_sequence_to_json(t.request.messages);
  j["request"] = std::move(req);
  if (t.response) {
    nlohmann::ordered_json resp;
    resp["text"] = t.response->text;
    resp["finish_reason"] = t.response->finish_reason.raw;
    resp["prompt_tokens"] = t.response->prompt_tokens;
    resp["completion_tokens"] = t.response->completion_tokens;
    resp["latency_ms"] = t.response->latency_ms;
    j["response"] = std::move(resp);
  } else {
    j["response"] = nullptr;
  }
  j["stage1_response"] = t.stage1_response ? nlohmann::ordered_json(*t.stage1_response)
                                           : nlohmann::ordered_json(nullptr);
  j["error"] = t.error;
  return j;
}

Transcript transcript_from_json(const nlohmann::json& j) {
  Transcript t;
  t.question_id = j.at("question_id").get<std::string>();
  t.dataset = dataset_from_string(j.at("dataset").get<std::string>());
  t.strategy_name = j.at("strategy").get<std::string>();
  t.timestamp = j.value("timestamp", "");
  const auto& req = j.at("request");
  t.request.model = req.value("model", "");
  t.request.temperature = req.value("temperature", 0.0);
  t.request.max_output_tokens = req.value("max_output_tokens", 0);
  t.request.request_tag = req.value("request_tag", "");
  if (req.contains("messages")) t.request.messages = message_sequence_from_json(req.at("messages"));
  if (j.contains("response") && !j.at("response").is_null()) {
    const auto& resp = j.at("response");
    ChatResponse r;
    r.text = resp.at("text").get<std::string>();
    r.finish_reason = FinishReason::from_raw(resp.value("finish_reason", "stop"));
    r.prompt_tokens = resp.value("prompt_tokens", 0);
    r.completion_tokens = resp.value("completion_tokens", 0);
    r.latency_ms = resp.value("latency_ms", 0L);
    t.response = std::move(r);
  }
  if (j.contains("stage1_response") && j.at("stage1_response").is_string()) {
    t.stage1_response = j.at("stage1_response").get<std::string>();
  }
  t.error = j.value("error", "");
  return t;
}

nlohmann::ordered_json graded_to_json(const GradedResult& g) {
  nlohmann::ordered_json j;
  j["question_id"] = g.question_id;
  j["dataset"] = to_string(g.dataset);
  j["strategy"] = g.strategy_name;
  j["extracted"] = g.extracted ? nlohmann::ordered_json(*g.extracted)
                               : nlohmann::ordered_json(nullptr);
  j["correct"] = g.correct;
  j["incomplete"] = g.incomplete;
  j["failed"] = g.failed;
  j["word_count"] = g.word_count;
  return j;
}

GradedResult graded_from_json(const nlohmann::json& j) {
  GradedResult g;
  g.question_id = j.at("question_id").get<std::string>();
  g.dataset = dataset_from_string(j.at("dataset").get<std::string>());
  g.strategy_name = j.at("strategy").get<std::string>();
  if (j.contains("extracted") && j.at("extracted").is_string()) {
    g.extracted = j.at("extracted").get<std::string>();
  }
  g.correct = j.at("correct").get<bool>();
  g.incomplete = j.at("incomplete").get<bool>();
  g.failed = j.value("failed", false);
  g.word_count = j.at("word_count").get<int>();
  return g;
}

}  // namespace qap

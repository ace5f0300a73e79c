#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qap {

enum class Dataset { gsm8k, aqua, sat_math, strategyqa };
enum class AnswerKind { numeric, multiple_choice, boolean_answer };

const char* to_string(Dataset d);
const char* to_string(AnswerKind k);
Dataset dataset_from_string(const std::string& s);
AnswerKind answer_kind_from_string(const std::string& s);

// One benchmark item in canonical form. Options are empty unless the record
// is multiple choice, in which case labels are single letters A.. in order.
struct QuestionRecord {
  std::string id;
  Dataset dataset = Dataset::gsm8k;
  std::string question_text;
  AnswerKind answer_kind = AnswerKind::numeric;
  std::string gold_answer;
  std::vector<std::pair<std::string, std::string>> options;

  bool operator==(const QuestionRecord&) const = default;
};

// Validates the QuestionRecord invariants; throws std::invalid_argument with
// a message naming the offending record on violation.
void validate_record(const QuestionRecord& record);

enum class Role { system, user, assistant };

const char* to_string(Role r);
Role role_from_string(const std::string& s);

struct Message {
  Role role = Role::user;
  std::string content;

  bool operator==(const Message&) const = default;
};

using MessageSequence = std::vector<Message>;

struct FinishReason {
  enum class Kind { stop, length, other };
  Kind kind = Kind::stop;
  std::string raw = "stop";  // backend value, preserved verbatim

  static FinishReason stop() { return {Kind::stop, "stop"}; }
  static FinishReason length() { return {Kind::length, "length"}; }
  static FinishReason from_raw(const std::string& raw);

  bool operator==(const FinishReason&) const = default;
};

struct ChatRequest {
  std::string model;
  MessageSequence messages;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string request_tag;  // strategy name + question id, unique per run

  bool operator==(const ChatRequest&) const = default;
};

struct ChatResponse {
  std::string text;
  FinishReason finish_reason;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  long latency_ms = 0;

  bool operator==(const ChatResponse&) const = default;
};

// One model interaction. `response` is absent and `error` non-empty when the
// request failed after exhausting retries.
struct Transcript {
  std::string question_id;
  Dataset dataset = Dataset::gsm8k;
  std::string strategy_name;
  ChatRequest request;
  std::optional<ChatResponse> response;
  std::optional<std::string> stage1_response;  // two-stage strategies only
  std::string error;
  std::string timestamp;  // ISO-8601 UTC; excluded from golden comparisons
};

struct GradedResult {
  std::string question_id;
  Dataset dataset = Dataset::gsm8k;
  std::string strategy_name;
  std::optional<std::string> extracted;
  bool correct = false;
  bool incomplete = false;
  bool failed = false;  // request never produced a response
  int word_count = 0;

  bool operator==(const GradedResult&) const = default;
};

}  // namespace qap

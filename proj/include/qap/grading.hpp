#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qap/types.hpp"

namespace qap {

// Final-answer extraction. All extractors are total: any input yields a
// canonical value or nullopt, never an error.

// Numeric: last marker among {"answer is", "answer:", "####"} followed by a
// number wins; otherwise the last number token. Result is canonicalized.
std::optional<std::string> extract_numeric(const std::string& text);

// Choice: tries, in order, the last "answer is X", "(X)", "X)" and standalone
// "X" with X a valid label; otherwise the unique option whose text appears
// verbatim in the final line.
std::optional<std::string> extract_choice(
    const std::string& text, const std::vector<std::pair<std::string, std::string>>& options);

// Boolean: last standalone yes/no after the last "answer is" marker, else the
// last standalone yes/no in the final sentence.
std::optional<std::string> extract_boolean(const std::string& text);

// Count of maximal nonempty runs of non-whitespace characters.
int word_count(const std::string& text);

bool detect_incomplete(const ChatResponse& response, const std::optional<std::string>& extracted);

// Numeric correctness uses decimal equality within 1e-6 after
// canonicalization; choice and boolean require exact canonical match.
bool answers_match(AnswerKind kind, const std::string& gold, const std::string& extracted);

GradedResult grade(const QuestionRecord& record, const Transcript& transcript);

// Persistence (JSON-lines, one object per line).
nlohmann::ordered_json transcript_to_json(const Transcript& t);
Transcript transcript_from_json(const nlohmann::json& j);
nlohmann::ordered_json graded_to_json(const GradedResult& g);
GradedResult graded_from_json(const nlohmann::json& j);

nlohmann::ordered_json message_sequence_to_json(const MessageSequence& messages);
MessageSequence message_sequence_from_json(const nlohmann::json& j);

}  // namespace qap

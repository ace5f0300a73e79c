#pragma once

#include <filesystem>
#include <vector>

#include "json.hpp"
#include "qap/jsonl.hpp"
#include "qap/types.hpp"

namespace qap {

// Benchmark loaders. Each returns one record per source line/entry or raises
// LoadError with the offending position; records are never dropped silently.

// JSON-lines with "question" and "answer"; the answer rationale ends with a
// line "#### <final>". Gold answers are canonicalized numbers.
std::vector<QuestionRecord> load_gsm8k(const std::filesystem::path& path);

// JSON-lines with "question", "options" (["A)24", ...]) and "correct".
std::vector<QuestionRecord> load_aqua(const std::filesystem::path& path);

// JSON-lines with "question", "options" and "label" (or "answer"); options
// may carry "(A)..." style labels. A non-null "passage" is prepended to the
// question text.
std::vector<QuestionRecord> load_agieval_sat(const std::filesystem::path& path);

// JSON array or JSON-lines with "question" and boolean "answer"; uses "qid"
// as the id when present.
std::vector<QuestionRecord> load_strategyqa(const std::filesystem::path& path);

std::vector<QuestionRecord> load_dataset(Dataset dataset, const std::filesystem::path& path);

// Canonical record format: one JSON object per line with fields exactly
// id, dataset, question_text, answer_kind, gold_answer, options.
nlohmann::ordered_json record_to_json(const QuestionRecord& record);
QuestionRecord record_from_json(const nlohmann::json& j);

void write_records(const std::filesystem::path& path, const std::vector<QuestionRecord>& records);
std::vector<QuestionRecord> read_records(const std::filesystem::path& path);

}  // namespace qap

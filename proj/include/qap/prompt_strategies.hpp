#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qap/types.hpp"

namespace qap {

enum class StrategyKind { baseline, qap, tadb, ps_plus, cot8, two_stage_qap };
enum class Placement { q_begin, q_end };

const char* to_string(StrategyKind k);
const char* to_string(Placement p);
StrategyKind strategy_kind_from_string(const std::string& s);
Placement placement_from_string(const std::string& s);

struct Exemplar {
  std::string question;
  std::string rationale;
  std::string answer;

  bool operator==(const Exemplar&) const = default;
};

// A fully-parameterized prompting strategy.
struct PromptSpec {
  std::string name;
  StrategyKind kind = StrategyKind::baseline;
  std::optional<int> n;                           // qap / two_stage_qap word target
  Placement placement = Placement::q_end;
  std::optional<std::string> instruction_text;    // ps_plus body
  std::string exemplar_path;                      // cot8 source file, may be empty
  std::vector<Exemplar> exemplars;                // cot8, exactly 8 when loaded
  std::optional<std::string> answer_directive;    // absent => per-answer-kind default
  std::optional<std::string> system_message;

  bool operator==(const PromptSpec&) const = default;
};

using Registry = std::map<std::string, PromptSpec>;

// Question text plus the options block for multiple choice: a blank line then
// one "label) text" per line.
std::string question_block(const QuestionRecord& record);

// The directive appended to solving prompts: the spec's explicit value when
// set, otherwise empty for numeric/boolean and a single-letter instruction
// for multiple choice.
std::string effective_directive(const PromptSpec& spec, const QuestionRecord& record);

MessageSequence render_baseline(const QuestionRecord& record, const std::string& answer_directive);
MessageSequence render_qap(const QuestionRecord& record, int n, Placement placement,
                           const std::string& answer_directive);
MessageSequence render_tadb(const QuestionRecord& record, Placement placement,
                            const std::string& answer_directive);
MessageSequence render_ps_plus(const QuestionRecord& record, const std::string& instruction,
                               Placement placement, const std::string& answer_directive);
MessageSequence render_cot8(const QuestionRecord& record, const std::vector<Exemplar>& exemplars);
// Without stage1_response renders stage 1 (explain only); with it, stage 2
// (question + explanation + solve directive).
MessageSequence render_two_stage(const QuestionRecord& record, int n,
                                 const std::optional<std::string>& stage1_response,
                                 const std::string& answer_directive);

// Renders `spec` for `record`, dispatching on kind. For two-stage strategies
// pass the stage-1 response text to obtain the stage-2 message.
MessageSequence render(const PromptSpec& spec, const QuestionRecord& record,
                       const std::optional<std::string>& stage1_response = std::nullopt);

std::string qap_instruction(int n);
std::string two_stage_stage1_instruction(int n);
extern const char* const kTadbInstruction;
extern const char* const kTwoStageSolveDirective;

// Throws std::invalid_argument when the spec violates its invariants.
void validate_spec(const PromptSpec& spec);

// Registry file: {"strategies": [{name, kind, n?, placement?, instruction_text?,
// exemplar_path? | exemplars?, answer_directive?, system_message?}, ...]}.
// exemplar_path is resolved against the registry file's directory.
Registry registry_load(const std::filesystem::path& path);
std::string registry_serialize(const Registry& registry);
Registry registry_parse(const std::string& content, const std::filesystem::path& base_dir);

// The nine stock strategies: baseline, qap25..qap200, tadb, cot8, ps_plus.
Registry default_registry();

std::vector<Exemplar> load_exemplars(const std::filesystem::path& path);

}  // namespace qap

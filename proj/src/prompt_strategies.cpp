#include "qap/prompt_strategies.hpp"

#include <sstream>

#include "json.hpp"
#include "qap/jsonl.hpp"

namespace qap {

const char* const kTadbInstruction = "Take a deep breath and work on this problem step-by-step";
const char* const kTwoStageSolveDirective = "Now solve for the answer.";

// Stock PS+ instruction, sourced from its original publication; registry
// entries may override it.
static const char* const kDefaultPsPlusInstruction =
    "Let's first understand the problem, extract relevant variables and their corresponding "
    "numerals, and make and devise a complete plan. Then, let's carry out the plan, calculate "
    "intermediate variables (pay attention to correct numerical calculation and commonsense), "
    "solve the problem step by step, and show the answer.";

const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::baseline: return "baseline";
    case StrategyKind::qap: return "qap";
    case StrategyKind::tadb: return "tadb";
    case StrategyKind::ps_plus: return "ps_plus";
    case StrategyKind::cot8: return "cot8";
    case StrategyKind::two_stage_qap: return "two_stage_qap";
  }
  return "?";
}

const char* to_string(Placement p) {
  return p == Placement::q_begin ? "q_begin" : "q_end";
}

StrategyKind strategy_kind_from_string(const std::string& s) {
  if (s == "baseline") return StrategyKind::baseline;
  if (s == "qap") return StrategyKind::qap;
  if (s == "tadb") return StrategyKind::tadb;
  if (s == "ps_plus") return StrategyKind::ps_plus;
  if (s == "cot8") return StrategyKind::cot8;
  if (s == "two_stage_qap") return StrategyKind::two_stage_qap;
  throw std::invalid_argument("unknown strategy kind: " + s);
}

Placement placement_from_string(const std::string& s) {
  if (s == "q_begin") return Placement::q_begin;
  if (s == "q_end") return Placement::q_end;
  throw std::invalid_argument("unknown placement: " + s);
}

std::string qap_instruction(int n) {
  return "Explain this problem to me in at least " + std::to_string(n) +
         " words. Then solve for the answer.";
}

std::string two_stage_stage1_instruction(int n) {
  return "Explain this problem to me in at least " + std::to_string(n) +
         " words WITHOUT SOLVING.";
}

std::string question_block(const QuestionRecord& record) {
  if (record.options.empty()) return record.question_text;
  std::ostringstream out;
  out << record.question_text << "\n";
  for (const auto& [label, text] : record.options) {
    out << "\n" << label << ") " << text;
  }
  return out.str();
}

std::string effective_directive(const PromptSpec& spec, const QuestionRecord& record) {
  if (spec.answer_directive) return *spec.answer_directive;
  if (record.answer_kind == AnswerKind::multiple_choice) {
    return "Answer with a single letter (A–E).";
  }
  return "";
}

namespace {

std::string with_directive(std::string content, const std::string& directive) {
  if (!directive.empty()) content += "\n" + directive;
  return content;
}

std::string place_instruction(const std::string& question, const std::string& instruction,
                              Placement placement) {
  if (placement == Placement::q_begin) return instruction + "\n" + question;
  return question + "\n" + instruction;
}

}  // namespace

MessageSequence render_baseline(const QuestionRecord& record, const std::string& answer_directive) {
  return {{Role::user, with_directive(question_block(record), answer_directive)}};
}

MessageSequence render_qap(const QuestionRecord& record, int n, Placement placement,
                           const std::string& answer_directive) {
  if (n < 1) throw std::invalid_argument("qap requires n >= 1");
  return {{Role::user, with_directive(place_instruction(question_block(record), qap_instruction(n),
                                                        placement),
                                      answer_directive)}};
}

MessageSequence render_tadb(const QuestionRecord& record, Placement placement,
                            const std::string& answer_directive) {
  return {{Role::user, with_directive(place_instruction(question_block(record), kTadbInstruction,
                                                        placement),
                                      answer_directive)}};
}

MessageSequence render_ps_plus(const QuestionRecord& record, const std::string& instruction,
                               Placement placement, const std::string& answer_directive) {
  if (instruction.empty()) throw std::invalid_argument("ps_plus instruction text is missing");
  return {{Role::user, with_directive(place_instruction(question_block(record), instruction,
                                                        placement),
                                      answer_directive)}};
}

MessageSequence render_cot8(const QuestionRecord& record, const std::vector<Exemplar>& exemplars) {
  if (exemplars.size() != 8) {
    throw std::invalid_argument("cot8 requires exactly 8 exemplars, got " +
                                std::to_string(exemplars.size()));
  }
  std::ostringstream out;
  for (const auto& ex : exemplars) {
    out << "Q: " << ex.question << "\nA: " << ex.rationale << " The answer is " << ex.answer
        << ".\n\n";
  }
  out << "Q: " << question_block(record) << "\nA:";
  return {{Role::user, out.str()}};
}

MessageSequence render_two_stage(const QuestionRecord& record, int n,
                                 const std::optional<std::string>& stage1_response,
                                 const std::string& answer_directive) {
  if (n < 1) throw std::invalid_argument("two_stage_qap requires n >= 1");
  const std::string question = question_block(record);
  if (!stage1_response) {
    return {{Role::user, question + "\n" + two_stage_stage1_instruction(n)}};
  }
  std::string content = question + "\nExplanation: " + *stage1_response + "\n" +
                        kTwoStageSolveDirective;
  return {{Role::user, with_directive(std::move(content), answer_directive)}};
}

MessageSequence render(const PromptSpec& spec, const QuestionRecord& record,
                       const std::optional<std::string>& stage1_response) {
  const std::string directive = effective_directive(spec, record);
  MessageSequence rendered;
  switch (spec.kind) {
    case StrategyKind::baseline:
      rendered = render_baseline(record, directive);
      break;
    case StrategyKind::qap:
      rendered = render_qap(record, spec.n.value(), spec.placement, directive);
      break;
    case StrategyKind::tadb:
      rendered = render_tadb(record, spec.placement, directive);
      break;
    case StrategyKind::ps_plus:
      rendered = render_ps_plus(record, spec.instruction_text.value_or(""), spec.placement,
                                directive);
      break;
    case StrategyKind::cot8:
      rendered = render_cot8(record, spec.exemplars);
      break;
    case StrategyKind::two_stage_qap:
      rendered = render_two_stage(record, spec.n.value(), stage1_response, directive);
      break;
  }
  if (spec.system_message && !spec.system_message->empty()) {
    rendered.insert(rendered.begin(), {Role::system, *spec.system_message});
  }
  return rendered;
}

void validate_spec(const PromptSpec& spec) {
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument("strategy '" + spec.name + "': " + why);
  };
  if (spec.name.empty()) fail("name is empty");
  if (spec.kind == StrategyKind::qap || spec.kind == StrategyKind::two_stage_qap) {
    if (!spec.n) fail("kind requires n");
    if (*spec.n < 1) fail("n must be >= 1");
  }
  if (spec.kind == StrategyKind::cot8 && spec.exemplars.size() != 8) {
    fail("cot8 requires exactly 8 exemplars, got " + std::to_string(spec.exemplars.size()));
  }
  if (spec.kind == StrategyKind::ps_plus &&
      (!spec.instruction_text || spec.instruction_text->empty())) {
    fail("ps_plus requires instruction_text");
  }
}

std::vector<Exemplar> load_exemplars(const std::filesystem::path& path) {
  std::vector<Exemplar> out;
  for (const auto& [lineno, j] : read_jsonl(path)) {
    if (!j.contains("question") || !j.contains("rationale") || !j.contains("answer")) {
      throw LoadError(path.string(), lineno, "exemplar needs question/rationale/answer");
    }
    out.push_back({j.at("question").get<std::string>(), j.at("rationale").get<std::string>(),
                   j.at("answer").get<std::string>()});
  }
  return out;
}

namespace {

PromptSpec spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  PromptSpec spec;
  spec.name = j.at("name").get<std::string>();
  spec.kind = strategy_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("n") && !j.at("n").is_null()) spec.n = j.at("n").get<int>();
  if (j.contains("placement")) {
    spec.placement = placement_from_string(j.at("placement").get<std::string>());
  }
  if (j.contains("instruction_text") && j.at("instruction_text").is_string()) {
    spec.instruction_text = j.at("instruction_text").get<std::string>();
  }
  if (spec.kind == StrategyKind::ps_plus && !spec.instruction_text) {
    spec.instruction_text = kDefaultPsPlusInstruction;
  }
  if (j.contains("exemplar_path") && j.at("exemplar_path").is_string()) {
    spec.exemplar_path = j.at("exemplar_path").get<std::string>();
    std::filesystem::path p(spec.exemplar_path);
    if (p.is_relative()) p = base_dir / p;
    spec.exemplars = load_exemplars(p);
  } else if (j.contains("exemplars") && j.at("exemplars").is_array()) {
    for (const auto& e : j.at("exemplars")) {
      spec.exemplars.push_back({e.at("question").get<std::string>(),
                                e.at("rationale").get<std::string>(),
                                e.at("answer").get<std::string>()});
    }
  }
  if (j.contains("answer_directive") && j.at("answer_directive").is_string()) {
    spec.answer_directive = j.at("answer_directive").get<std::string>();
  }
  if (j.contains("system_message") && j.at("system_message").is_string()) {
    spec.system_message = j.at("system_message").get<std::string>();
  }
  validate_spec(spec);
  return spec;
}

}  // namespace

Registry registry_parse(const std::string& content, const std::filesystem::path& base_dir) {
  nlohmann::json root = nlohmann::json::parse(content, nullptr, false);
  if (root.is_discarded() || !root.is_object() || !root.contains("strategies") ||
      !root.at("strategies").is_array()) {
    throw std::invalid_argument("registry must be a JSON object with a \"strategies\" array");
  }
  Registry registry;
  for (const auto& entry : root.at("strategies")) {
    PromptSpec spec = spec_from_json(entry, base_dir);
    if (registry.count(spec.name)) {
      throw std::invalid_argument("duplicate strategy name '" + spec.name + "'");
    }
    registry.emplace(spec.name, std::move(spec));
  }
  return registry;
}

Registry registry_load(const std::filesystem::path& path) {
  return registry_parse(read_file(path), path.parent_path());
}

std::string registry_serialize(const Registry& registry) {
  nlohmann::ordered_json root;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& [name, spec] : registry) {
    nlohmann::ordered_json j;
    j["name"] = name;
    j["kind"] = to_string(spec.kind);
    if (spec.n) j["n"] = *spec.n;
    j["placement"] = to_string(spec.placement);
    if (spec.instruction_text) j["instruction_text"] = *spec.instruction_text;
    if (!spec.exemplar_path.empty()) {
      j["exemplar_path"] = spec.exemplar_path;
    } else if (!spec.exemplars.empty()) {
      auto exs = nlohmann::ordered_json::array();
      for (const auto& e : spec.exemplars) {
        exs.push_back({{"question", e.question}, {"rationale", e.rationale}, {"answer", e.answer}});
      }
      j["exemplars"] = std::move(exs);
    }
    if (spec.answer_directive) j["answer_directive"] = *spec.answer_directive;
    if (spec.system_message) j["system_message"] = *spec.system_message;
    arr.push_back(std::move(j));
  }
  root["strategies"] = std::move(arr);
  return root.dump(2) + "\n";
}

namespace {

// Stock worked examples for 8-shot chain-of-thought prompting, drawn from the
// original chain-of-thought grade-school math exemplar set.
const std::vector<Exemplar>& stock_cot_exemplars() {
  static const std::vector<Exemplar> exemplars = {
      {"There are 15 trees in the grove. Grove workers will plant trees in the grove today. "
       "After they are done, there will be 21 trees. How many trees did the grove workers plant "
       "today?",
       "There are 15 trees originally. Then there were 21 trees after some more were planted. So "
       "there must have been 21 - 15 = 6.",
       "6"},
      {"If there are 3 cars in the parking lot and 2 more cars arrive, how many cars are in the "
       "parking lot?",
       "There are originally 3 cars. 2 more cars arrive. 3 + 2 = 5.", "5"},
      {"Leah had 32 chocolates and her sister had 42. If they ate 35, how many pieces do they "
       "have left in total?",
       "Originally, Leah had 32 chocolates. Her sister had 42. So in total they had 32 + 42 = 74. "
       "After eating 35, they had 74 - 35 = 39.",
       "39"},
      {"Jason had 20 lollipops. He gave Denny some lollipops. Now Jason has 12 lollipops. How "
       "many lollipops did Jason give to Denny?",
       "Jason started with 20 lollipops. Then he had 12 after giving some to Denny. So he gave "
       "Denny 20 - 12 = 8.",
       "8"},
      {"Shawn has five toys. For Christmas, he got two toys each from his mom and dad. How many "
       "toys does he have now?",
       "Shawn started with 5 toys. If he got 2 toys each from his mom and dad, then that is 4 "
       "more toys. 5 + 4 = 9.",
       "9"},
      {"There were nine computers in the server room. Five more computers were installed each "
       "day, from monday to thursday. How many computers are now in the server room?",
       "There were originally 9 computers. For each of 4 days, 5 more computers were added. So 5 "
       "* 4 = 20 computers were added. 9 + 20 is 29.",
       "29"},
      {"Michael had 58 golf balls. On tuesday, he lost 23 golf balls. On wednesday, he lost 2 "
       "more. How many golf balls did he have at the end of wednesday?",
       "Michael started with 58 golf balls. After losing 23 on tuesday, he had 58 - 23 = 35. "
       "After losing 2 more, he had 35 - 2 = 33 golf balls.",
       "33"},
      {"Olivia has $23. She bought five bagels for $3 each. How much money does she have left?",
       "Olivia had 23 dollars. 5 bagels for 3 dollars each will be 5 x 3 = 15 dollars. So she "
       "has 23 - 15 dollars left. 23 - 15 is 8.",
       "8"}};
  return exemplars;
}

}  // namespace

Registry default_registry() {
  Registry registry;
  auto add = [&](PromptSpec spec) {
    validate_spec(spec);
    registry.emplace(spec.name, std::move(spec));
  };
  add({.name = "baseline", .kind = StrategyKind::baseline});
  for (int n : {25, 50, 100, 150, 200}) {
    add({.name = "qap" + std::to_string(n), .kind = StrategyKind::qap, .n = n});
  }
  add({.name = "tadb", .kind = StrategyKind::tadb});
  add({.name = "cot8", .kind = StrategyKind::cot8, .exemplars = stock_cot_exemplars()});
  add({.name = "ps_plus",
       .kind = StrategyKind::ps_plus,
       .instruction_text = kDefaultPsPlusInstruction});
  return registry;
}

}  // namespace qap

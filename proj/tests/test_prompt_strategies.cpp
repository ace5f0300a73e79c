#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "qap/prompt_strategies.hpp"

using namespace qap;
namespace fs = std::filesystem;

namespace {

QuestionRecord numeric_record() {
  QuestionRecord r;
  r.id = "0001";
  r.dataset = Dataset::gsm8k;
  r.question_text = "A farmer has 12 hens and sells 5. How many are left?";
  r.answer_kind = AnswerKind::numeric;
  r.gold_answer = "7";
  return r;
}

QuestionRecord choice_record() {
  QuestionRecord r;
  r.id = "0002";
  r.dataset = Dataset::aqua;
  r.question_text = "Which value is largest?";
  r.answer_kind = AnswerKind::multiple_choice;
  r.options = {{"A", "24"}, {"B", "36"}, {"C", "48"}};
  r.gold_answer = "C";
  return r;
}

size_t count_occurrences(const std::string& haystack, const std::string& needle) {
  size_t count = 0;
  for (size_t pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + 1)) {
    ++count;
  }
  return count;
}

std::vector<Exemplar> dummy_exemplars(int n) {
  std::vector<Exemplar> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({"What is " + std::to_string(i) + " + 1?",
                   "Adding one gives " + std::to_string(i + 1) + ".",
                   std::to_string(i + 1)});
  }
  return out;
}

}  // namespace

TEST_CASE("qap instruction is byte-exact") {
  const auto record = numeric_record();
  const auto messages = render_qap(record, 150, Placement::q_end, "");
  REQUIRE(messages.size() == 1);
  CHECK(messages[0].role == Role::user);
  CHECK(messages[0].content ==
        record.question_text +
            "\nExplain this problem to me in at least 150 words. Then solve for the answer.");
  // No grammar correction at n = 1.
  const auto one = render_qap(record, 1, Placement::q_end, "");
  CHECK(one[0].content.find("at least 1 words.") != std::string::npos);
  CHECK_THROWS(render_qap(record, 0, Placement::q_end, ""));
}

TEST_CASE("tadb instruction is byte-exact") {
  const auto record = numeric_record();
  const auto messages = render_tadb(record, Placement::q_end, "");
  CHECK(messages[0].content ==
        record.question_text + "\nTake a deep breath and work on this problem step-by-step");
  // Purity: identical calls produce identical output.
  CHECK(render_tadb(record, Placement::q_end, "") == messages);
}

TEST_CASE("two-stage instructions are byte-exact") {
  const auto record = numeric_record();
  const auto stage1 = render_two_stage(record, 50, std::nullopt, "");
  CHECK(stage1[0].content ==
        record.question_text + "\nExplain this problem to me in at least 50 words WITHOUT SOLVING.");
  CHECK(stage1[0].content.find("Now solve") == std::string::npos);

  const std::string explanation = "The farmer problem asks for a difference.";
  const auto stage2 = render_two_stage(record, 50, explanation, "");
  CHECK(count_occurrences(stage2[0].content, record.question_text) == 1);
  CHECK(stage2[0].content.find(explanation) != std::string::npos);
  CHECK(stage2[0].content ==
        record.question_text + "\nExplanation: " + explanation + "\nNow solve for the answer.");
}

TEST_CASE("baseline renders the bare question plus options and directive") {
  SUBCASE("numeric record is the question alone") {
    const auto messages = render_baseline(numeric_record(), "");
    CHECK(messages[0].content == numeric_record().question_text);
  }
  SUBCASE("options block golden") {
    const auto messages = render_baseline(choice_record(), "");
    CHECK(messages[0].content == "Which value is largest?\n\nA) 24\nB) 36\nC) 48");
  }
  SUBCASE("directive appended as final line") {
    const auto messages = render_baseline(numeric_record(), "Answer with a single letter.");
    CHECK(messages[0].content ==
          numeric_record().question_text + "\nAnswer with a single letter.");
  }
}

TEST_CASE("ps_plus renders the configured instruction") {
  const auto record = numeric_record();
  const std::string text = "Custom planning instruction.";
  const auto messages = render_ps_plus(record, text, Placement::q_end, "");
  CHECK(messages[0].content == record.question_text + "\n" + text);
  CHECK_THROWS(render_ps_plus(record, "", Placement::q_end, ""));
  CHECK(count_occurrences(messages[0].content, record.question_text) == 1);
}

TEST_CASE("cot8 renders 8 exemplars and the question") {
  const auto record = numeric_record();
  const auto messages = render_cot8(record, dummy_exemplars(8));
  CHECK(count_occurrences(messages[0].content, "Q: ") == 9);
  CHECK(count_occurrences(messages[0].content, "The answer is") == 8);
  CHECK(messages[0].content.find("Q: " + record.question_text + "\nA:") != std::string::npos);
  // Golden for the first exemplar block.
  CHECK(messages[0].content.rfind("Q: What is 0 + 1?\nA: Adding one gives 1. The answer is 1.\n\n",
                                  0) == 0);
  CHECK_THROWS(render_cot8(record, dummy_exemplars(7)));
  CHECK_THROWS(render_cot8(record, dummy_exemplars(9)));
}

TEST_CASE("placement moves the instruction, not the content") {
  std::mt19937 rng(11);
  for (int iter = 0; iter < 50; ++iter) {
    const int n = 1 + static_cast<int>(rng() % 400);
    const auto record = iter % 2 ? choice_record() : numeric_record();
    const auto at_end = render_qap(record, n, Placement::q_end, "");
    const auto at_begin = render_qap(record, n, Placement::q_begin, "");
    const std::string instruction = qap_instruction(n);
    for (const auto& messages : {at_end, at_begin}) {
      CHECK(count_occurrences(messages[0].content, instruction) == 1);
      CHECK(count_occurrences(messages[0].content, record.question_text) == 1);
    }
    CHECK(at_begin[0].content.rfind(instruction, 0) == 0);
    CHECK(at_end[0].content.rfind(record.question_text, 0) == 0);
    // The embedded word target equals n.
    CHECK(instruction.find(" " + std::to_string(n) + " words") != std::string::npos);
  }
}

TEST_CASE("render dispatch applies the per-kind default directive") {
  PromptSpec spec;
  spec.name = "baseline";
  spec.kind = StrategyKind::baseline;
  SUBCASE("multiple choice gets the letter directive by default") {
    const auto messages = render(spec, choice_record());
    CHECK(messages[0].content.find("Answer with a single letter (A–E).") !=
          std::string::npos);
  }
  SUBCASE("numeric and boolean get no directive by default") {
    const auto messages = render(spec, numeric_record());
    CHECK(messages[0].content == numeric_record().question_text);
  }
  SUBCASE("explicit directive overrides the default") {
    spec.answer_directive = "Reply with JSON.";
    const auto messages = render(spec, choice_record());
    CHECK(messages[0].content.find("Reply with JSON.") != std::string::npos);
    CHECK(messages[0].content.find("single letter") == std::string::npos);
  }
  SUBCASE("explicit empty directive disables the default") {
    spec.answer_directive = "";
    const auto messages = render(spec, choice_record());
    CHECK(messages[0].content.find("single letter") == std::string::npos);
  }
}

TEST_CASE("default registry contains exactly the nine stock strategies") {
  const Registry registry = default_registry();
  CHECK(registry.size() == 9);
  for (const char* name :
       {"baseline", "qap25", "qap50", "qap100", "qap150", "qap200", "tadb", "cot8", "ps_plus"}) {
    CAPTURE(name);
    CHECK(registry.count(name) == 1);
  }
  CHECK(registry.at("qap150").n == 150);
  CHECK(registry.at("cot8").exemplars.size() == 8);
  CHECK(registry.at("ps_plus").instruction_text.has_value());
  for (const auto& [name, spec] : registry) CHECK_NOTHROW(validate_spec(spec));
}

TEST_CASE("registry validation rejects invariant violations") {
  SUBCASE("qap without n") {
    CHECK_THROWS(registry_parse(R"({"strategies": [{"name": "q", "kind": "qap"}]})", "."));
  }
  SUBCASE("two_stage without n") {
    CHECK_THROWS(registry_parse(R"({"strategies": [{"name": "t", "kind": "two_stage_qap"}]})", "."));
  }
  SUBCASE("duplicate names") {
    CHECK_THROWS(registry_parse(
        R"({"strategies": [{"name": "b", "kind": "baseline"}, {"name": "b", "kind": "tadb"}]})",
        "."));
  }
  SUBCASE("cot8 with wrong exemplar count") {
    CHECK_THROWS(registry_parse(
        R"({"strategies": [{"name": "c", "kind": "cot8", "exemplars": [)"
        R"({"question": "q", "rationale": "r", "answer": "1"}]}]})",
        "."));
  }
  SUBCASE("unknown kind") {
    CHECK_THROWS(registry_parse(R"({"strategies": [{"name": "x", "kind": "mystery"}]})", "."));
  }
}

TEST_CASE("registry round-trips through serialization") {
  Registry registry = default_registry();
  PromptSpec two_stage;
  two_stage.name = "ts50";
  two_stage.kind = StrategyKind::two_stage_qap;
  two_stage.n = 50;
  two_stage.answer_directive = "Be brief.";
  registry.emplace(two_stage.name, two_stage);

  const std::string serialized = registry_serialize(registry);
  const Registry back = registry_parse(serialized, ".");
  CHECK(back == registry);
  CHECK(registry_serialize(back) == serialized);
}

TEST_CASE("registry loads exemplars from a file next to it") {
  const fs::path dir = fs::temp_directory_path() / "qap_registry_test";
  fs::create_directories(dir);
  {
    std::ofstream ex(dir / "exemplars.jsonl", std::ios::trunc);
    for (int i = 0; i < 8; ++i) {
      ex << R"({"question": "q)" << i << R"(", "rationale": "r)" << i
         << R"(", "answer": ")" << i << "\"}\n";
    }
    std::ofstream reg(dir / "registry.json", std::ios::trunc);
    reg << R"({"strategies": [
      {"name": "cot8", "kind": "cot8", "exemplar_path": "exemplars.jsonl"},
      {"name": "qap25", "kind": "qap", "n": 25, "placement": "q_begin"}
    ]})";
  }
  const Registry registry = registry_load(dir / "registry.json");
  CHECK(registry.at("cot8").exemplars.size() == 8);
  CHECK(registry.at("cot8").exemplars[3].question == "q3");
  CHECK(registry.at("qap25").placement == Placement::q_begin);
}

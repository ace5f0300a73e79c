#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "qap/dataset_io.hpp"
#include "qap/jsonl.hpp"

using namespace qap;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  fs::path dir = fs::temp_directory_path() / "qap_dataset_tests";
  fs::create_directories(dir);
  fs::path path = dir / name;
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("gsm8k loader canonicalizes gold answers") {
  const auto path = temp_file("gsm8k_ok.jsonl",
      R"({"question": "Q one?", "answer": "She sold half as many.\nShe sold 72. #### 72"})" "\n"
      R"({"question": "Q two?", "answer": "Some working.\n#### 1,080"})" "\n"
      R"({"question": "Q three?", "answer": "Money. #### $5.50"})" "\n");
  const auto records = load_gsm8k(path);
  REQUIRE(records.size() == 3);
  CHECK(records[0].gold_answer == "72");
  CHECK(records[0].answer_kind == AnswerKind::numeric);
  CHECK(records[0].id == "0000");
  CHECK(records[1].gold_answer == "1080");
  CHECK(records[2].gold_answer == "5.50");
}

TEST_CASE("gsm8k loader reports the failing line") {
  SUBCASE("missing marker") {
    const auto path = temp_file("gsm8k_marker.jsonl",
        R"({"question": "ok?", "answer": "fine #### 3"})" "\n"
        R"({"question": "bad?", "answer": "no marker at all"})" "\n");
    try {
      load_gsm8k(path);
      FAIL("expected LoadError");
    } catch (const LoadError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("####") != std::string::npos);
    }
  }
  SUBCASE("malformed json line") {
    const auto path = temp_file("gsm8k_badjson.jsonl",
        R"({"question": "ok?", "answer": "#### 3"})" "\n"
        "{not json\n");
    try {
      load_gsm8k(path);
      FAIL("expected LoadError");
    } catch (const LoadError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_gsm8k("/nonexistent/x.jsonl"), LoadError); }
}

TEST_CASE("aqua loader splits options on the first parenthesis") {
  const auto path = temp_file("aqua_ok.jsonl",
      R"({"question": "Pick.", "options": ["A)24", "B)36"], "correct": "B"})" "\n"
      R"({"question": "Pick again.", "options": ["A)1", "B)2", "C)3", "D)4", "E)None of these"], "correct": "e"})" "\n");
  const auto records = load_aqua(path);
  REQUIRE(records.size() == 2);
  CHECK(records[0].gold_answer == "B");
  CHECK(records[0].options ==
        std::vector<std::pair<std::string, std::string>>{{"A", "24"}, {"B", "36"}});
  CHECK(records[1].gold_answer == "E");
  CHECK(records[1].options.back() == std::pair<std::string, std::string>{"E", "None of these"});
}

TEST_CASE("aqua loader rejects bad options") {
  SUBCASE("option without separator") {
    const auto path = temp_file("aqua_nosep.jsonl",
        R"({"question": "Pick.", "options": ["A)24", "B36"], "correct": "A"})" "\n");
    CHECK_THROWS_AS(load_aqua(path), LoadError);
  }
  SUBCASE("correct letter not among labels") {
    const auto path = temp_file("aqua_badcorrect.jsonl",
        R"({"question": "Pick.", "options": ["A)24", "B)36"], "correct": "E"})" "\n");
    CHECK_THROWS_AS(load_aqua(path), LoadError);
  }
  SUBCASE("empty options list") {
    const auto path = temp_file("aqua_empty.jsonl",
        R"({"question": "Pick.", "options": [], "correct": "A"})" "\n");
    CHECK_THROWS_AS(load_aqua(path), LoadError);
  }
  SUBCASE("out-of-order labels") {
    const auto path = temp_file("aqua_order.jsonl",
        R"({"question": "Pick.", "options": ["B)24", "A)36"], "correct": "A"})" "\n");
    CHECK_THROWS_AS(load_aqua(path), LoadError);
  }
}

TEST_CASE("agieval sat loader accepts label or answer and passage") {
  const auto path = temp_file("sat_ok.jsonl",
      R"({"passage": null, "question": "Solve.", "options": ["(A)1", "(B)2", "(C)3", "(D)4"], "label": "C"})" "\n"
      R"({"question": "Solve more.", "options": ["(A)x", "(B)y"], "answer": "B"})" "\n"
      R"({"passage": "Given a chart.", "question": "Read it.", "options": ["(A)up", "(B)down"], "label": "A"})" "\n");
  const auto records = load_agieval_sat(path);
  REQUIRE(records.size() == 3);
  CHECK(records[0].gold_answer == "C");
  CHECK(records[0].options[0] == std::pair<std::string, std::string>{"A", "1"});
  CHECK(records[1].gold_answer == "B");
  CHECK(records[2].question_text == "Given a chart.\nRead it.");
}

TEST_CASE("strategyqa loader handles array and jsonl forms") {
  const std::string array_form =
      R"([{"qid": "q_1", "question": "Can it?", "answer": true},)"
      R"( {"qid": "q_2", "question": "Will it?", "answer": false}])";
  const auto array_path = temp_file("sqa_array.json", array_form);
  const auto array_records = load_strategyqa(array_path);
  REQUIRE(array_records.size() == 2);
  CHECK(array_records[0].id == "q_1");
  CHECK(array_records[0].gold_answer == "yes");
  CHECK(array_records[1].gold_answer == "no");

  const auto jsonl_path = temp_file("sqa_lines.jsonl",
      R"({"question": "Can it?", "answer": true})" "\n"
      R"({"question": "Will it?", "answer": false})" "\n");
  const auto jsonl_records = load_strategyqa(jsonl_path);
  REQUIRE(jsonl_records.size() == 2);
  CHECK(jsonl_records[0].id == "0000");
  CHECK(jsonl_records[0].gold_answer == "yes");

  SUBCASE("non-boolean answer is rejected") {
    const auto bad = temp_file("sqa_bad.jsonl",
        R"({"question": "Can it?", "answer": "yes"})" "\n");
    CHECK_THROWS_AS(load_strategyqa(bad), LoadError);
  }
}

TEST_CASE("duplicate ids abort the load") {
  const auto path = temp_file("dup.jsonl",
      R"({"id": "same", "question": "a?", "answer": "#### 1"})" "\n"
      R"({"id": "same", "question": "b?", "answer": "#### 2"})" "\n");
  CHECK_THROWS_AS(load_gsm8k(path), LoadError);
}

TEST_CASE("loader totality: record count equals line count") {
  // Fuzz valid files of random sizes for each loader and check nothing is
  // silently dropped.
  std::mt19937 rng(42);
  for (int iter = 0; iter < 20; ++iter) {
    const int n = 1 + static_cast<int>(rng() % 40);
    std::string gsm8k, aqua, sqa;
    for (int i = 0; i < n; ++i) {
      gsm8k += R"({"question": "q)" + std::to_string(i) + R"(?", "answer": "#### )" +
               std::to_string(rng() % 1000) + "\"}\n";
      aqua += R"({"question": "q)" + std::to_string(i) +
              R"(?", "options": ["A)1", "B)2", "C)3"], "correct": ")" +
              std::string(1, static_cast<char>('A' + rng() % 3)) + "\"}\n";
      sqa += R"({"question": "q)" + std::to_string(i) + R"(?", "answer": )" +
             (rng() % 2 ? "true" : "false") + "}\n";
    }
    CHECK(load_gsm8k(temp_file("fuzz_gsm8k.jsonl", gsm8k)).size() == static_cast<size_t>(n));
    CHECK(load_aqua(temp_file("fuzz_aqua.jsonl", aqua)).size() == static_cast<size_t>(n));
    CHECK(load_strategyqa(temp_file("fuzz_sqa.jsonl", sqa)).size() == static_cast<size_t>(n));
  }
}

TEST_CASE("canonical records round-trip through jsonl") {
  std::mt19937 rng(7);
  std::vector<QuestionRecord> records;
  for (int i = 0; i < 50; ++i) {
    QuestionRecord r;
    r.id = "id" + std::to_string(i);
    switch (rng() % 3) {
      case 0:
        r.dataset = Dataset::gsm8k;
        r.answer_kind = AnswerKind::numeric;
        r.gold_answer = std::to_string(rng() % 10000) + (rng() % 2 ? ".5" : "");
        break;
      case 1:
        r.dataset = rng() % 2 ? Dataset::aqua : Dataset::sat_math;
        r.answer_kind = AnswerKind::multiple_choice;
        for (int k = 0; k < 2 + static_cast<int>(rng() % 4); ++k) {
          r.options.emplace_back(std::string(1, static_cast<char>('A' + k)),
                                 "option text " + std::to_string(rng() % 100));
        }
        r.gold_answer = r.options[rng() % r.options.size()].first;
        break;
      default:
        r.dataset = Dataset::strategyqa;
        r.answer_kind = AnswerKind::boolean_answer;
        r.gold_answer = rng() % 2 ? "yes" : "no";
        break;
    }
    r.question_text = "Question with \"quotes\" and\nnewlines #" + std::to_string(i);
    records.push_back(std::move(r));
  }
  const fs::path path = fs::temp_directory_path() / "qap_dataset_tests" / "roundtrip.jsonl";
  write_records(path, records);
  const auto back = read_records(path);
  CHECK(back == records);
}

TEST_CASE("every loaded record satisfies the record invariants") {
  const auto gsm8k = load_gsm8k(temp_file("inv_gsm8k.jsonl",
      R"({"question": "q?", "answer": "#### -3.5"})" "\n"));
  for (const auto& r : gsm8k) CHECK_NOTHROW(validate_record(r));
  const auto aqua = load_aqua(temp_file("inv_aqua.jsonl",
      R"({"question": "q?", "options": ["A)x", "B)y", "C)z", "D)w", "E)v"], "correct": "D"})" "\n"));
  for (const auto& r : aqua) CHECK_NOTHROW(validate_record(r));
}

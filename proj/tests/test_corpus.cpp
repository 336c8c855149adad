#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"

#include "budgeteval/corpus.hpp"
#include "budgeteval/errors.hpp"

using namespace budgeteval;
namespace fs = std::filesystem;

namespace {

struct TempFixtureDir {
  fs::path path;
  TempFixtureDir() {
    path = fs::temp_directory_path() /
           ("budgeteval-corpus-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempFixtureDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path write(const std::string& name, const std::string& content) const {
    const fs::path p = path / name;
    std::ofstream out(p, std::ios::trunc | std::ios::binary);
    out << content;
    return p;
  }
};

const char* kThreeProblems =
    R"({"problem_id": "he_1", "benchmark": "function_completion", "prompt": "def a():\n", "test_payload": "assert a() is None", "entry_point": "a"}
{"problem_id": "he_2", "benchmark": "instruction_function", "prompt": "Write b.", "test_payload": "assert b() == 2"}
{"problem_id": "he_3", "benchmark": "full_program", "prompt": "Echo.", "test_payload": "assert True"}
)";

}  // namespace

TEST_CASE("load_problems keeps order and validates") {
  TempFixtureDir dir;
  const auto p = dir.write("problems.jsonl", kThreeProblems);
  const corpus::ProblemSet set = corpus::load_problems(p);
  REQUIRE(set.size() == 3);
  CHECK(set.problems()[0].problem_id == "he_1");
  CHECK(set.problems()[1].problem_id == "he_2");
  CHECK(set.problems()[2].problem_id == "he_3");
  CHECK(set.problems()[0].benchmark == corpus::Benchmark::function_completion);
  CHECK(set.problems()[0].entry_point == "a");
  CHECK(!set.problems()[1].entry_point.has_value());
  CHECK(set.find("he_2") != nullptr);
  CHECK(set.find("he_9") == nullptr);
}

TEST_CASE("load_problems on an empty file") {
  TempFixtureDir dir;
  const auto p = dir.write("empty.jsonl", "");
  CHECK(corpus::load_problems(p).size() == 0);
}

TEST_CASE("load_problems errors") {
  TempFixtureDir dir;

  SUBCASE("malformed line names the line number") {
    const auto p = dir.write("bad.jsonl",
                             "{\"problem_id\": \"a\", \"benchmark\": \"function_completion\", "
                             "\"prompt\": \"\", \"test_payload\": \"x\"}\nnot json\n");
    try {
      corpus::load_problems(p);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }

  SUBCASE("duplicate id cites both lines") {
    std::string content;
    for (int i = 1; i <= 9; ++i) {
      std::string id = i == 3 || i == 9 ? "he_7" : "he_" + std::to_string(100 + i);
      content += "{\"problem_id\": \"" + id +
                 "\", \"benchmark\": \"function_completion\", \"prompt\": \"p\", "
                 "\"test_payload\": \"t\"}\n";
    }
    const auto p = dir.write("dup.jsonl", content);
    try {
      corpus::load_problems(p);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      const std::string what = e.what();
      CHECK(what.find("he_7") != std::string::npos);
      CHECK(what.find("3") != std::string::npos);
      CHECK(what.find("9") != std::string::npos);
    }
  }

  SUBCASE("empty payload rejected") {
    const auto p = dir.write("nopayload.jsonl",
                             "{\"problem_id\": \"a\", \"benchmark\": \"function_completion\", "
                             "\"prompt\": \"p\", \"test_payload\": \"\"}\n");
    CHECK_THROWS_AS(corpus::load_problems(p), ValidationError);
  }

  SUBCASE("unknown benchmark rejected") {
    const auto p = dir.write("badbench.jsonl",
                             "{\"problem_id\": \"a\", \"benchmark\": \"quiz\", \"prompt\": "
                             "\"p\", \"test_payload\": \"t\"}\n");
    CHECK_THROWS_AS(corpus::load_problems(p), ValidationError);
  }
}

namespace {

std::string gen_line(const std::string& pid, int idx, const std::string& mode = "sampled",
                     bool completed = true, const std::string& extra = "") {
  std::string line = "{\"problem_id\": \"" + pid + "\", \"candidate_index\": " +
                     std::to_string(idx) + ", \"text\": \"return " + std::to_string(idx) +
                     "\", \"completed\": " + (completed ? "true" : "false") +
                     ", \"mode\": \"" + mode + "\"";
  if (!extra.empty()) line += ", " + extra;
  return line + "}\n";
}

}  // namespace

TEST_CASE("load_generations computes sampled counts and validates") {
  TempFixtureDir dir;
  const corpus::ProblemSet problems = corpus::load_problems(dir.write("p.jsonl", kThreeProblems));

  SUBCASE("counts and greedy separation") {
    std::string content;
    for (int i = 0; i < 4; ++i) content += gen_line("he_1", i);
    content += gen_line("he_1", 0, "greedy");
    for (int i = 0; i < 2; ++i) content += gen_line("he_2", i);
    const corpus::GenerationSet gens =
        corpus::load_generations(dir.write("g.jsonl", content), problems);
    CHECK(gens.size() == 7);
    CHECK(gens.n_per_problem().at("he_1") == 4);  // greedy not counted in n
    CHECK(gens.n_per_problem().at("he_2") == 2);
    CHECK(gens.n_per_problem().at("he_3") == 0);  // present with no records
    CHECK(gens.find("he_1", 0, corpus::Mode::greedy) != nullptr);
    CHECK(gens.find("he_1", 3, corpus::Mode::sampled) != nullptr);
    CHECK(gens.find("he_3", 0, corpus::Mode::sampled) == nullptr);
  }

  SUBCASE("unknown problem id") {
    const auto g = dir.write("g.jsonl", gen_line("he_404", 0));
    CHECK_THROWS_AS(corpus::load_generations(g, problems), ValidationError);
  }

  SUBCASE("gap in candidate indices names the missing index") {
    std::string content = gen_line("he_1", 0) + gen_line("he_1", 1) + gen_line("he_1", 3);
    try {
      corpus::load_generations(dir.write("g.jsonl", content), problems);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      const std::string what = e.what();
      CHECK(what.find("he_1") != std::string::npos);
      CHECK(what.find("2") != std::string::npos);
    }
  }

  SUBCASE("duplicate key rejected") {
    const std::string content = gen_line("he_1", 0) + gen_line("he_1", 0);
    CHECK_THROWS_AS(corpus::load_generations(dir.write("g.jsonl", content), problems),
                    ValidationError);
  }

  SUBCASE("same index across modes allowed") {
    const std::string content = gen_line("he_1", 0) + gen_line("he_1", 0, "greedy");
    CHECK_NOTHROW(corpus::load_generations(dir.write("g.jsonl", content), problems));
  }

  SUBCASE("token_logprobs must be non-empty, finite, non-positive") {
    CHECK_THROWS_AS(
        corpus::load_generations(
            dir.write("g1.jsonl", gen_line("he_1", 0, "sampled", true,
                                           "\"token_logprobs\": {\"m\": []}")),
            problems),
        ValidationError);
    CHECK_THROWS_AS(
        corpus::load_generations(
            dir.write("g2.jsonl", gen_line("he_1", 0, "sampled", true,
                                           "\"token_logprobs\": {\"m\": [0.5]}")),
            problems),
        ValidationError);
    CHECK_NOTHROW(corpus::load_generations(
        dir.write("g3.jsonl",
                  gen_line("he_1", 0, "sampled", true, "\"token_logprobs\": {\"m\": [-0.5, 0.0]}")),
        problems));
  }

  SUBCASE("negative candidate_index rejected") {
    CHECK_THROWS_AS(corpus::load_generations(dir.write("g.jsonl", gen_line("he_1", -1)), problems),
                    ValidationError);
  }
}

TEST_CASE("attach_scores") {
  TempFixtureDir dir;
  const corpus::ProblemSet problems = corpus::load_problems(dir.write("p.jsonl", kThreeProblems));
  std::string content;
  for (int i = 0; i < 3; ++i) content += gen_line("he_1", i);
  corpus::GenerationSet gens = corpus::load_generations(dir.write("g.jsonl", content), problems);

  SUBCASE("two sidecars leave both score maps in place") {
    const auto nll = dir.write("nll.jsonl",
                               "{\"problem_id\": \"he_1\", \"candidate_index\": 0, \"score\": 1.5}\n"
                               "{\"problem_id\": \"he_1\", \"candidate_index\": 1, \"score\": 0.5}\n"
                               "{\"problem_id\": \"he_1\", \"candidate_index\": 2, \"score\": 2.5}\n");
    const auto lever = dir.write("lever.jsonl",
                                 "{\"problem_id\": \"he_1\", \"candidate_index\": 0, \"score\": 0.9}\n"
                                 "{\"problem_id\": \"he_1\", \"candidate_index\": 1, \"score\": 0.1}\n"
                                 "{\"problem_id\": \"he_1\", \"candidate_index\": 2, \"score\": 0.4}\n");
    corpus::GenerationSet scored =
        corpus::attach_scores(corpus::attach_scores(gens, nll, "nll_13b"), lever, "lever");
    for (int i = 0; i < 3; ++i) {
      const corpus::Generation* g = scored.find("he_1", i, corpus::Mode::sampled);
      REQUIRE(g != nullptr);
      CHECK(g->external_scores.count("nll_13b") == 1);
      CHECK(g->external_scores.count("lever") == 1);
    }
    CHECK(scored.find("he_1", 1, corpus::Mode::sampled)->external_scores.at("nll_13b") == 0.5);
    // text / completed / mode untouched
    CHECK(scored.find("he_1", 1, corpus::Mode::sampled)->text ==
          gens.find("he_1", 1, corpus::Mode::sampled)->text);
    CHECK(scored.find("he_1", 1, corpus::Mode::sampled)->completed);
    CHECK(scored.find("he_1", 1, corpus::Mode::sampled)->mode == corpus::Mode::sampled);
  }

  SUBCASE("address miss") {
    const auto bad = dir.write("bad.jsonl",
                               "{\"problem_id\": \"he_1\", \"candidate_index\": 9999, "
                               "\"score\": 1.0}\n");
    CHECK_THROWS_AS(corpus::attach_scores(gens, bad, "s"), ValidationError);
  }

  SUBCASE("duplicate address") {
    const auto dup = dir.write("dup.jsonl",
                               "{\"problem_id\": \"he_1\", \"candidate_index\": 0, \"score\": 1.0}\n"
                               "{\"problem_id\": \"he_1\", \"candidate_index\": 0, \"score\": 2.0}\n");
    CHECK_THROWS_AS(corpus::attach_scores(gens, dup, "s"), ValidationError);
  }
}

TEST_CASE("filter_complete") {
  TempFixtureDir dir;
  const corpus::ProblemSet problems = corpus::load_problems(dir.write("p.jsonl", kThreeProblems));

  SUBCASE("drops exactly the incomplete generations, keeps indices") {
    // 2000 generations, 150 incomplete -> 1850 remain.
    std::string content;
    for (int i = 0; i < 2000; ++i) content += gen_line("he_1", i, "sampled", i % 13 != 0 || i >= 1950);
    int incomplete = 0;
    for (int i = 0; i < 2000; ++i)
      if (!(i % 13 != 0 || i >= 1950)) ++incomplete;
    // Tune the rule so the count is exactly 150: indices 0,13,26,... below 1950.
    CHECK(incomplete == 150);
    const corpus::GenerationSet gens =
        corpus::load_generations(dir.write("g.jsonl", content), problems);
    CHECK(gens.n_per_problem().at("he_1") == 2000);
    const corpus::GenerationSet filtered = corpus::filter_complete(gens);
    CHECK(filtered.n_per_problem().at("he_1") == 1850);
    CHECK(filtered.size() == 1850);
    // Identity preserved: index 13 was dropped, index 14 kept its number.
    CHECK(filtered.find("he_1", 13, corpus::Mode::sampled) == nullptr);
    CHECK(filtered.find("he_1", 14, corpus::Mode::sampled) != nullptr);
    // Idempotent.
    const corpus::GenerationSet twice = corpus::filter_complete(filtered);
    CHECK(twice.size() == filtered.size());
    CHECK(twice.n_per_problem() == filtered.n_per_problem());
  }

  SUBCASE("all-complete input is unchanged") {
    std::string content = gen_line("he_1", 0) + gen_line("he_1", 1);
    const corpus::GenerationSet gens =
        corpus::load_generations(dir.write("g.jsonl", content), problems);
    const corpus::GenerationSet filtered = corpus::filter_complete(gens);
    CHECK(filtered.size() == gens.size());
    CHECK(filtered.n_per_problem() == gens.n_per_problem());
  }

  SUBCASE("a fully incomplete problem drops to n = 0 but stays visible") {
    std::string content = gen_line("he_1", 0, "sampled", false) + gen_line("he_2", 0);
    const corpus::GenerationSet gens =
        corpus::load_generations(dir.write("g.jsonl", content), problems);
    const corpus::GenerationSet filtered = corpus::filter_complete(gens);
    CHECK(filtered.n_per_problem().at("he_1") == 0);
    CHECK(filtered.n_per_problem().at("he_2") == 1);
  }
}

TEST_CASE("round trips preserve text byte for byte") {
  TempFixtureDir dir;
  // Awkward contents: quotes, newlines, unicode, backslashes.
  corpus::Problem p1{"p \"q\" 1", corpus::Benchmark::full_program,
                     "prompt with\nnewlines\tand \\ slashes",
                     "payload é中文 \"quoted\"", std::nullopt};
  corpus::Problem p2{"p2", corpus::Benchmark::instruction_function, "", "x", "entry"};
  const corpus::ProblemSet problems(std::vector<corpus::Problem>{p1, p2});
  const auto ppath = dir.path / "roundtrip_p.jsonl";
  corpus::save_problems(problems, ppath);
  const corpus::ProblemSet p_loaded = corpus::load_problems(ppath);
  REQUIRE(p_loaded.size() == 2);
  CHECK(p_loaded.problems()[0].problem_id == p1.problem_id);
  CHECK(p_loaded.problems()[0].prompt == p1.prompt);
  CHECK(p_loaded.problems()[0].test_payload == p1.test_payload);
  CHECK(p_loaded.problems()[1].entry_point == "entry");

  corpus::Generation g;
  g.problem_id = "p2";
  g.candidate_index = 0;
  g.text = "def f():\n    return \"✓\"\n";
  g.completed = false;
  g.mode = corpus::Mode::greedy;
  g.token_logprobs["13b"] = {-0.25, -1.5, 0.0};
  g.external_scores["lever"] = 0.75;
  corpus::Generation g2 = g;
  g2.mode = corpus::Mode::sampled;
  g2.completed = true;
  const corpus::GenerationSet gens(std::vector<corpus::Generation>{g, g2}, {"p \"q\" 1", "p2"});
  const auto gpath = dir.path / "roundtrip_g.jsonl";
  corpus::save_generations(gens, gpath);
  const corpus::GenerationSet g_loaded = corpus::load_generations(gpath, problems);
  REQUIRE(g_loaded.size() == 2);
  const corpus::Generation* back = g_loaded.find("p2", 0, corpus::Mode::greedy);
  REQUIRE(back != nullptr);
  CHECK(back->text == g.text);
  CHECK(back->completed == g.completed);
  CHECK(back->token_logprobs == g.token_logprobs);
  CHECK(back->external_scores == g.external_scores);

  const std::vector<corpus::ScoreRecord> scores{{"p2", 0, corpus::Mode::sampled, 1.25},
                                                {"p2", 0, corpus::Mode::greedy, -3.5}};
  const auto spath = dir.path / "roundtrip_s.jsonl";
  corpus::save_scores(scores, spath);
  const auto s_loaded = corpus::load_scores(spath);
  REQUIRE(s_loaded.size() == 2);
  CHECK(s_loaded[0].problem_id == "p2");
  CHECK(s_loaded[0].score == 1.25);
  CHECK(s_loaded[1].mode == corpus::Mode::greedy);
  CHECK(s_loaded[1].score == -3.5);
}

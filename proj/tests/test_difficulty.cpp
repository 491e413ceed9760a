#include <catch_amalgamated.hpp>

#include <set>

#include "gazemine/difficulty.hpp"
#include "gazemine/synthetic.hpp"
#include "support.hpp"

using namespace gazemine;
using gazemine::testing::TempDir;

namespace {

Gateway mock_gateway(const std::string& model, std::shared_ptr<MockProvider> mock) {
  ModelSpec spec;
  spec.model_id = model;
  return Gateway(spec, std::move(mock), {1, std::chrono::milliseconds(0), 2.0});
}

DifficultyLevel wrong(DifficultyLevel l) {
  return l == DifficultyLevel::easy ? DifficultyLevel::hard : DifficultyLevel::easy;
}

}  // namespace

TEST_CASE("question files need twelve items, four per level", "[difficulty]") {
  const auto qs = builtin_questions();
  REQUIRE(qs.size() == 12);
  CHECK(questions_from_json(questions_to_json(qs)) == qs);
  const auto bands = question_bands(qs);
  CHECK(bands.at("B1") == "hard");
  CHECK(bands.at("D2") == "hard");
  CHECK(load_questions(gazemine::testing::repo_data("questions.json")) == qs);

  json j = questions_to_json(qs);
  j.erase(j.begin());
  CHECK_THROWS_AS(questions_from_json(j), Error);
  j = questions_to_json(qs);
  j[0]["level"] = "hard";
  CHECK_THROWS_AS(questions_from_json(j), Error);
  j = questions_to_json(qs);
  j[1]["question_id"] = "A1";
  CHECK_THROWS_AS(questions_from_json(j), Error);
  CHECK_THROWS_AS(questions_from_json(json::object()), Error);

  TempDir dir("questions");
  write_text_file(dir / "q.json", "[{\"question_id\": \"A1\",");
  CHECK_THROWS_AS(load_questions(dir / "q.json"), LoadError);
}

TEST_CASE("anonymization strips difficulty cues", "[difficulty]") {
  const auto qs = builtin_questions();
  const auto anon = anonymize(qs, 11);
  REQUIRE(anon.size() == qs.size());
  std::set<std::string> aliases;
  for (const auto& q : anon) {
    INFO(q.anonymized_text);
    CHECK(lexicon_hits(q.anonymized_text, default_lexicon()).empty());
    CHECK(q.anonymized_text.find(q.question_id) == std::string::npos);
    CHECK(std::isupper(static_cast<unsigned char>(q.anonymized_text[0])));
    CHECK(q.alias.size() == 6);
    CHECK(q.alias.rfind("Q-", 0) == 0);
    aliases.insert(q.alias);
    // The content survives.
    CHECK(q.anonymized_text.size() > 40);
  }
  CHECK(aliases.size() == 12);
  CHECK(anon == anonymize(qs, 11));
  CHECK_FALSE(anon == anonymize(qs, 12));
  bool reordered = false;
  for (std::size_t i = 0; i < anon.size(); ++i) reordered = reordered || anon[i].question_id != qs[i].question_id;
  CHECK(reordered);

  CHECK(anonymize_text("3. [Hard] Find it.", {"A1"}, default_lexicon()) == "Find it.");
  CHECK(anonymize_text("C2 - HARD: Describe the fix.", {"C2"}, default_lexicon()) == "Describe the fix.");
  CHECK(anonymize_text("Question 4 (hard): Identify it.", {}, default_lexicon()) == "Identify it.");
  CHECK(anonymize_text("#11 hard: Find where.", {}, default_lexicon()) == "Find where.");
  for (const auto& q : anon) CHECK(anonymize_text(q.anonymized_text, {"A1", "B1"}, default_lexicon()) == q.anonymized_text);
  CHECK(lexicon_hits("a Hard-coded value", default_lexicon()) == std::vector<std::string>{"hard"});
  CHECK(lexicon_hits("hardware", default_lexicon()).empty());
}

TEST_CASE("difficulty answers parse one level per alias", "[difficulty]") {
  const auto m = parse_difficulty_answer("Q-ab12: easy\nq-AB12: hard\n- Q-00ff -> Medium\nQ-zzzz: easy\nQ-1234 is tricky");
  REQUIRE(m.size() == 2);
  CHECK(m.at("Q-ab12") == DifficultyLevel::easy);
  CHECK(m.at("Q-00ff") == DifficultyLevel::medium);
  CHECK(parse_difficulty_answer("nothing here").empty());
}

TEST_CASE("prediction runs score against the true levels", "[difficulty]") {
  const auto qs = builtin_questions();
  PredictionRun run;
  run.model_id = "o1";
  for (const auto& q : qs) run.predictions[q.question_id] = std::nullopt;
  run.predictions["A1"] = DifficultyLevel::easy;
  run.predictions["A2"] = DifficultyLevel::hard;
  run.predictions["B1"] = DifficultyLevel::hard;
  CHECK(run.parsed() == 3);
  CHECK(run.correct(qs) == 2);
  CHECK(run.accuracy(qs) == Catch::Approx(2.0 / 12.0));
  run.error = "chunk 0: timeout";
  CHECK(PredictionRun::from_json(run.to_json()) == run);
}

TEST_CASE("difficulty prompts list every question in every chunk", "[difficulty]") {
  SyntheticConfig cfg;
  cfg.experts = 1;
  cfg.students = 1;
  const auto ds = generate_gaze_dataset(cfg);
  const auto table = clean(parse_gaze_csv(ds.csv, default_schema())).table;
  const auto anon = anonymize(builtin_questions(), 3);
  const auto artifacts = gaze_artifacts(table, anon);
  CHECK(artifacts.horizontal.size() == 12);
  for (const auto& [qid, lines] : artifacts.horizontal)
    for (const auto& l : lines) CHECK(l.find("\"" + qid + "\"") == std::string::npos);

  DifficultyPromptOptions opts;
  opts.bundle.budget_chars = 6000;
  const auto tpl = TemplateSet::builtin();
  for (const auto& cell : difficulty_cells()) {
    const auto b = build_difficulty_prompt(anon, cell.variant, cell.setting, &artifacts, tpl, opts);
    CHECK(b.chunks.size() > 1);
    for (const auto& c : b.chunks)
      for (const auto& q : anon) CHECK(c.find(q.alias + ": ") != std::string::npos);
  }
  // The "none" variant drops the band definitions.
  const auto total = build_difficulty_prompt(anon, PromptVariant::total, ModuleSetting::direct, nullptr, tpl);
  const auto none = build_difficulty_prompt(anon, PromptVariant::none, ModuleSetting::direct, nullptr, tpl);
  CHECK(total.chunks.size() == 1);
  CHECK(total.chunks[0] != none.chunks[0]);
  CHECK_THROWS_AS(build_difficulty_prompt(anon, PromptVariant::total, ModuleSetting::h, nullptr, tpl), Error);
  CHECK_THROWS_AS(build_difficulty_prompt(builtin_questions(), PromptVariant::total, ModuleSetting::direct, nullptr, tpl),
                  Error);
}

TEST_CASE("row labels and cell order match the report", "[difficulty]") {
  std::vector<std::string> labels;
  for (const auto& c : difficulty_cells()) labels.push_back(difficulty_row_label(c.setting, c.variant));
  CHECK(labels == std::vector<std::string>{"Directly(total)", "h+v(total)", "h(total)", "v(total)", "h+v(none)",
                                           "h(none)", "v(none)"});
}

TEST_CASE("scripted answers give exact accuracies and NA", "[difficulty]") {
  const auto anon = anonymize(builtin_questions(), 5);
  // Correct for the first six presented questions, wrong for the rest.
  std::string half;
  for (std::size_t i = 0; i < anon.size(); ++i)
    half += anon[i].alias + ": " + std::string(to_string(i < 6 ? anon[i].true_level : wrong(anon[i].true_level))) + "\n";

  auto good = std::make_shared<MockProvider>(1);
  good->set_responder([&](const std::string&, int) -> std::optional<std::string> { return half; });
  auto mute = std::make_shared<MockProvider>(2);
  mute->set_responder([](const std::string&, int) -> std::optional<std::string> { return "I cannot tell."; });
  Gateway g4o = mock_gateway("gpt4o", good);
  Gateway gr1 = mock_gateway("r1", mute);

  const std::vector<DifficultyCell> cells = {{ModuleSetting::direct, PromptVariant::total}};
  const auto res = run_and_score(anon, cells, {&g4o, &gr1}, TemplateSet::builtin(), nullptr, 5);
  CHECK(res.runs.size() == 10);
  CHECK(res.grid.get("Directly(total)", "4o") == 0.5);
  CHECK_FALSE(res.grid.get("Directly(total)", "r1"));
  const std::string tsv = res.grid.render_tsv();
  CHECK(tsv == "setting\t4o\to1\tr1\nDirectly(total)\t0.500\tNA\tNA\n");
  for (const auto& r : res.runs) {
    if (r.model_id == "r1") CHECK(r.parsed() == 0);
    else CHECK(r.correct(anon) == 6);
  }
  CHECK_THROWS_AS(run_and_score(anon, cells, {&g4o}, TemplateSet::builtin(), nullptr, 0), Error);
}

TEST_CASE("the full grid has seven rows and is deterministic", "[difficulty]") {
  SyntheticConfig cfg;
  cfg.experts = 1;
  cfg.students = 1;
  cfg.min_fixations = 8;
  cfg.max_fixations = 8;
  const auto table = clean(parse_gaze_csv(generate_gaze_dataset(cfg).csv, default_schema())).table;
  const auto anon = anonymize(builtin_questions(), 5);
  const auto artifacts = gaze_artifacts(table, anon);
  auto run = [&] {
    ModelSpec a, b, c;
    a.model_id = "gpt4o";
    b.model_id = "o1";
    c.model_id = "r1";
    Gateway ga(a, make_provider(a, 9), {1, std::chrono::milliseconds(0), 2.0});
    Gateway gb(b, make_provider(b, 9), {1, std::chrono::milliseconds(0), 2.0});
    Gateway gc(c, make_provider(c, 9), {1, std::chrono::milliseconds(0), 2.0});
    return run_and_score(anon, difficulty_cells(), {&ga, &gb, &gc}, TemplateSet::builtin(), &artifacts, 2);
  };
  const auto r1 = run();
  CHECK(r1.grid.rows.size() == 7);
  CHECK(r1.runs.size() == 7 * 3 * 2);
  for (const auto& row : r1.grid.rows)
    for (const auto& col : r1.grid.columns) {
      const auto v = r1.grid.get(row, col);
      REQUIRE(v);
      CHECK(*v >= 0.0);
      CHECK(*v <= 1.0);
    }
  const auto r2 = run();
  CHECK(r1.grid == r2.grid);
  CHECK(r1.runs == r2.runs);
}

#include <catch_amalgamated.hpp>

#include <set>

#include "gazemine/pattern_miner.hpp"
#include "gazemine/synthetic.hpp"
#include "support.hpp"

using namespace gazemine;

namespace {

BehavioralPattern pat(const std::string& text, int run = 0, const std::string& model = "gpt4o") {
  BehavioralPattern p;
  p.id = pattern_id(text);
  p.text = text;
  p.model_id = model;
  p.run_index = run;
  return p;
}

PatternSet set_of(const std::string& model, std::vector<std::string> texts) {
  PatternSet s;
  s.key = {Stage::horizontal, PromptLevel::brief, model};
  for (const auto& t : texts) s.patterns.push_back(pat(t, 0, model));
  s.deduped = true;
  return s;
}

MiningInputs small_inputs() {
  SyntheticConfig cfg;
  cfg.experts = 1;
  cfg.students = 1;
  cfg.min_fixations = 6;
  cfg.max_fixations = 8;
  return mining_inputs(clean(parse_gaze_csv(generate_gaze_dataset(cfg).csv, default_schema())).table);
}

}  // namespace

TEST_CASE("normalization ignores enumeration, case, spacing and trailing punctuation", "[pattern]") {
  CHECK(normalize_pattern_text("1. Experts   Fixate longer.") == "experts fixate longer");
  CHECK(normalize_pattern_text("- (2) experts fixate longer!!") == "experts fixate longer");
  CHECK(normalize_pattern_text("\xE2\x80\xA2 Experts fixate longer") == "experts fixate longer");
  CHECK(pattern_id("Experts fixate longer") == pattern_id("3) experts fixate LONGER."));
  CHECK(pattern_id("Experts fixate longer") != pattern_id("Experts fixate shorter"));
  // Numbers inside the statement survive.
  CHECK(normalize_pattern_text("2.5 times longer") == "2.5 times longer");
}

TEST_CASE("pattern JSON round-trip", "[pattern]") {
  BehavioralPattern p = pat("A statement", 3, "o1");
  p.stage = Stage::merged;
  p.level = PromptLevel::semi_detailed;
  p.frequency = FrequencyClass::high;
  CHECK(BehavioralPattern::from_json(p.to_json()) == p);
  CHECK(p.to_json().at("stage") == "hv");
  CHECK((CellKey{Stage::merged, PromptLevel::brief, "r1"}.file_stem()) == "hv_brief_r1");
  CHECK(level_label(PromptLevel::semi_detailed) == "half");
  CHECK_THROWS_AS(parse_stage("x"), Error);
}

TEST_CASE("dedupe keeps the earliest run's occurrence", "[pattern_miner]") {
  PatternSet s;
  s.patterns = {pat("B thing", 2), pat("A thing", 1), pat("b thing.", 0), pat("C thing", 1)};
  const auto d = dedupe(s);
  CHECK(d.deduped);
  REQUIRE(d.patterns.size() == 3);
  CHECK(d.patterns[0].text == "b thing.");
  CHECK(d.patterns[1].text == "A thing");
  CHECK(d.patterns[2].text == "C thing");
  CHECK(dedupe(d) == d);
}

TEST_CASE("similarity matching is off by default", "[pattern_miner]") {
  const auto a = pat("experts fixate longer on the error region");
  const auto b = pat("experts fixate longer on the error region today");
  CHECK(token_jaccard(a.text, b.text) == Catch::Approx(7.0 / 8.0));
  CHECK_FALSE(same_pattern(a, b, {}));
  CHECK(same_pattern(a, b, {.similarity = true, .jaccard = 0.8}));
  PatternSet s;
  s.patterns = {a, b};
  CHECK(dedupe(s).patterns.size() == 2);
  CHECK(dedupe(s, {.similarity = true}).patterns.size() == 1);
}

TEST_CASE("classify_frequency labels shared patterns high", "[pattern_miner]") {
  const auto sets = classify_frequency(
      {set_of("gpt4o", {"shared one", "only 4o"}), set_of("o1", {"Shared one.", "only o1"}),
       set_of("r1", {"only r1"})});
  CHECK(sets[0].patterns[0].frequency == FrequencyClass::high);
  CHECK(sets[0].patterns[1].frequency == FrequencyClass::low);
  CHECK(sets[1].patterns[0].frequency == FrequencyClass::high);
  CHECK(sets[2].patterns[0].frequency == FrequencyClass::low);

  CHECK_THROWS_AS(classify_frequency({set_of("a", {"x"})}), Error);
  PatternSet raw = set_of("b", {"x"});
  raw.deduped = false;
  CHECK_THROWS_AS(classify_frequency({set_of("a", {"x"}), raw}), Error);
  PatternSet other = set_of("b", {"x"});
  other.key.level = PromptLevel::detailed;
  CHECK_THROWS_AS(classify_frequency({set_of("a", {"x"}), other}), Error);
}

TEST_CASE("sample sizes are ceil(0.3 h) and ceil(0.1 l)", "[pattern_miner][property]") {
  for (std::size_t n = 0; n <= 100; ++n) {
    // Integer oracle: ceil(3n/10) and ceil(n/10).
    CHECK(sample_size(n, kHighSampleRate) == (3 * n + 9) / 10);
    CHECK(sample_size(n, kLowSampleRate) == (n + 9) / 10);
  }
  CHECK(sample_size(7, 0.0) == 0);
  CHECK(sample_size(7, 1.0) == 7);
  CHECK_THROWS_AS(sample_size(3, 1.5), Error);
}

TEST_CASE("sample_composite draws the right counts deterministically", "[pattern_miner][property]") {
  Rng rng(41);
  for (int trial = 0; trial < 60; ++trial) {
    const auto h = static_cast<std::size_t>(rng.between(0, 40));
    const auto l = static_cast<std::size_t>(rng.between(0, 40));
    std::vector<BehavioralPattern> labeled;
    for (std::size_t i = 0; i < h + l; ++i) {
      auto p = pat("pattern " + std::to_string(i));
      p.frequency = i < h ? FrequencyClass::high : FrequencyClass::low;
      labeled.push_back(p);
    }
    // Interleave classes so order-keeping is visible.
    std::stable_partition(labeled.begin(), labeled.end(), [](const auto& p) { return p.id.back() < '8'; });
    const auto seed = rng.next();
    const auto s = sample_composite(labeled, seed);
    CHECK(s == sample_composite(labeled, seed));
    std::size_t hi = 0, lo = 0;
    std::set<std::string> ids;
    for (const auto& p : s.patterns) {
      (*p.frequency == FrequencyClass::high ? hi : lo)++;
      ids.insert(p.id);
    }
    CHECK(hi == (3 * h + 9) / 10);
    CHECK(lo == (l + 9) / 10);
    CHECK(ids.size() == s.patterns.size());
    // High picks precede low picks.
    for (std::size_t i = 0; i < hi; ++i) CHECK(*s.patterns[i].frequency == FrequencyClass::high);
  }
  std::vector<BehavioralPattern> unlabeled = {pat("x")};
  CHECK_THROWS_AS(sample_composite(unlabeled, 1), Error);
}

TEST_CASE("mine_cell returns the union over runs", "[pattern_miner]") {
  const auto inputs = small_inputs();
  const auto tpl = TemplateSet::builtin();
  ModelSpec spec;
  spec.model_id = "o1";
  Gateway g(spec, std::make_shared<MockProvider>(5), {1, std::chrono::milliseconds(0), 2.0});
  MiningOptions opts;
  opts.n_runs = 4;
  opts.bundle.budget_chars = 4000;

  const auto h = mine_cell(inputs, Stage::horizontal, PromptLevel::brief, g, tpl, opts);
  CHECK(h.key.model_id == "o1");
  CHECK_FALSE(h.deduped);
  std::set<int> runs;
  for (const auto& p : h.patterns) {
    CHECK(p.stage == Stage::horizontal);
    CHECK(p.level == PromptLevel::brief);
    runs.insert(p.run_index);
  }
  CHECK(runs == std::set<int>{0, 1, 2, 3});

  const auto d = mine_cell(inputs, Stage::direct, PromptLevel::detailed, g, tpl, opts);
  CHECK_FALSE(d.patterns.empty());

  SECTION("merge stage sends both carried sets") {
    auto mock = std::make_shared<MockProvider>(6);
    std::vector<std::string> merge_prompts;
    mock->set_responder([&](const std::string& p, int) -> std::optional<std::string> {
      if (p.find("Merge them") != std::string::npos) merge_prompts.push_back(p);
      return std::nullopt;
    });
    Gateway gm(spec, mock, {1, std::chrono::milliseconds(0), 2.0});
    const auto m = mine_cell(inputs, Stage::merged, PromptLevel::detailed, gm, tpl, opts);
    CHECK_FALSE(m.patterns.empty());
    for (const auto& p : m.patterns) CHECK(p.stage == Stage::merged);
    std::string all;
    for (const auto& p : merge_prompts) all += p;
    CHECK(all.find("(h) ") != std::string::npos);
    CHECK(all.find("(v) ") != std::string::npos);
  }
}

TEST_CASE("mining grid is deterministic and covers every cell", "[pattern_miner]") {
  const auto inputs = small_inputs();
  const auto tpl = TemplateSet::builtin();
  auto make = [](const std::string& id) {
    ModelSpec s;
    s.model_id = id;
    return Gateway(s, make_provider(s, 7), {1, std::chrono::milliseconds(0), 2.0});
  };
  MiningOptions opts;
  opts.n_runs = 2;
  opts.bundle.budget_chars = 4000;
  GridSpec grid;
  grid.levels = {PromptLevel::brief};

  auto run = [&] {
    Gateway a = make("gpt4o"), b = make("o1");
    return run_mining_grid(inputs, grid, {&a, &b}, tpl, opts, 7);
  };
  const auto r1 = run();
  const auto r2 = run();
  // direct (1 level) + hv, h, v at one level, two models each.
  CHECK(r1.cells.size() == 8);
  CHECK(r1.cells.count({Stage::direct, PromptLevel::detailed, "o1"}) == 1);
  CHECK(r1.composite == r2.composite);
  CHECK(r1.cells == r2.cells);
  for (const auto& [key, set] : r1.cells) {
    CHECK(set.deduped);
    for (const auto& p : set.patterns) CHECK(p.frequency.has_value());
  }
}

TEST_CASE("inductive summary consolidates sets", "[pattern_miner]") {
  ModelSpec spec;
  spec.model_id = "gpt4o";
  Gateway g(spec, std::make_shared<MockProvider>(2), {1, std::chrono::milliseconds(0), 2.0});
  const auto s = inductive_summary({set_of("gpt4o", {"a"}), set_of("o1", {"b"})}, g, TemplateSet::builtin());
  CHECK(s.key.model_id == "merged");
  CHECK(s.deduped);
  CHECK_FALSE(s.patterns.empty());
  CHECK_THROWS_AS(inductive_summary({}, g, TemplateSet::builtin()), Error);
}

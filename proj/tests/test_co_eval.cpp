#include <catch_amalgamated.hpp>

#include "gazemine/co_eval.hpp"
#include "gazemine/llm_gateway.hpp"
#include "gazemine/rng.hpp"
#include "support.hpp"

using namespace gazemine;
using gazemine::testing::TempDir;

namespace {

std::vector<LiteratureEvidence> evidence(const std::array<int, 5>& quartiles, const std::array<int, 5>& stances) {
  std::vector<LiteratureEvidence> out;
  for (int i = 0; i < 5; ++i) out.push_back({"p", i + 1, quartiles[i], stances[i], ""});
  return out;
}

constexpr auto V = Verdict::valid;
constexpr auto I = Verdict::invalid;

ReviewVerdict expert(const std::string& pid, Verdict v, std::optional<std::string> note = std::nullopt) {
  return {pid, Rater::expert, v, "2024-01-01T00:00:00Z", std::move(note)};
}

}  // namespace

TEST_CASE("item scores follow (C + R) * S", "[co_eval]") {
  CHECK(score_evidence({"p", 1, 1, 1, ""}) == 9);
  CHECK(score_evidence({"p", 5, 4, -1, ""}) == -2);
  CHECK(score_evidence({"p", 3, 2, 0, ""}) == 0);
  // Exhaustive over the 60 combinations against the table values.
  for (int rank = 1; rank <= 5; ++rank)
    for (int q = 1; q <= 4; ++q)
      for (int s = -1; s <= 1; ++s) {
        const int c = 6 - rank;
        const int r = 5 - q;
        CHECK(score_evidence({"p", rank, q, s, ""}) == (c + r) * s);
      }
  CHECK(score_evidence({"p", 1, 1, 1, ""}, {2, 3}) == 2 * 5 + 3 * 4);
  CHECK_THROWS_AS(score_evidence({"p", 0, 1, 1, ""}), Error);
  CHECK_THROWS_AS(score_evidence({"p", 1, 5, 1, ""}), Error);
  CHECK_THROWS_AS(score_evidence({"p", 1, 1, 2, ""}), Error);
}

TEST_CASE("pattern score of the worked example", "[co_eval]") {
  const auto s = score_pattern(evidence({1, 1, 2, 3, 4}, {1, 1, 0, -1, 1}));
  CHECK(s.item_scores == std::array<int, 5>{9, 8, 0, -4, 2});
  CHECK(s.total == 15);
  CHECK(s.literature_verdict == Verdict::valid);
  CHECK_FALSE(s.tie);
  CHECK(PatternScore::from_json(s.to_json()) == s);
}

TEST_CASE("neutral evidence ties and counts as invalid", "[co_eval]") {
  const auto s = score_pattern(evidence({1, 2, 3, 4, 1}, {0, 0, 0, 0, 0}));
  CHECK(s.total == 0);
  CHECK(s.tie);
  CHECK(s.literature_verdict == Verdict::invalid);
}

TEST_CASE("score_pattern validates the evidence set", "[co_eval]") {
  auto ev = evidence({1, 1, 1, 1, 1}, {1, 1, 1, 1, 1});
  ev.pop_back();
  CHECK_THROWS_AS(score_pattern(ev), Error);
  ev = evidence({1, 1, 1, 1, 1}, {1, 1, 1, 1, 1});
  ev[4].rank = 1;
  CHECK_THROWS_AS(score_pattern(ev), Error);
}

TEST_CASE("pattern totals match a brute-force sum", "[co_eval][property]") {
  Rng rng(8);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<LiteratureEvidence> ev;
    std::vector<int> ranks = {1, 2, 3, 4, 5};
    for (std::size_t i = ranks.size(); i > 1; --i) std::swap(ranks[i - 1], ranks[rng.below(i)]);
    int expected = 0;
    for (int r : ranks) {
      const int q = static_cast<int>(rng.between(1, 4));
      const int s = static_cast<int>(rng.between(-1, 1));
      ev.push_back({"p", r, q, s, ""});
      expected += ((6 - r) + (5 - q)) * s;
    }
    const auto score = score_pattern(ev);
    CHECK(score.total == expected);
    CHECK((score.literature_verdict == Verdict::valid) == (expected > 0));
  }
}

TEST_CASE("evidence responses parse with lenient field forms", "[co_eval]") {
  const std::string text =
      "Here are the papers:\n"
      R"(1. {"rank": 1, "quartile": "Q2", "stance": "support", "title": "A"})" "\n"
      R"({"rank": 2, "quartile": 3, "stance": -1})" "\n"
      "not json {at all}\n"
      R"({"rank": 3, "quartile": "q4", "stance": "neutral"})" "\n";
  const auto ev = parse_evidence_response(text, "pid");
  REQUIRE(ev.size() == 3);
  CHECK(ev[0].quartile == 2);
  CHECK(ev[0].stance == 1);
  CHECK(ev[0].pattern_id == "pid");
  CHECK(ev[1].stance == -1);
  CHECK(ev[2].quartile == 4);
  CHECK(ev[2].stance == 0);
  CHECK(LiteratureEvidence::from_json(ev[0].to_json()) == ev[0]);
  CHECK_THROWS_AS(parse_evidence_response(R"({"rank": 1, "quartile": "Q9", "stance": 1})", "p"), Error);
}

TEST_CASE("request_evidence asks the model for five records", "[co_eval]") {
  ModelSpec spec;
  spec.model_id = "gpt4o";
  Gateway g(spec, std::make_shared<MockProvider>(4), {1, std::chrono::milliseconds(0), 2.0});
  BehavioralPattern p;
  p.id = pattern_id("x");
  p.text = "x";
  const auto ev = request_evidence(p, g, TemplateSet::builtin());
  REQUIRE(ev.size() == 5);
  CHECK_NOTHROW(score_pattern(ev));

  auto bad = std::make_shared<MockProvider>(4);
  bad->set_responder([](const std::string&, int) -> std::optional<std::string> { return "no records"; });
  Gateway gb(spec, bad, {1, std::chrono::milliseconds(0), 2.0});
  CHECK_THROWS_AS(request_evidence(p, gb, TemplateSet::builtin()), Error);
}

TEST_CASE("kappa worked examples", "[co_eval][kappa]") {
  const auto r = cohen_kappa({V, V, V, I}, {V, V, I, I});
  CHECK(r.p_o == 0.75);
  CHECK(r.p_e == 0.5);
  CHECK(r.kappa == 0.5);
  CHECK_FALSE(r.consistent);
  CHECK(r.contingency[0][0] == 2);
  CHECK(r.contingency[0][1] == 1);
  CHECK(r.contingency[1][1] == 1);

  const auto same = cohen_kappa({V, I, I}, {V, I, I});
  CHECK(same.kappa == 1.0);
  CHECK(same.consistent);

  // p_o = p_e
  CHECK(cohen_kappa({V, V, I, I}, {V, I, V, I}).kappa == 0.0);
  // Unanimous agreement counts as perfect.
  CHECK(cohen_kappa({V, V}, {V, V}).kappa == 1.0);
  // Opposite unanimous raters: p_e = 0, so kappa is 0 rather than undefined.
  CHECK(cohen_kappa({V, V}, {I, I}).kappa == 0.0);
  CHECK_THROWS_AS(cohen_kappa({V}, {V, I}), Error);
  CHECK_THROWS_AS(cohen_kappa({}, {}), Error);
  CHECK(KappaReport::from_json(r.to_json()) == r);
}

TEST_CASE("kappa matches a proportion-based oracle", "[co_eval][kappa][property]") {
  Rng rng(2024);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto n = static_cast<std::size_t>(rng.between(4, 200));
    std::vector<Verdict> a(n), b(n);
    const double pa = rng.uniform(), pb = rng.uniform(), agree = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.bernoulli(pa) ? V : I;
      b[i] = rng.bernoulli(agree) ? a[i] : (rng.bernoulli(pb) ? V : I);
    }
    double av = 0, bv = 0, same = 0;
    for (std::size_t i = 0; i < n; ++i) {
      av += a[i] == V;
      bv += b[i] == V;
      same += a[i] == b[i];
    }
    const double dn = static_cast<double>(n);
    const double po = same / dn;
    const double pe = (av / dn) * (bv / dn) + (1 - av / dn) * (1 - bv / dn);
    if (pe == 1.0) {
      if (po == 1.0) {
        CHECK(cohen_kappa(a, b).kappa == 1.0);
      } else {
        CHECK_THROWS_AS(cohen_kappa(a, b), Error);
      }
      continue;
    }
    const auto r = cohen_kappa(a, b);
    CHECK(std::abs(r.kappa - (po - pe) / (1 - pe)) <= 1e-12);
    CHECK(cohen_kappa(b, a).kappa == r.kappa);
    CHECK(cohen_kappa(a, a).kappa == 1.0);
  }
}

TEST_CASE("consistency flips exactly above 0.6", "[co_eval][kappa]") {
  // Every 2x2 table up to n = 30: consistent iff kappa > 3/5 in exact integers.
  bool saw_exact = false;
  for (std::size_t n = 1; n <= 30; ++n)
    for (std::size_t vv = 0; vv <= n; ++vv)
      for (std::size_t vi = 0; vv + vi <= n; ++vi)
        for (std::size_t iv = 0; vv + vi + iv <= n; ++iv) {
          const std::size_t ii = n - vv - vi - iv;
          std::vector<Verdict> a, b;
          auto push = [&](std::size_t k, Verdict x, Verdict y) {
            for (std::size_t i = 0; i < k; ++i) {
              a.push_back(x);
              b.push_back(y);
            }
          };
          push(vv, V, V);
          push(vi, V, I);
          push(iv, I, V);
          push(ii, I, I);
          const long long num = static_cast<long long>(n * (vv + ii)) -
                                static_cast<long long>((vv + vi) * (vv + iv) + (iv + ii) * (vi + ii));
          const long long den = static_cast<long long>(n * n) -
                                static_cast<long long>((vv + vi) * (vv + iv) + (iv + ii) * (vi + ii));
          if (den == 0) continue;
          const auto r = cohen_kappa(a, b);
          CHECK(r.consistent == (5 * num > 3 * den));
          if (5 * num == 3 * den) {
            saw_exact = true;
            CHECK_FALSE(r.consistent);
          }
        }
  CHECK(saw_exact);
}

TEST_CASE("verdict log is append-only with latest-wins semantics", "[co_eval]") {
  VerdictLog log;
  CHECK(log.submit(expert("p1", V)) == SubmitOutcome::added);
  CHECK(log.submit(expert("p1", V)) == SubmitOutcome::unchanged);
  CHECK(log.submit(expert("p1", I, "changed my mind")) == SubmitOutcome::replaced);
  CHECK(log.submit(expert("p2", V)) == SubmitOutcome::added);
  CHECK(log.history().size() == 3);
  CHECK(log.latest("p1", Rater::expert)->verdict == I);
  CHECK_FALSE(log.latest("p1", Rater::literature));
  const auto eff = log.effective();
  REQUIRE(eff.size() == 2);
  CHECK(eff[0].pattern_id == "p1");

  TempDir dir("verdicts");
  log.save(dir / "v.jsonl");
  const auto back = VerdictLog::load(dir / "v.jsonl");
  CHECK(back.history() == log.history());
  CHECK(back.latest("p1", Rater::expert)->note == "changed my mind");

  write_text_file(dir / "bad.jsonl", "{\"pattern_id\":\"p\",\"verdict\":\"valid\"}\n{\"pattern_id\":\"p\",\"verdict\":\"maybe\"}\n");
  CHECK_THROWS_AS(VerdictLog::load(dir / "bad.jsonl"), Error);
  CHECK_THROWS_AS(ReviewVerdict::from_json(json{{"pattern_id", ""}, {"verdict", "valid"}}), Error);
}

TEST_CASE("utc timestamps are ISO-8601", "[co_eval]") {
  const auto ts = utc_timestamp();
  CHECK(ts.size() == 20);
  CHECK(ts[10] == 'T');
  CHECK(ts.back() == 'Z');
}

TEST_CASE("cell kappas feed the trust grid", "[co_eval]") {
  PatternSet composite;
  std::map<std::string, PatternScore> scores;
  VerdictLog verdicts;
  auto add = [&](const std::string& text, Stage stage, PromptLevel level, const std::string& model, Verdict lit,
                 std::optional<Verdict> exp) {
    BehavioralPattern p;
    p.text = text;
    p.id = pattern_id(text + model);
    p.stage = stage;
    p.level = level;
    p.model_id = model;
    composite.patterns.push_back(p);
    PatternScore s;
    s.pattern_id = p.id;
    s.literature_verdict = lit;
    scores[p.id] = s;
    if (exp) verdicts.submit(expert(p.id, *exp));
  };
  add("a", Stage::direct, PromptLevel::detailed, "gpt4o", V, V);
  add("b", Stage::direct, PromptLevel::detailed, "gpt4o", I, I);
  add("c", Stage::direct, PromptLevel::detailed, "gpt4o", V, I);
  add("d", Stage::direct, PromptLevel::detailed, "gpt4o", V, V);
  add("e", Stage::horizontal, PromptLevel::brief, "o1", V, std::nullopt);
  add("f", Stage::merged, PromptLevel::semi_detailed, "r1", V, I);

  const auto cells = cell_kappas(composite, scores, verdicts);
  REQUIRE(cells.size() == 3);
  const auto grid = trust_grid(cells);
  CHECK(grid.rows.size() == 10);
  CHECK(grid.columns == std::vector<std::string>{"4o", "o1", "r1"});
  CHECK(grid.get("Directly", "4o") == Catch::Approx(0.5));
  CHECK_FALSE(grid.get("h(none)", "o1"));   // no expert verdict
  CHECK(grid.get("h+v(half)", "r1") == 0.0);
  const std::string tsv = grid.render_tsv();
  CHECK(tsv.rfind("setting\t4o\to1\tr1\nDirectly\t0.500\tNA\tNA\n", 0) == 0);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 11);
  CHECK(ExperimentGrid::from_json(grid.to_json()) == grid);
  for (const auto& c : cells) CHECK(CellKappa::from_json(c.to_json()) == c);

  const auto overall = overall_kappa(composite, scores, verdicts);
  REQUIRE(overall);
  CHECK(overall->n == 5);
}

TEST_CASE("row labels match the report layout", "[co_eval]") {
  CHECK(trust_row_label(Stage::direct, PromptLevel::brief) == "Directly");
  CHECK(trust_row_label(Stage::merged, PromptLevel::detailed) == "h+v(total)");
  CHECK(trust_row_label(Stage::vertical, PromptLevel::brief) == "v(none)");
  CHECK(trust_row_label(Stage::horizontal, PromptLevel::semi_detailed) == "h(half)");
}

#include "gazemine/co_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <set>

#include "gazemine/llm_gateway.hpp"
#include "gazemine/segmentation.hpp"

namespace gazemine {

std::string_view to_string(Verdict v) { return v == Verdict::valid ? "valid" : "invalid"; }
std::string_view to_string(Rater r) { return r == Rater::expert ? "expert" : "literature"; }

Verdict parse_verdict(std::string_view text) {
  const std::string t = to_lower(trim(text));
  if (t == "valid") return Verdict::valid;
  if (t == "invalid") return Verdict::invalid;
  throw Error(ErrorKind::validation, "unknown verdict '" + std::string(text) + "'");
}

Rater parse_rater(std::string_view text) {
  const std::string t = to_lower(trim(text));
  if (t == "expert") return Rater::expert;
  if (t == "literature") return Rater::literature;
  throw Error(ErrorKind::validation, "unknown rater '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Evidence and scoring

namespace {

int quartile_from_json(const json& q) {
  int v = 0;
  if (q.is_number_integer()) {
    v = q.get<int>();
  } else if (q.is_string()) {
    std::string s = to_lower(trim(q.get<std::string>()));
    if (!s.empty() && s[0] == 'q') s.erase(0, 1);
    if (s.size() == 1 && s[0] >= '1' && s[0] <= '4') v = s[0] - '0';
  }
  if (v < 1 || v > 4) throw Error(ErrorKind::validation, "quartile must be Q1..Q4, got " + q.dump());
  return v;
}

int stance_from_json(const json& s) {
  if (s.is_number_integer()) {
    const int v = s.get<int>();
    if (v >= -1 && v <= 1) return v;
  } else if (s.is_string()) {
    const std::string t = to_lower(trim(s.get<std::string>()));
    if (t == "support" || t == "supports" || t == "+1" || t == "1") return 1;
    if (t == "neutral" || t == "0") return 0;
    if (t == "oppose" || t == "opposes" || t == "-1") return -1;
  }
  throw Error(ErrorKind::validation, "stance must be support, neutral or oppose, got " + s.dump());
}

}  // namespace

json LiteratureEvidence::to_json() const {
  return {{"pattern_id", pattern_id}, {"rank", rank}, {"quartile", "Q" + std::to_string(quartile)},
          {"stance", stance},         {"title", title}};
}

LiteratureEvidence LiteratureEvidence::from_json(const json& j) {
  LiteratureEvidence e;
  try {
    e.pattern_id = j.value("pattern_id", std::string());
    e.rank = j.at("rank").get<int>();
    e.quartile = quartile_from_json(j.at("quartile"));
    e.stance = stance_from_json(j.at("stance"));
    e.title = j.value("title", std::string());
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::validation, std::string("evidence record: ") + ex.what());
  }
  return e;
}

int score_evidence(const LiteratureEvidence& e, const ScoreWeights& w) {
  if (e.rank < 1 || e.rank > 5) throw Error(ErrorKind::domain, "rank must be 1..5, got " + std::to_string(e.rank));
  if (e.quartile < 1 || e.quartile > 4)
    throw Error(ErrorKind::domain, "quartile index must be 1..4, got " + std::to_string(e.quartile));
  if (e.stance < -1 || e.stance > 1)
    throw Error(ErrorKind::domain, "stance must be -1, 0 or +1, got " + std::to_string(e.stance));
  return (w.citation * e.citation_points() + w.ranking * e.ranking_points()) * e.stance;
}

json PatternScore::to_json() const {
  return {{"pattern_id", pattern_id},
          {"item_scores", item_scores},
          {"total", total},
          {"literature_verdict", to_string(literature_verdict)},
          {"tie", tie}};
}

PatternScore PatternScore::from_json(const json& j) {
  PatternScore s;
  s.pattern_id = j.at("pattern_id").get<std::string>();
  const auto items = j.at("item_scores").get<std::vector<int>>();
  if (items.size() != 5) throw Error(ErrorKind::validation, "item_scores must have 5 entries");
  std::copy(items.begin(), items.end(), s.item_scores.begin());
  s.total = j.at("total").get<int>();
  s.literature_verdict = parse_verdict(j.at("literature_verdict").get<std::string>());
  s.tie = j.value("tie", false);
  return s;
}

PatternScore score_pattern(const std::vector<LiteratureEvidence>& evidence, const ScoreWeights& w) {
  if (evidence.size() != 5)
    throw Error(ErrorKind::validation, "need exactly 5 evidence records, got " + std::to_string(evidence.size()));
  PatternScore s;
  s.pattern_id = evidence.front().pattern_id;
  std::array<bool, 5> seen{};
  for (const auto& e : evidence) {
    const int f = score_evidence(e, w);
    if (seen[e.rank - 1]) throw Error(ErrorKind::validation, "duplicate evidence rank " + std::to_string(e.rank));
    seen[e.rank - 1] = true;
    s.item_scores[e.rank - 1] = f;
    s.total += f;
  }
  s.literature_verdict = s.total > 0 ? Verdict::valid : Verdict::invalid;
  s.tie = s.total == 0;
  return s;
}

std::vector<LiteratureEvidence> parse_evidence_response(const std::string& text, const std::string& pattern_id) {
  std::vector<LiteratureEvidence> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = trim(std::string_view(text).substr(pos, end - pos));
    pos = end + 1;
    const auto open = line.find('{');
    const auto close = line.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open) continue;
    json j;
    try {
      j = json::parse(line.substr(open, close - open + 1));
    } catch (const json::exception&) {
      continue;
    }
    if (!j.is_object()) continue;
    LiteratureEvidence e = LiteratureEvidence::from_json(j);
    e.pattern_id = pattern_id;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<LiteratureEvidence> request_evidence(const BehavioralPattern& pattern, Gateway& gateway,
                                                 const TemplateSet& templates) {
  const std::string prompt = render_template(templates.get("literature"), {{"PATTERNS", pattern.text}});
  const ModelResponse r = gateway.complete(prompt);
  auto evidence = parse_evidence_response(r.text, pattern.id);
  if (evidence.size() != 5)
    throw Error(ErrorKind::content, "pattern " + pattern.id + ": expected 5 evidence records, model returned " +
                                        std::to_string(evidence.size()));
  return evidence;
}

// ---------------------------------------------------------------------------
// Verdicts

json ReviewVerdict::to_json() const {
  json j = {{"pattern_id", pattern_id},
            {"rater", to_string(rater)},
            {"verdict", to_string(verdict)},
            {"timestamp", timestamp}};
  if (note) j["note"] = *note;
  return j;
}

ReviewVerdict ReviewVerdict::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::validation, "verdict must be a JSON object");
  ReviewVerdict v;
  try {
    v.pattern_id = j.at("pattern_id").get<std::string>();
    v.rater = parse_rater(j.value("rater", std::string("expert")));
    v.verdict = parse_verdict(j.at("verdict").get<std::string>());
    v.timestamp = j.value("timestamp", std::string());
    if (j.contains("note") && !j["note"].is_null()) v.note = j["note"].get<std::string>();
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::validation, std::string("verdict: ") + ex.what());
  }
  if (v.pattern_id.empty()) throw Error(ErrorKind::validation, "verdict: empty pattern_id");
  return v;
}

bool ReviewVerdict::same_body(const ReviewVerdict& o) const {
  return pattern_id == o.pattern_id && rater == o.rater && verdict == o.verdict && note == o.note;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

VerdictLog::VerdictLog(std::vector<ReviewVerdict> history) {
  for (auto& v : history) {
    latest_[{v.pattern_id, v.rater}] = history_.size();
    history_.push_back(std::move(v));
  }
}

SubmitOutcome VerdictLog::submit(const ReviewVerdict& v) {
  const auto key = std::make_pair(v.pattern_id, v.rater);
  const auto it = latest_.find(key);
  if (it != latest_.end() && history_[it->second].same_body(v)) return SubmitOutcome::unchanged;
  const SubmitOutcome outcome = it == latest_.end() ? SubmitOutcome::added : SubmitOutcome::replaced;
  latest_[key] = history_.size();
  history_.push_back(v);
  return outcome;
}

std::optional<ReviewVerdict> VerdictLog::latest(const std::string& pattern_id, Rater rater) const {
  const auto it = latest_.find({pattern_id, rater});
  if (it == latest_.end()) return std::nullopt;
  return history_[it->second];
}

std::vector<ReviewVerdict> VerdictLog::effective() const {
  std::vector<ReviewVerdict> out;
  out.reserve(latest_.size());
  for (const auto& [key, idx] : latest_) out.push_back(history_[idx]);
  return out;
}

VerdictLog VerdictLog::load(const std::filesystem::path& path) {
  std::vector<ReviewVerdict> history;
  for (const auto& j : read_jsonl(path)) history.push_back(ReviewVerdict::from_json(j));
  return VerdictLog(std::move(history));
}

void VerdictLog::save(const std::filesystem::path& path) const {
  std::vector<json> records;
  records.reserve(history_.size());
  for (const auto& v : history_) records.push_back(v.to_json());
  write_jsonl(path, records);
}

// ---------------------------------------------------------------------------
// Kappa

json KappaReport::to_json() const {
  return {{"n", n},
          {"p_o", p_o},
          {"p_e", p_e},
          {"kappa", kappa},
          {"consistent", consistent},
          {"contingency", {{contingency[0][0], contingency[0][1]}, {contingency[1][0], contingency[1][1]}}}};
}

KappaReport KappaReport::from_json(const json& j) {
  KappaReport r;
  r.n = j.at("n").get<std::size_t>();
  r.p_o = j.at("p_o").get<double>();
  r.p_e = j.at("p_e").get<double>();
  r.kappa = j.at("kappa").get<double>();
  r.consistent = j.at("consistent").get<bool>();
  const auto& c = j.at("contingency");
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) r.contingency[i][k] = c.at(i).at(k).get<std::size_t>();
  return r;
}

KappaReport cohen_kappa(const std::vector<Verdict>& a, const std::vector<Verdict>& b) {
  if (a.size() != b.size())
    throw Error(ErrorKind::validation, "kappa: rater vectors differ in length (" + std::to_string(a.size()) +
                                           " vs " + std::to_string(b.size()) + ")");
  if (a.empty()) throw Error(ErrorKind::validation, "kappa: no rated items");
  KappaReport r;
  r.n = a.size();
  for (std::size_t i = 0; i < a.size(); ++i)
    ++r.contingency[a[i] == Verdict::valid ? 0 : 1][b[i] == Verdict::valid ? 0 : 1];

  // Integer numerator and denominator: kappa = (n*agree - E) / (n^2 - E).
  const auto& c = r.contingency;
  const std::uint64_t n = r.n;
  const std::uint64_t agree = c[0][0] + c[1][1];
  const std::uint64_t e = (c[0][0] + c[0][1]) * (c[0][0] + c[1][0]) + (c[1][0] + c[1][1]) * (c[0][1] + c[1][1]);
  r.p_o = static_cast<double>(agree) / static_cast<double>(n);
  r.p_e = static_cast<double>(e) / static_cast<double>(n * n);
  if (e == n * n) {
    if (agree != n)
      throw Error(ErrorKind::degenerate, "kappa: both raters unanimous but disagreeing");
    r.kappa = 1.0;
  } else {
    r.kappa = (static_cast<double>(n * agree) - static_cast<double>(e)) / static_cast<double>(n * n - e);
  }
  r.consistent = r.kappa > kConsistencyThreshold;
  return r;
}

// ---------------------------------------------------------------------------
// Grids

std::optional<double> ExperimentGrid::get(const std::string& row, const std::string& col) const {
  const auto it = values.find({row, col});
  if (it == values.end()) return std::nullopt;
  return it->second;
}

std::string ExperimentGrid::render_tsv() const {
  std::string out = corner;
  for (const auto& c : columns) out += "\t" + c;
  out += "\n";
  for (const auto& r : rows) {
    out += r;
    for (const auto& c : columns) {
      const auto v = get(r, c);
      if (!v || !std::isfinite(*v)) {
        out += "\tNA";
        continue;
      }
      const double shown = std::abs(*v) < 0.0005 ? 0.0 : *v;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", shown);
      out += "\t";
      out += buf;
    }
    out += "\n";
  }
  return out;
}

json ExperimentGrid::to_json() const {
  json cells = json::array();
  for (const auto& [k, v] : values) cells.push_back({k.first, k.second, v});
  return {{"corner", corner}, {"rows", rows}, {"columns", columns}, {"values", cells}};
}

ExperimentGrid ExperimentGrid::from_json(const json& j) {
  ExperimentGrid g;
  g.corner = j.value("corner", std::string("setting"));
  g.rows = j.at("rows").get<std::vector<std::string>>();
  g.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& cell : j.at("values"))
    g.values[{cell.at(0).get<std::string>(), cell.at(1).get<std::string>()}] = cell.at(2).get<double>();
  return g;
}

std::string trust_row_label(Stage stage, PromptLevel level) {
  if (stage == Stage::direct) return "Directly";
  const std::string prefix = stage == Stage::merged ? "h+v" : std::string(to_string(stage));
  return prefix + "(" + std::string(level_label(level)) + ")";
}

const std::vector<std::string>& trust_rows() {
  static const std::vector<std::string> rows = {"Directly",   "h+v(total)", "h(total)", "v(total)",
                                                "h+v(half)",  "h(half)",    "v(half)",  "h+v(none)",
                                                "h(none)",    "v(none)"};
  return rows;
}

const std::vector<std::string>& grid_columns() {
  static const std::vector<std::string> cols = {"4o", "o1", "r1"};
  return cols;
}

json CellKappa::to_json() const {
  return {{"stage", to_string(key.stage)},
          {"prompt_level", to_string(key.level)},
          {"model_id", key.model_id},
          {"report", report ? report->to_json() : json(nullptr)},
          {"note", note}};
}

CellKappa CellKappa::from_json(const json& j) {
  CellKappa c;
  c.key.stage = parse_stage(j.at("stage").get<std::string>());
  c.key.level = parse_prompt_level(j.at("prompt_level").get<std::string>());
  c.key.model_id = j.at("model_id").get<std::string>();
  if (!j.at("report").is_null()) c.report = KappaReport::from_json(j.at("report"));
  c.note = j.value("note", std::string());
  return c;
}

namespace {

bool rated_pair(const BehavioralPattern& p, const std::map<std::string, PatternScore>& scores,
                const VerdictLog& verdicts, Verdict& expert, Verdict& literature) {
  const auto s = scores.find(p.id);
  const auto v = verdicts.latest(p.id, Rater::expert);
  if (s == scores.end() || !v) return false;
  expert = v->verdict;
  literature = s->second.literature_verdict;
  return true;
}

}  // namespace

std::vector<CellKappa> cell_kappas(const PatternSet& composite, const std::map<std::string, PatternScore>& scores,
                                   const VerdictLog& verdicts) {
  std::map<CellKey, std::pair<std::vector<Verdict>, std::vector<Verdict>>> by_cell;
  for (const auto& p : composite.patterns) {
    auto& [ex, lit] = by_cell[CellKey{p.stage, p.level, p.model_id}];
    Verdict e, l;
    if (rated_pair(p, scores, verdicts, e, l)) {
      ex.push_back(e);
      lit.push_back(l);
    }
  }
  std::vector<CellKappa> out;
  for (const auto& [key, vs] : by_cell) {
    CellKappa c;
    c.key = key;
    if (vs.first.empty()) {
      c.note = "no pattern with both verdicts";
    } else {
      try {
        c.report = cohen_kappa(vs.first, vs.second);
      } catch (const Error& e) {
        c.note = e.what();
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::optional<KappaReport> overall_kappa(const PatternSet& composite,
                                         const std::map<std::string, PatternScore>& scores,
                                         const VerdictLog& verdicts) {
  std::vector<Verdict> ex, lit;
  std::set<std::string> seen;
  for (const auto& p : composite.patterns) {
    Verdict e, l;
    if (seen.insert(p.id).second && rated_pair(p, scores, verdicts, e, l)) {
      ex.push_back(e);
      lit.push_back(l);
    }
  }
  if (ex.empty()) return std::nullopt;
  try {
    return cohen_kappa(ex, lit);
  } catch (const Error&) {
    return std::nullopt;
  }
}

ExperimentGrid trust_grid(const std::vector<CellKappa>& cells) {
  ExperimentGrid g;
  g.rows = trust_rows();
  g.columns = grid_columns();
  for (const auto& c : cells) {
    if (c.report) g.set(trust_row_label(c.key.stage, c.key.level), model_label(c.key.model_id), c.report->kappa);
  }
  return g;
}

}  // namespace gazemine

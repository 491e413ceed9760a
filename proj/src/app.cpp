#include "gazemine/app.hpp"

#include <algorithm>
#include <set>

#include "gazemine/rng.hpp"
#include "gazemine/segmentation.hpp"

namespace gazemine {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(ErrorKind::configuration, where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!ok) throw Error(ErrorKind::configuration, "unknown config key '" + where + "." + key + "'");
  }
}

json fields_to_json(const FieldNames& f) {
  json j = json::object();
  for (const auto& [field, name] : f.overrides) j[std::string(default_field_name(field))] = name;
  return j;
}

json clean_to_json(const CleanConfig& c) {
  return {{"min_fix", c.min_fix_ms}, {"max_fix", c.max_fix_ms}, {"questions", c.questions}};
}

std::string path_string(const std::optional<fs::path>& p) { return p ? p->string() : std::string(); }

}  // namespace

AppConfig AppConfig::from_json(const json& j) {
  check_keys(j, "config",
             {"seed", "store", "input", "aois", "questions", "templates_dir", "ui_dir", "schema", "fields", "clean",
              "models", "provider", "evidence_model", "retry", "mining", "scoring", "lstm", "difficulty", "server"});
  AppConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.store = j.value("store", c.store.string());
    auto opt_path = [&](const char* key, std::optional<fs::path>& out) {
      if (j.contains(key) && !j[key].is_null() && !j[key].get<std::string>().empty()) out = j[key].get<std::string>();
    };
    opt_path("input", c.input);
    opt_path("aois", c.aois);
    opt_path("questions", c.questions);
    opt_path("templates_dir", c.templates_dir);
    c.ui_dir = j.value("ui_dir", c.ui_dir.string());
    if (j.contains("fields")) c.fields = FieldNames::from_json(j["fields"]);
    c.schema = j.contains("schema") ? schema_from_json(j["schema"]) : default_schema(c.fields);
    if (j.contains("clean")) {
      check_keys(j["clean"], "clean", {"min_fix", "max_fix", "questions"});
      c.clean = CleanConfig::from_json(j["clean"]);
    }
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j["models"]) c.models.push_back(ModelSpec::from_json(m));
      if (c.models.empty()) throw Error(ErrorKind::configuration, "config lists no models");
    }
    if (j.contains("provider")) c.provider = j["provider"].get<std::string>();
    c.evidence_model = j.value("evidence_model", std::string());
    if (j.contains("retry")) {
      const auto& r = j["retry"];
      check_keys(r, "retry", {"max_attempts", "base_delay_ms", "factor"});
      c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
      c.retry.base_delay = std::chrono::milliseconds(r.value("base_delay_ms", static_cast<int>(c.retry.base_delay.count())));
      c.retry.factor = r.value("factor", c.retry.factor);
    }
    if (j.contains("mining")) {
      const auto& m = j["mining"];
      check_keys(m, "mining", {"n_runs", "budget_chars", "similarity", "jaccard", "stages", "levels", "direct_level"});
      c.mining.n_runs = m.value("n_runs", c.mining.n_runs);
      c.mining.bundle.budget_chars = m.value("budget_chars", c.mining.bundle.budget_chars);
      c.mining.match.similarity = m.value("similarity", c.mining.match.similarity);
      c.mining.match.jaccard = m.value("jaccard", c.mining.match.jaccard);
      if (m.contains("stages")) {
        c.grid.stages.clear();
        for (const auto& s : m["stages"]) c.grid.stages.push_back(parse_stage(s.get<std::string>()));
      }
      if (m.contains("levels")) {
        c.grid.levels.clear();
        for (const auto& l : m["levels"]) c.grid.levels.push_back(parse_prompt_level(l.get<std::string>()));
      }
      if (m.contains("direct_level")) c.grid.direct_level = parse_prompt_level(m["direct_level"].get<std::string>());
    }
    if (j.contains("scoring")) {
      const auto& s = j["scoring"];
      check_keys(s, "scoring", {"citation_weight", "ranking_weight"});
      c.weights.citation = s.value("citation_weight", c.weights.citation);
      c.weights.ranking = s.value("ranking_weight", c.weights.ranking);
    }
    if (j.contains("lstm")) {
      const auto& l = j["lstm"];
      check_keys(l, "lstm", {"hidden_dim", "window_len", "stride", "epochs", "learning_rate", "clip_norm", "k"});
      c.train.hidden_dim = l.value("hidden_dim", c.train.hidden_dim);
      c.windows.window_len = l.value("window_len", c.windows.window_len);
      c.windows.stride = l.value("stride", c.windows.stride);
      c.train.epochs = l.value("epochs", c.train.epochs);
      c.train.learning_rate = l.value("learning_rate", c.train.learning_rate);
      c.train.clip_norm = l.value("clip_norm", c.train.clip_norm);
      c.k = l.value("k", c.k);
    }
    if (j.contains("difficulty")) {
      const auto& d = j["difficulty"];
      check_keys(d, "difficulty", {"repetitions", "lexicon"});
      c.repetitions = d.value("repetitions", c.repetitions);
      if (d.contains("lexicon")) c.lexicon = d["lexicon"].get<std::vector<std::string>>();
    }
    if (j.contains("server")) {
      const auto& s = j["server"];
      check_keys(s, "server", {"host", "port"});
      c.host = s.value("host", c.host);
      c.port = s.value("port", c.port);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::configuration, std::string("config: ") + e.what());
  }
  if (c.mining.n_runs < 1) throw Error(ErrorKind::configuration, "mining.n_runs must be at least 1");
  if (c.repetitions < 1) throw Error(ErrorKind::configuration, "difficulty.repetitions must be at least 1");
  if (c.k < 0.0) throw Error(ErrorKind::configuration, "lstm.k must be non-negative");
  return c;
}

json AppConfig::to_json() const {
  json models_json = json::array();
  for (const auto& m : models) models_json.push_back(m.to_json());
  json stages_json = json::array(), levels_json = json::array();
  for (Stage s : grid.stages) stages_json.push_back(to_string(s));
  for (PromptLevel l : grid.levels) levels_json.push_back(to_string(l));
  json j = {{"seed", seed},
            {"store", store.string()},
            {"input", path_string(input)},
            {"aois", path_string(aois)},
            {"questions", path_string(questions)},
            {"templates_dir", path_string(templates_dir)},
            {"ui_dir", ui_dir.string()},
            {"schema", schema_to_json(schema)},
            {"fields", fields_to_json(fields)},
            {"clean", clean_to_json(clean)},
            {"models", models_json},
            {"evidence_model", evidence_model},
            {"retry",
             {{"max_attempts", retry.max_attempts},
              {"base_delay_ms", retry.base_delay.count()},
              {"factor", retry.factor}}},
            {"mining",
             {{"n_runs", mining.n_runs},
              {"budget_chars", mining.bundle.budget_chars},
              {"similarity", mining.match.similarity},
              {"jaccard", mining.match.jaccard},
              {"stages", stages_json},
              {"levels", levels_json},
              {"direct_level", to_string(grid.direct_level)}}},
            {"scoring", {{"citation_weight", weights.citation}, {"ranking_weight", weights.ranking}}},
            {"lstm",
             {{"hidden_dim", train.hidden_dim},
              {"window_len", windows.window_len},
              {"stride", windows.stride},
              {"epochs", train.epochs},
              {"learning_rate", train.learning_rate},
              {"clip_norm", train.clip_norm},
              {"k", k}}},
            {"difficulty", {{"repetitions", repetitions}, {"lexicon", lexicon}}},
            {"server", {{"host", host}, {"port", port}}}};
  if (provider) j["provider"] = *provider;
  return j;
}

AppConfig load_config(const std::optional<fs::path>& path) {
  if (!path) return AppConfig{};
  if (!fs::exists(*path)) throw Error(ErrorKind::configuration, "config file '" + path->string() + "' not found");
  AppConfig c = AppConfig::from_json(read_json_file(*path));
  const fs::path base = path->parent_path();
  auto resolve = [&](fs::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  resolve(c.store);
  resolve(c.ui_dir);
  for (auto* opt : {&c.input, &c.aois, &c.questions, &c.templates_dir})
    if (*opt) resolve(**opt);
  return c;
}

// ---------------------------------------------------------------------------
// Manifest and store

std::string_view to_string(StageStatus s) {
  switch (s) {
    case StageStatus::pending: return "pending";
    case StageStatus::running: return "running";
    case StageStatus::done: return "done";
    case StageStatus::failed: return "failed";
  }
  return "pending";
}

namespace {

StageStatus parse_status(const std::string& s) {
  if (s == "pending") return StageStatus::pending;
  if (s == "running") return StageStatus::running;
  if (s == "done") return StageStatus::done;
  if (s == "failed") return StageStatus::failed;
  throw Error(ErrorKind::validation, "unknown stage status '" + s + "'");
}

}  // namespace

json RunManifest::to_json() const {
  json st = json::object();
  for (const auto& [k, v] : stages) st[k] = to_string(v);
  return {{"run_id", run_id}, {"seed", seed},       {"created_at", created_at}, {"config", config},
          {"stages", st},     {"history", history}, {"artifacts", artifacts}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.run_id = j.at("run_id").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.created_at = j.at("created_at").get<std::string>();
    m.config = j.at("config");
    for (const auto& [k, v] : j.at("stages").items()) m.stages[k] = parse_status(v.get<std::string>());
    m.history = j.at("history").get<std::vector<json>>();
    m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::validation, std::string("manifest: ") + e.what());
  }
  return m;
}

std::string make_run_id(std::uint64_t seed) {
  std::string stamp = utc_timestamp();  // 2026-01-02T03:04:05Z
  std::string compact;
  for (char c : stamp)
    if (c != '-' && c != ':' && c != 'Z') compact += c;
  return compact + "-s" + std::to_string(seed) + "-" + digest_hex(stamp + ":" + std::to_string(seed)).substr(0, 6);
}

bool RunStore::exists(const std::string& run_id) const {
  return !run_id.empty() && run_id.find('/') == std::string::npos && run_id.find("..") == std::string::npos &&
         fs::exists(run_dir(run_id) / artifact::manifest);
}

std::vector<std::string> RunStore::list() const {
  std::vector<std::string> out;
  if (!fs::is_directory(root_)) return out;
  for (const auto& e : fs::directory_iterator(root_))
    if (e.is_directory() && fs::exists(e.path() / artifact::manifest)) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<std::string> RunStore::latest() const {
  std::optional<std::string> best;
  std::string best_created;
  for (const auto& id : list()) {
    const RunManifest m = load_manifest(id);
    if (!best || m.created_at > best_created || (m.created_at == best_created && id > *best)) {
      best = id;
      best_created = m.created_at;
    }
  }
  return best;
}

RunManifest RunStore::create(const std::string& run_id, const AppConfig& cfg) const {
  if (run_id.empty() || run_id.find('/') != std::string::npos || run_id.find("..") != std::string::npos)
    throw Error(ErrorKind::validation, "invalid run id '" + run_id + "'");
  if (exists(run_id)) return load_manifest(run_id);
  RunManifest m;
  m.run_id = run_id;
  m.seed = cfg.seed;
  m.created_at = utc_timestamp();
  m.config = cfg.to_json();
  for (const auto& s : pipeline_stages()) m.stages[s] = StageStatus::pending;
  fs::create_directories(run_dir(run_id));
  save_manifest(m);
  return m;
}

RunManifest RunStore::load_manifest(const std::string& run_id) const {
  const fs::path p = run_dir(run_id) / artifact::manifest;
  if (!fs::exists(p)) throw Error(ErrorKind::not_found, "run '" + run_id + "' not found");
  const json j = read_json_file(p);
  try {
    return RunManifest::from_json(j);
  } catch (const Error& e) {
    throw LoadError(p.string(), 0, 0, e.what());
  }
}

void RunStore::save_manifest(const RunManifest& m) const {
  write_text_file(run_dir(m.run_id) / artifact::manifest, m.to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Loaders

namespace {

void require_file(const fs::path& run_dir, const char* rel, const char* producer) {
  if (!fs::exists(run_dir / rel))
    throw Error(ErrorKind::precondition, std::string("missing artifact ") + rel + " (run `" + producer + "` first)");
}

template <class T, class F>
std::vector<T> load_records(const fs::path& path, F&& from_json) {
  const auto records = read_jsonl(path);
  std::vector<T> out;
  out.reserve(records.size());
  const std::string text = read_text_file(path);
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      out.push_back(from_json(records[i]));
    } catch (const std::exception& e) {
      // Locate the i-th non-blank line for the error.
      std::size_t line = 0, offset = 0, seen = 0, pos = 0;
      while (pos < text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        ++line;
        if (!trim(std::string_view(text).substr(pos, end - pos)).empty()) {
          if (seen == i) {
            offset = pos;
            break;
          }
          ++seen;
        }
        pos = end + 1;
      }
      throw LoadError(path.string(), line, offset, e.what());
    }
  }
  return out;
}

}  // namespace

GazeTable load_table(const fs::path& run_dir, const char* which) {
  require_file(run_dir, artifact::schema, "ingest");
  require_file(run_dir, which, "ingest");
  const json meta = read_json_file(run_dir / artifact::schema);
  std::vector<Column> schema;
  FieldNames fields;
  try {
    schema = schema_from_json(meta.at("columns"));
    fields = FieldNames::from_json(meta.at("fields"));
  } catch (const std::exception& e) {
    throw LoadError((run_dir / artifact::schema).string(), 0, 0, e.what());
  }
  const fs::path p = run_dir / which;
  return parse_gaze_csv(read_text_file(p), schema, fields, p.string());
}

void save_pattern_set(const fs::path& path, const PatternSet& set) { write_jsonl(path, patterns_to_json(set.patterns)); }

PatternSet load_pattern_set(const fs::path& path) {
  PatternSet s;
  s.patterns = load_records<BehavioralPattern>(path, [](const json& j) { return BehavioralPattern::from_json(j); });
  s.deduped = true;
  const std::string stem = path.stem().string();
  // <stage>_<level>_<model>; level names may contain '_'.
  for (Stage st : {Stage::direct, Stage::horizontal, Stage::vertical, Stage::merged}) {
    for (PromptLevel l : kAllLevels) {
      const std::string prefix = std::string(to_string(st)) + "_" + std::string(to_string(l)) + "_";
      if (stem.rfind(prefix, 0) == 0) {
        s.key = {st, l, stem.substr(prefix.size())};
        return s;
      }
    }
  }
  if (!s.patterns.empty()) s.key = {s.patterns.front().stage, s.patterns.front().level, s.patterns.front().model_id};
  return s;
}

std::vector<PatternSet> load_pattern_sets(const fs::path& run_dir) {
  const fs::path dir = run_dir / artifact::patterns_dir;
  if (!fs::is_directory(dir)) throw Error(ErrorKind::precondition, "missing artifact patterns/ (run `mine` first)");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<PatternSet> out;
  for (const auto& f : files) out.push_back(load_pattern_set(f));
  return out;
}

PatternSet load_composite(const fs::path& run_dir) {
  require_file(run_dir, artifact::composite, "mine");
  PatternSet s = load_pattern_set(run_dir / artifact::composite);
  s.key = {Stage::direct, PromptLevel::detailed, "composite"};
  return s;
}

std::vector<LiteratureEvidence> load_evidence(const fs::path& run_dir) {
  if (!fs::exists(run_dir / artifact::evidence)) return {};
  return load_records<LiteratureEvidence>(run_dir / artifact::evidence,
                                          [](const json& j) { return LiteratureEvidence::from_json(j); });
}

std::map<std::string, PatternScore> load_scores(const fs::path& run_dir) {
  require_file(run_dir, artifact::scores, "score");
  std::map<std::string, PatternScore> out;
  for (auto& s : load_records<PatternScore>(run_dir / artifact::scores,
                                            [](const json& j) { return PatternScore::from_json(j); }))
    out[s.pattern_id] = s;
  return out;
}

VerdictLog load_verdicts(const fs::path& run_dir) {
  if (!fs::exists(run_dir / artifact::verdicts)) return {};
  return VerdictLog(load_records<ReviewVerdict>(run_dir / artifact::verdicts,
                                                [](const json& j) { return ReviewVerdict::from_json(j); }));
}

// ---------------------------------------------------------------------------
// Kappa summary

json KappaSummary::to_json() const {
  json cells_json = json::array();
  for (const auto& c : cells) cells_json.push_back(c.to_json());
  return {{"overall", overall ? overall->to_json() : json(nullptr)},
          {"cells", cells_json},
          {"grid", grid.to_json()},
          {"grid_tsv", grid.render_tsv()},
          {"expert_verdicts", expert_verdicts}};
}

KappaSummary KappaSummary::from_json(const json& j) {
  KappaSummary k;
  if (!j.at("overall").is_null()) k.overall = KappaReport::from_json(j.at("overall"));
  for (const auto& c : j.at("cells")) k.cells.push_back(CellKappa::from_json(c));
  k.grid = ExperimentGrid::from_json(j.at("grid"));
  k.expert_verdicts = j.at("expert_verdicts").get<std::size_t>();
  return k;
}

KappaSummary compute_kappa(const PatternSet& composite, const std::map<std::string, PatternScore>& scores,
                           const VerdictLog& verdicts) {
  KappaSummary k;
  k.overall = overall_kappa(composite, scores, verdicts);
  k.cells = cell_kappas(composite, scores, verdicts);
  k.grid = trust_grid(k.cells);
  for (const auto& v : verdicts.effective())
    if (v.rater == Rater::expert) ++k.expert_verdicts;
  return k;
}

std::vector<ReviewVerdict> simulate_expert(const PatternSet& composite,
                                           const std::map<std::string, PatternScore>& scores, std::uint64_t seed,
                                           double agreement) {
  std::vector<ReviewVerdict> out;
  std::set<std::string> seen;
  for (const auto& p : composite.patterns) {
    if (!seen.insert(p.id).second) continue;
    const auto s = scores.find(p.id);
    if (s == scores.end()) continue;
    Rng rng(mix_seed(seed, "expert:" + p.id));
    const Verdict lit = s->second.literature_verdict;
    const Verdict flipped = lit == Verdict::valid ? Verdict::invalid : Verdict::valid;
    out.push_back({p.id, Rater::expert, rng.bernoulli(agreement) ? lit : flipped, "1970-01-01T00:00:00Z",
                   std::string("simulated")});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(AppConfig cfg, RunStore store, std::string run_id)
    : cfg_(std::move(cfg)), store_(std::move(store)), run_id_(std::move(run_id)), dir_(store_.run_dir(run_id_)) {
  store_.create(run_id_, cfg_);
  log_ = std::make_shared<RunLog>(dir_ / artifact::requests);
}

void Pipeline::mark(const std::string& stage, StageStatus status, const std::string& detail) {
  RunManifest m = store_.load_manifest(run_id_);
  m.stages[stage] = status;
  json h = {{"stage", stage}, {"status", to_string(status)}, {"at", utc_timestamp()}};
  if (!detail.empty()) h["detail"] = detail;
  m.history.push_back(h);
  store_.save_manifest(m);
}

void Pipeline::record_artifact(const std::string& name, const std::string& rel) {
  RunManifest m = store_.load_manifest(run_id_);
  m.artifacts[name] = rel;
  store_.save_manifest(m);
}

template <class F>
auto Pipeline::staged(const std::string& stage, F&& body) {
  mark(stage, StageStatus::running);
  try {
    auto result = body();
    mark(stage, StageStatus::done);
    return result;
  } catch (const std::exception& e) {
    mark(stage, StageStatus::failed, e.what());
    throw;
  }
}

void Pipeline::require(const char* rel, const char* producer) const { require_file(dir_, rel, producer); }

TemplateSet Pipeline::templates() const {
  return cfg_.templates_dir ? TemplateSet::load_dir(*cfg_.templates_dir) : TemplateSet::builtin();
}

std::vector<QuestionItem> Pipeline::questions() const {
  return cfg_.questions ? load_questions(*cfg_.questions) : builtin_questions();
}

std::vector<std::unique_ptr<Gateway>> Pipeline::gateways() const {
  std::vector<std::unique_ptr<Gateway>> out;
  for (ModelSpec spec : cfg_.models) {
    if (cfg_.provider) spec.provider = *cfg_.provider;
    if (spec.provider == "http" && spec.endpoint.empty())
      throw Error(ErrorKind::configuration, "model '" + spec.model_id + "' needs an endpoint for the http provider");
    out.push_back(std::make_unique<Gateway>(spec, make_provider(spec, cfg_.seed), cfg_.retry, log_));
  }
  return out;
}

CleanReport Pipeline::ingest(const fs::path& csv) {
  return staged("ingest", [&] {
    if (!fs::exists(csv)) throw Error(ErrorKind::precondition, "input file '" + csv.string() + "' not found");
    const GazeTable raw = parse_gaze_csv(read_text_file(csv), cfg_.schema, cfg_.fields, csv.string());
    const CleanResult cleaned = clean(raw, cfg_.clean);
    std::vector<AoiDefinition> aois;
    if (cfg_.aois) aois = aoi_definitions_from_json(read_json_file(*cfg_.aois));
    const GazeTable annotated = annotate_aoi(cleaned.table, aois);

    write_text_file(path(artifact::schema),
                    canonical_dump(json{{"columns", schema_to_json(annotated.schema)},
                                        {"fields", fields_to_json(annotated.fields)}}) +
                        "\n");
    write_text_file(path(artifact::clean_table), write_gaze_csv(cleaned.table, '\t'));
    write_text_file(path(artifact::annotated_table), write_gaze_csv(annotated, '\t'));
    write_text_file(path(artifact::clean_report), canonical_dump(cleaned.report.to_json()) + "\n");
    record_artifact("clean_table", artifact::clean_table);
    record_artifact("annotated_table", artifact::annotated_table);
    record_artifact("clean_report", artifact::clean_report);
    return cleaned.report;
  });
}

std::map<std::string, std::size_t> Pipeline::segment() {
  return staged("segment", [&] {
    const GazeTable table = load_table(dir_, artifact::annotated_table);
    const MiningInputs in = mining_inputs(table);
    write_lines(path(artifact::horizontal), in.horizontal);
    write_lines(path(artifact::vertical), in.vertical);
    std::vector<std::string> raw = {in.raw_header};
    raw.insert(raw.end(), in.raw.begin(), in.raw.end());
    write_lines(path(artifact::raw), raw);
    record_artifact("horizontal_payloads", artifact::horizontal);
    record_artifact("vertical_payloads", artifact::vertical);
    record_artifact("raw_payloads", artifact::raw);
    return std::map<std::string, std::size_t>{
        {"horizontal", in.horizontal.size()}, {"vertical", in.vertical.size()}, {"raw", in.raw.size()}};
  });
}

GridResult Pipeline::mine() {
  require(artifact::horizontal, "segment");
  require(artifact::vertical, "segment");
  require(artifact::raw, "segment");
  return staged("mine", [&] {
    MiningInputs in;
    in.horizontal = read_lines(path(artifact::horizontal));
    in.vertical = read_lines(path(artifact::vertical));
    auto raw = read_lines(path(artifact::raw));
    if (raw.empty()) throw Error(ErrorKind::precondition, std::string("artifact ") + artifact::raw + " is empty");
    in.raw_header = raw.front();
    in.raw.assign(raw.begin() + 1, raw.end());

    auto owned = gateways();
    std::vector<Gateway*> gw;
    for (auto& g : owned) gw.push_back(g.get());
    GridResult result = run_mining_grid(in, cfg_.grid, gw, templates(), cfg_.mining, cfg_.seed);

    fs::remove_all(path(artifact::patterns_dir));
    for (const auto& [key, set] : result.cells)
      save_pattern_set(dir_ / artifact::patterns_dir / (key.file_stem() + ".jsonl"), set);
    save_pattern_set(path(artifact::composite), result.composite);
    write_text_file(path(artifact::mining_warnings), canonical_dump(json(result.warnings)) + "\n");
    record_artifact("patterns", artifact::patterns_dir);
    record_artifact("composite", artifact::composite);
    record_artifact("requests", artifact::requests);
    return result;
  });
}

std::map<std::string, PatternScore> Pipeline::score() {
  require(artifact::composite, "mine");
  return staged("score", [&] {
    const PatternSet composite = load_composite(dir_);
    std::map<std::string, std::vector<LiteratureEvidence>> by_pattern;
    for (auto& e : load_evidence(dir_)) by_pattern[e.pattern_id].push_back(std::move(e));

    auto owned = gateways();
    Gateway* gateway = owned.front().get();
    if (!cfg_.evidence_model.empty()) {
      gateway = nullptr;
      for (auto& g : owned)
        if (g->spec().model_id == cfg_.evidence_model) gateway = g.get();
      if (!gateway) throw Error(ErrorKind::configuration, "evidence_model '" + cfg_.evidence_model + "' is not configured");
    }
    const TemplateSet tpl = templates();

    std::vector<json> evidence_records, score_records;
    std::map<std::string, PatternScore> scores;
    std::set<std::string> seen;
    for (const auto& p : composite.patterns) {
      if (!seen.insert(p.id).second) continue;
      auto& ev = by_pattern[p.id];
      if (ev.empty()) ev = request_evidence(p, *gateway, tpl);
      for (const auto& e : ev) evidence_records.push_back(e.to_json());
      PatternScore s = score_pattern(ev, cfg_.weights);
      s.pattern_id = p.id;
      score_records.push_back(s.to_json());
      scores[p.id] = s;
    }
    write_jsonl(path(artifact::evidence), evidence_records);
    write_jsonl(path(artifact::scores), score_records);
    record_artifact("evidence", artifact::evidence);
    record_artifact("scores", artifact::scores);
    return scores;
  });
}

KappaSummary Pipeline::kappa(const std::optional<fs::path>& verdict_file, bool simulate, double agreement) {
  require(artifact::composite, "mine");
  require(artifact::scores, "score");
  const PatternSet composite = load_composite(dir_);
  const auto scores = load_scores(dir_);
  VerdictLog log = load_verdicts(dir_);
  bool changed = false;
  if (verdict_file) {
    if (!fs::exists(*verdict_file))
      throw Error(ErrorKind::precondition, "verdict file '" + verdict_file->string() + "' not found");
    for (const auto& j : read_jsonl(*verdict_file)) changed |= log.submit(ReviewVerdict::from_json(j)) != SubmitOutcome::unchanged;
  }
  if (simulate)
    for (const auto& v : simulate_expert(composite, scores, cfg_.seed, agreement))
      changed |= log.submit(v) != SubmitOutcome::unchanged;
  if (changed) log.save(path(artifact::verdicts));
  const bool any_expert = std::any_of(log.history().begin(), log.history().end(),
                                      [](const ReviewVerdict& v) { return v.rater == Rater::expert; });
  if (!any_expert)
    throw Error(ErrorKind::precondition, std::string("no expert verdicts in ") + artifact::verdicts +
                                             " (supply --verdicts FILE, --simulate-expert, or review via serve)");
  return staged("kappa", [&] {
    KappaSummary k = compute_kappa(composite, scores, log);
    write_text_file(path(artifact::kappa), canonical_dump(k.to_json()) + "\n");
    write_text_file(path(artifact::trust_grid), k.grid.render_tsv());
    record_artifact("verdicts", artifact::verdicts);
    record_artifact("kappa", artifact::kappa);
    record_artifact("trust_grid", artifact::trust_grid);
    return k;
  });
}

AnomalyReport Pipeline::detect() {
  require(artifact::annotated_table, "ingest");
  return staged("detect", [&] {
    const GazeTable table = load_table(dir_, artifact::annotated_table);
    const auto sequences = sessionize(table);
    std::vector<std::string> warnings;
    const auto all = build_windows(sequences, cfg_.windows, &warnings);
    auto experts = windows_of(all, sequences, Expertise::expert);
    auto students = windows_of(all, sequences, Expertise::student);
    if (experts.empty()) throw Error(ErrorKind::precondition, "no expert windows to train on");

    std::vector<std::string> names;
    for (auto n : feature_names()) names.emplace_back(n);
    const Normalizer norm = fit_normalizer(feature_matrices(experts), names);
    normalize_windows(experts, norm);
    normalize_windows(students, norm);

    TrainConfig tc = cfg_.train;
    tc.seed = cfg_.seed;
    LstmModel model = train(feature_matrices(experts), tc);
    model.normalizer = norm;
    model.save(path(artifact::model));

    const double threshold = calibrate_threshold(window_errors(model, experts), cfg_.k);
    const auto qs = questions();
    AnomalyReport report = gazemine::detect(model, threshold, students, cfg_.clean.questions, question_bands(qs), cfg_.k);

    write_text_file(path(artifact::anomalies), canonical_dump(report.summary_json()) + "\n");
    std::vector<json> rows;
    for (const auto& w : report.windows) rows.push_back(w.to_json());
    write_jsonl(path(artifact::anomaly_windows), rows);

    // Semantic reading of the distribution by the first model.
    auto owned = gateways();
    const PromptBundle bundle = summarize_for_llm(report, templates(), {1 << 20, {}});
    const ModelResponse r = owned.front()->complete(bundle.chunks.front());
    std::vector<BehavioralPattern> patterns = parse_patterns(r);
    write_jsonl(path(artifact::anomaly_patterns), patterns_to_json(patterns));

    record_artifact("model", artifact::model);
    record_artifact("anomalies", artifact::anomalies);
    record_artifact("anomaly_windows", artifact::anomaly_windows);
    record_artifact("anomaly_patterns", artifact::anomaly_patterns);
    return report;
  });
}

DifficultyResult Pipeline::predict_difficulty() {
  require(artifact::annotated_table, "ingest");
  return staged("predict-difficulty", [&] {
    const auto items = anonymize(questions(), cfg_.seed, cfg_.lexicon);
    const GazeTable table = load_table(dir_, artifact::annotated_table);
    const GazeArtifacts art = gaze_artifacts(table, items);
    auto owned = gateways();
    std::vector<Gateway*> gw;
    for (auto& g : owned) gw.push_back(g.get());
    DifficultyPromptOptions opts;
    opts.bundle = cfg_.mining.bundle;
    DifficultyResult result = run_and_score(items, difficulty_cells(), gw, templates(), &art, cfg_.repetitions, opts);

    json qs = json::array();
    for (const auto& q : items)
      qs.push_back({{"question_id", q.question_id},
                    {"alias", q.alias},
                    {"level", to_string(q.true_level)},
                    {"anonymized_text", q.anonymized_text}});
    write_text_file(path(artifact::difficulty),
                    canonical_dump(json{{"grid", result.grid.to_json()},
                                        {"grid_tsv", result.grid.render_tsv()},
                                        {"questions", qs},
                                        {"repetitions", cfg_.repetitions}}) +
                        "\n");
    write_text_file(path(artifact::difficulty_grid), result.grid.render_tsv());
    std::vector<json> runs;
    for (const auto& r : result.runs) runs.push_back(r.to_json());
    write_jsonl(path(artifact::difficulty_runs), runs);
    record_artifact("difficulty", artifact::difficulty);
    record_artifact("difficulty_grid", artifact::difficulty_grid);
    record_artifact("difficulty_runs", artifact::difficulty_runs);
    return result;
  });
}

json Pipeline::report() {
  return staged("report", [&] {
    json summary = {{"seed", cfg_.seed}};
    if (fs::exists(path(artifact::clean_report))) summary["clean"] = read_json_file(path(artifact::clean_report));
    if (fs::is_directory(path(artifact::patterns_dir))) {
      json cells = json::object();
      for (const auto& s : load_pattern_sets(dir_)) cells[s.key.file_stem()] = s.patterns.size();
      summary["patterns"] = cells;
    }
    if (fs::exists(path(artifact::composite))) summary["composite"] = load_composite(dir_).patterns.size();
    if (fs::exists(path(artifact::kappa))) {
      const KappaSummary k = KappaSummary::from_json(read_json_file(path(artifact::kappa)));
      write_text_file(path(artifact::trust_grid), k.grid.render_tsv());
      summary["kappa"] = k.overall ? k.overall->to_json() : json(nullptr);
      summary["trust_grid"] = k.grid.render_tsv();
    }
    if (fs::exists(path(artifact::anomalies))) {
      const json a = read_json_file(path(artifact::anomalies));
      summary["anomalies"] = {{"flagged", a.at("aggregates").at("flagged")},
                              {"windows", a.at("aggregates").at("windows")},
                              {"double_zero", a.at("double_zero")},
                              {"threshold", a.at("threshold")}};
    }
    if (fs::exists(path(artifact::difficulty))) {
      const json d = read_json_file(path(artifact::difficulty));
      const ExperimentGrid g = ExperimentGrid::from_json(d.at("grid"));
      write_text_file(path(artifact::difficulty_grid), g.render_tsv());
      summary["difficulty_grid"] = g.render_tsv();
    }
    write_text_file(path(artifact::summary), canonical_dump(summary) + "\n");
    record_artifact("summary", artifact::summary);
    return summary;
  });
}

}  // namespace gazemine

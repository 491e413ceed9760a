#include "gazemine/server.hpp"

#include <algorithm>
#include <set>

#include <httplib.h>

namespace gazemine {

namespace fs = std::filesystem;

int ApiError::http_status() const {
  if (code == "not_found") return 404;
  if (code == "validation") return 400;
  if (code == "conflict") return 409;
  return 500;
}

json ApiError::to_json() const { return {{"error", {{"code", code}, {"message", message}, {"detail", detail}}}}; }

namespace {

[[noreturn]] void fail(const std::string& code, const std::string& message, json detail = json::object()) {
  throw ApiException({code, message, std::move(detail)});
}

}  // namespace

ApiError to_api_error(const std::exception& e) {
  if (const auto* a = dynamic_cast<const ApiException*>(&e)) return a->error();
  if (const auto* l = dynamic_cast<const LoadError*>(&e))
    return {"internal", l->what(), {{"file", l->file()}, {"line", l->line()}, {"byte_offset", l->byte_offset()}}};
  if (const auto* g = dynamic_cast<const Error*>(&e)) {
    switch (g->kind()) {
      case ErrorKind::not_found:
      case ErrorKind::precondition: return {"not_found", g->what(), {{"kind", to_string(g->kind())}}};
      case ErrorKind::validation:
      case ErrorKind::domain:
      case ErrorKind::schema: return {"validation", g->what(), {{"kind", to_string(g->kind())}}};
      default: return {"internal", g->what(), {{"kind", to_string(g->kind())}}};
    }
  }
  if (dynamic_cast<const json::exception*>(&e)) return {"validation", e.what(), json::object()};
  return {"internal", e.what(), json::object()};
}

// ---------------------------------------------------------------------------
// ReviewService

std::shared_mutex& ReviewService::run_mutex(const std::string& run_id) const {
  std::lock_guard lock(map_mu_);
  auto& slot = run_mu_[run_id];
  if (!slot) slot = std::make_unique<std::shared_mutex>();
  return *slot;
}

void ReviewService::require_run(const std::string& run_id) const {
  if (!store_.exists(run_id)) fail("not_found", "run '" + run_id + "' not found", {{"run_id", run_id}});
}

json ReviewService::list_runs() const {
  json out = json::array();
  for (const auto& id : store_.list()) {
    const RunManifest m = store_.load_manifest(id);
    json st = json::object();
    for (const auto& [k, v] : m.stages) st[k] = to_string(v);
    out.push_back({{"run_id", id}, {"seed", m.seed}, {"created_at", m.created_at}, {"stages", st}});
  }
  return {{"runs", out}};
}

json ReviewService::get_run(const std::string& run_id) const {
  require_run(run_id);
  std::shared_lock lock(run_mutex(run_id));
  json out = store_.load_manifest(run_id).to_json();
  const fs::path dir = store_.run_dir(run_id);
  if (fs::exists(dir / artifact::composite)) {
    const PatternSet composite = load_composite(dir);
    const VerdictLog verdicts = load_verdicts(dir);
    std::set<std::string> ids;
    std::size_t reviewed = 0;
    for (const auto& p : composite.patterns)
      if (ids.insert(p.id).second && verdicts.latest(p.id, Rater::expert)) ++reviewed;
    out["review"] = {{"patterns", ids.size()}, {"reviewed", reviewed}, {"pending", ids.size() - reviewed}};
  }
  return out;
}

json ReviewService::queue_item(const std::string& run_id, const BehavioralPattern& p,
                               const std::vector<LiteratureEvidence>& ev,
                               const std::map<std::string, PatternScore>& scores, const VerdictLog& verdicts) const {
  json item = {{"run_id", run_id},
               {"pattern_id", p.id},
               {"text", p.text},
               {"stage", to_string(p.stage)},
               {"level", to_string(p.level)},
               {"level_label", level_label(p.level)},
               {"row", trust_row_label(p.stage, p.level)},
               {"model_id", p.model_id},
               {"model", model_label(p.model_id)},
               {"frequency", p.frequency ? json(to_string(*p.frequency)) : json(nullptr)}};
  const auto s = scores.find(p.id);
  json evidence = json::array();
  for (const auto& e : ev) {
    if (e.pattern_id != p.id) continue;
    json row = e.to_json();
    if (s != scores.end()) row["item_score"] = s->second.item_scores[static_cast<std::size_t>(e.rank - 1)];
    evidence.push_back(row);
  }
  std::sort(evidence.begin(), evidence.end(),
            [](const json& a, const json& b) { return a.at("rank").get<int>() < b.at("rank").get<int>(); });
  item["evidence"] = evidence;
  if (s != scores.end()) {
    item["item_scores"] = s->second.item_scores;
    item["total"] = s->second.total;
    item["literature_verdict"] = to_string(s->second.literature_verdict);
    item["tie"] = s->second.tie;
  } else {
    item["item_scores"] = nullptr;
    item["total"] = nullptr;
    item["literature_verdict"] = nullptr;
    item["tie"] = nullptr;
  }
  const auto expert = verdicts.latest(p.id, Rater::expert);
  item["expert_verdict"] = expert ? expert->to_json() : json(nullptr);
  return item;
}

json ReviewService::run_patterns(const std::string& run_id, const std::string& status) const {
  if (!status.empty() && status != "pending" && status != "reviewed")
    fail("validation", "status must be pending or reviewed", {{"status", status}});
  require_run(run_id);
  std::shared_lock lock(run_mutex(run_id));
  const fs::path dir = store_.run_dir(run_id);
  const PatternSet composite = load_composite(dir);
  const auto evidence = load_evidence(dir);
  const auto scores = fs::exists(dir / artifact::scores) ? load_scores(dir) : std::map<std::string, PatternScore>{};
  const VerdictLog verdicts = load_verdicts(dir);
  json items = json::array();
  std::set<std::string> seen;
  for (const auto& p : composite.patterns) {
    if (!seen.insert(p.id).second) continue;
    const bool reviewed = verdicts.latest(p.id, Rater::expert).has_value();
    if (status == "pending" && reviewed) continue;
    if (status == "reviewed" && !reviewed) continue;
    items.push_back(queue_item(run_id, p, evidence, scores, verdicts));
  }
  return {{"run_id", run_id}, {"status", status.empty() ? "all" : status}, {"patterns", items}};
}

std::string ReviewService::resolve_run(const std::string& pattern_id, const std::optional<std::string>& run_id) const {
  if (run_id) {
    require_run(*run_id);
    return *run_id;
  }
  std::vector<std::string> runs = store_.list();
  const auto latest = store_.latest();
  // Newest first.
  std::sort(runs.begin(), runs.end(), [&](const std::string& a, const std::string& b) {
    if (latest && a == *latest) return b != *latest;
    if (latest && b == *latest) return false;
    return a > b;
  });
  for (const auto& id : runs) {
    const fs::path dir = store_.run_dir(id);
    if (!fs::exists(dir / artifact::composite)) continue;
    std::shared_lock lock(run_mutex(id));
    const PatternSet composite = load_composite(dir);
    if (std::any_of(composite.patterns.begin(), composite.patterns.end(),
                    [&](const BehavioralPattern& p) { return p.id == pattern_id; }))
      return id;
  }
  fail("not_found", "pattern '" + pattern_id + "' not found in any run", {{"pattern_id", pattern_id}});
}

json ReviewService::get_pattern(const std::string& pattern_id, const std::optional<std::string>& run_id) const {
  const std::string id = resolve_run(pattern_id, run_id);
  std::shared_lock lock(run_mutex(id));
  const fs::path dir = store_.run_dir(id);
  const PatternSet composite = load_composite(dir);
  const auto it = std::find_if(composite.patterns.begin(), composite.patterns.end(),
                               [&](const BehavioralPattern& p) { return p.id == pattern_id; });
  if (it == composite.patterns.end())
    fail("not_found", "pattern '" + pattern_id + "' not in run '" + id + "'",
         {{"pattern_id", pattern_id}, {"run_id", id}});
  const auto scores = fs::exists(dir / artifact::scores) ? load_scores(dir) : std::map<std::string, PatternScore>{};
  return queue_item(id, *it, load_evidence(dir), scores, load_verdicts(dir));
}

ReviewService::PostResult ReviewService::post_verdict(const std::string& pattern_id, const json& body,
                                                      const std::optional<std::string>& run_param) {
  if (!body.is_object()) fail("validation", "verdict body must be a JSON object");
  for (const auto& [key, value] : body.items()) {
    if (key != "verdict" && key != "note" && key != "run_id" && key != "expected" && key != "rater")
      fail("validation", "unknown field '" + key + "'", {{"field", key}});
  }
  ReviewVerdict v;
  v.pattern_id = pattern_id;
  v.rater = Rater::expert;
  try {
    if (!body.contains("verdict") || !body["verdict"].is_string()) throw Error(ErrorKind::validation, "missing verdict");
    v.verdict = parse_verdict(body["verdict"].get<std::string>());
    if (body.contains("rater") && parse_rater(body["rater"].get<std::string>()) != Rater::expert)
      throw Error(ErrorKind::validation, "only expert verdicts can be posted");
    if (body.contains("note") && !body["note"].is_null()) v.note = body["note"].get<std::string>();
  } catch (const std::exception& e) {
    fail("validation", std::string("malformed verdict: ") + e.what(), {{"pattern_id", pattern_id}});
  }
  std::optional<std::string> run_id = run_param;
  if (!run_id && body.contains("run_id")) run_id = body["run_id"].get<std::string>();
  const std::string id = resolve_run(pattern_id, run_id);
  const fs::path dir = store_.run_dir(id);

  std::unique_lock lock(run_mutex(id));
  const PatternSet composite = load_composite(dir);
  const auto it = std::find_if(composite.patterns.begin(), composite.patterns.end(),
                               [&](const BehavioralPattern& p) { return p.id == pattern_id; });
  if (it == composite.patterns.end())
    fail("not_found", "pattern '" + pattern_id + "' not in run '" + id + "'",
         {{"pattern_id", pattern_id}, {"run_id", id}});

  VerdictLog log = load_verdicts(dir);
  const auto current = log.latest(pattern_id, Rater::expert);
  if (body.contains("expected") && !body["expected"].is_null()) {
    const std::string expected = body["expected"].get<std::string>();
    const std::string actual = current ? std::string(to_string(current->verdict)) : "none";
    if (expected != actual)
      fail("conflict", "verdict changed on the server",
           {{"expected", expected}, {"current", current ? current->to_json() : json(nullptr)}});
  }
  v.timestamp = utc_timestamp();
  const SubmitOutcome outcome = log.submit(v);
  if (outcome != SubmitOutcome::unchanged) append_text_file(dir / artifact::verdicts, canonical_dump(v.to_json()) + "\n");

  const auto scores = fs::exists(dir / artifact::scores) ? load_scores(dir) : std::map<std::string, PatternScore>{};
  PostResult r;
  r.status = outcome == SubmitOutcome::unchanged ? 200 : 201;
  r.body = {{"outcome", outcome == SubmitOutcome::added      ? "added"
                        : outcome == SubmitOutcome::replaced ? "replaced"
                                                             : "unchanged"},
            {"verdict", log.latest(pattern_id, Rater::expert)->to_json()},
            {"item", queue_item(id, *it, load_evidence(dir), scores, log)}};
  return r;
}

json ReviewService::kappa(const std::string& run_id) const {
  require_run(run_id);
  std::shared_lock lock(run_mutex(run_id));
  const fs::path dir = store_.run_dir(run_id);
  json out = compute_kappa(load_composite(dir), load_scores(dir), load_verdicts(dir)).to_json();
  out["run_id"] = run_id;
  return out;
}

json ReviewService::anomalies(const std::string& run_id) const {
  require_run(run_id);
  const fs::path p = store_.run_dir(run_id) / artifact::anomalies;
  if (!fs::exists(p)) fail("not_found", std::string("run has no ") + artifact::anomalies, {{"run_id", run_id}});
  return read_json_file(p);
}

json ReviewService::difficulty(const std::string& run_id) const {
  require_run(run_id);
  const fs::path p = store_.run_dir(run_id) / artifact::difficulty;
  if (!fs::exists(p)) fail("not_found", std::string("run has no ") + artifact::difficulty, {{"run_id", run_id}});
  return read_json_file(p);
}

// ---------------------------------------------------------------------------
// HttpServer

struct HttpServer::Impl {
  explicit Impl(RunStore store) : service(std::move(store)) {}
  ReviewService service;
  httplib::Server http;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const std::exception& e) {
      const ApiError err = to_api_error(e);
      send_json(res, err.http_status(), err.to_json());
    }
  };
}

std::optional<std::string> query(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return req.get_param_value(key);
}

}  // namespace

HttpServer::HttpServer(RunStore store, fs::path ui_dir) : impl_(std::make_unique<Impl>(std::move(store))) {
  auto& http = impl_->http;
  auto& svc = impl_->service;
  if (!ui_dir.empty() && fs::is_directory(ui_dir)) http.set_mount_point("/", ui_dir.string());

  http.Get("/runs", guarded([&svc](const httplib::Request&, httplib::Response& res) {
             send_json(res, 200, svc.list_runs());
           }));
  http.Get(R"(/runs/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 200, svc.get_run(req.matches[1]));
           }));
  http.Get(R"(/runs/([^/]+)/patterns)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 200, svc.run_patterns(req.matches[1], query(req, "status").value_or("")));
           }));
  http.Get(R"(/runs/([^/]+)/reports/kappa)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 200, svc.kappa(req.matches[1]));
           }));
  http.Get(R"(/runs/([^/]+)/reports/anomalies)",
           guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 200, svc.anomalies(req.matches[1]));
           }));
  http.Get(R"(/runs/([^/]+)/reports/difficulty)",
           guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 200, svc.difficulty(req.matches[1]));
           }));
  http.Get(R"(/patterns/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 200, svc.get_pattern(req.matches[1], query(req, "run")));
           }));
  http.Post(R"(/patterns/([^/]+)/verdict)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
              json body;
              try {
                body = json::parse(req.body);
              } catch (const json::exception& e) {
                fail("validation", std::string("body is not JSON: ") + e.what());
              }
              const auto r = svc.post_verdict(req.matches[1], body, query(req, "run"));
              send_json(res, r.status, r.body);
            }));
  http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const ApiError err = res.status == 404 ? ApiError{"not_found", "no route for " + req.path, json::object()}
                                           : ApiError{"internal", "request failed", {{"status", res.status}}};
    res.set_content(err.to_json().dump(), "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->http.bind_to_any_port(host);
    if (p < 0) throw Error(ErrorKind::configuration, "cannot bind " + host);
    return p;
  }
  if (!impl_->http.bind_to_port(host, port))
    throw Error(ErrorKind::configuration, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->http.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

void HttpServer::wait_until_ready() const { impl_->http.wait_until_ready(); }

ReviewService& HttpServer::service() { return impl_->service; }

}  // namespace gazemine

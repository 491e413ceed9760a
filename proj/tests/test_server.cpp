#include <catch_amalgamated.hpp>

#include <thread>

#include "gazemine/server.hpp"
#include "pipeline_fixture.hpp"
#include "support.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that breaks Eigen's headers.
#include <httplib.h>

using namespace gazemine;
using gazemine::testing::TempDir;
namespace fs = std::filesystem;

namespace {

// A scored run in a fresh store, served on a free port.
class ServedRun {
 public:
  ServedRun() : dir_("server") {
    gazemine::testing::write_synthetic(dir_.path(), 4, 2, 1);
    AppConfig cfg = gazemine::testing::small_config(dir_ / "runs", 4);
    cfg.grid.levels = {PromptLevel::brief};
    cfg.aois = dir_ / "aois.json";
    Pipeline p(cfg, RunStore(cfg.store), "run1");
    p.ingest(dir_ / "gaze.csv");
    p.segment();
    p.mine();
    p.score();
    for (const auto& pat : load_composite(p.dir()).patterns)
      if (std::find(ids_.begin(), ids_.end(), pat.id) == ids_.end()) ids_.push_back(pat.id);

    write_text_file(dir_ / "ui/index.html", "<html>review</html>");
    server_ = std::make_unique<HttpServer>(RunStore(dir_ / "runs"), dir_ / "ui");
    port_ = server_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_->listen(); });
    server_->wait_until_ready();
  }
  ~ServedRun() {
    server_->stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(10, 0);
    return c;
  }
  fs::path run_dir() const { return dir_ / "runs/run1"; }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  TempDir dir_;
  std::vector<std::string> ids_;
  std::unique_ptr<HttpServer> server_;
  int port_ = 0;
  std::thread thread_;
};

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

httplib::Result post(httplib::Client& c, const std::string& pattern, const json& body) {
  return c.Post("/patterns/" + pattern + "/verdict", body.dump(), "application/json");
}

}  // namespace

TEST_CASE("API errors map onto HTTP statuses", "[server]") {
  CHECK(ApiError{"not_found", "", {}}.http_status() == 404);
  CHECK(ApiError{"validation", "", {}}.http_status() == 400);
  CHECK(ApiError{"conflict", "", {}}.http_status() == 409);
  CHECK(ApiError{"internal", "", {}}.http_status() == 500);
  CHECK(to_api_error(Error(ErrorKind::not_found, "x")).code == "not_found");
  CHECK(to_api_error(Error(ErrorKind::precondition, "x")).code == "not_found");
  CHECK(to_api_error(Error(ErrorKind::validation, "x")).code == "validation");
  CHECK(to_api_error(Error(ErrorKind::training, "x")).code == "internal");
  const ApiError located = to_api_error(LoadError("f.jsonl", 3, 40, "bad"));
  CHECK(located.code == "internal");
  CHECK(located.detail.at("line") == 3);
  CHECK(located.detail.at("byte_offset") == 40);
  const json wire = ApiError{"conflict", "m", {{"a", 1}}}.to_json();
  CHECK(wire == json{{"error", {{"code", "conflict"}, {"message", "m"}, {"detail", {{"a", 1}}}}}});
}

TEST_CASE("review API over HTTP", "[server]") {
  ServedRun served;
  auto c = served.client();
  REQUIRE(served.ids().size() >= 3);
  const std::string p0 = served.ids()[0];

  SECTION("runs and queue") {
    const json runs = body_of(c.Get("/runs"));
    REQUIRE(runs.at("runs").size() == 1);
    CHECK(runs["runs"][0].at("run_id") == "run1");
    const json run = body_of(c.Get("/runs/run1"));
    CHECK(run.at("review").at("pending") == served.ids().size());

    const auto r = c.Get("/runs/run1/patterns?status=pending");
    REQUIRE(r);
    CHECK(r->status == 200);
    const json q = json::parse(r->body);
    REQUIRE(q.at("patterns").size() == served.ids().size());
    const json& item = q["patterns"][0];
    for (const char* key : {"pattern_id", "text", "row", "model", "evidence", "item_scores", "total",
                            "literature_verdict", "expert_verdict"})
      CHECK(item.contains(key));
    CHECK(item.at("evidence").size() == 5);
    CHECK(item.at("expert_verdict").is_null());

    const auto ui = c.Get("/index.html");
    REQUIRE(ui);
    CHECK(ui->body == "<html>review</html>");

    const json single = body_of(c.Get("/patterns/" + p0));
    CHECK(single.at("pattern_id") == p0);
    CHECK(single.at("run_id") == "run1");
  }

  SECTION("errors") {
    auto missing = c.Get("/runs/nope");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(json::parse(missing->body).at("error").at("code") == "not_found");

    auto bad_status = c.Get("/runs/run1/patterns?status=maybe");
    CHECK(bad_status->status == 400);
    CHECK(json::parse(bad_status->body)["error"]["code"] == "validation");

    auto no_route = c.Get("/nowhere/at/all");
    CHECK(no_route->status == 404);
    CHECK(json::parse(no_route->body)["error"]["code"] == "not_found");

    CHECK(c.Get("/patterns/ffffffffffffffff")->status == 404);
    CHECK(c.Get("/runs/run1/reports/anomalies")->status == 404);
    CHECK(post(c, "ffffffffffffffff", {{"verdict", "valid"}})->status == 404);

    auto not_json = c.Post("/patterns/" + p0 + "/verdict", "{oops", "application/json");
    CHECK(not_json->status == 400);
    CHECK(post(c, p0, {{"verdict", "perhaps"}})->status == 400);
    CHECK(post(c, p0, {{"verdict", "valid"}, {"colour", "red"}})->status == 400);
    CHECK(post(c, p0, {{"verdict", "valid"}, {"rater", "literature"}})->status == 400);
    CHECK(post(c, p0, json::array())->status == 400);
    CHECK_FALSE(fs::exists(served.run_dir() / artifact::verdicts));
  }

  SECTION("verdicts are idempotent and append-only") {
    auto first = post(c, p0, {{"verdict", "valid"}, {"note", "clear"}});
    REQUIRE(first);
    CHECK(first->status == 201);
    CHECK(json::parse(first->body).at("outcome") == "added");

    auto repeat = post(c, p0, {{"verdict", "valid"}, {"note", "clear"}});
    CHECK(repeat->status == 200);
    CHECK(json::parse(repeat->body).at("outcome") == "unchanged");

    auto conflict = post(c, p0, {{"verdict", "invalid"}, {"expected", "invalid"}});
    CHECK(conflict->status == 409);
    CHECK(json::parse(conflict->body)["error"]["code"] == "conflict");

    auto change = post(c, p0, {{"verdict", "invalid"}, {"expected", "valid"}});
    CHECK(change->status == 201);
    CHECK(json::parse(change->body).at("outcome") == "replaced");

    const auto lines = read_lines(served.run_dir() / artifact::verdicts);
    REQUIRE(lines.size() == 2);
    CHECK(json::parse(lines[0]).at("verdict") == "valid");
    CHECK(json::parse(lines[1]).at("verdict") == "invalid");

    const json item = body_of(c.Get("/patterns/" + p0 + "?run=run1"));
    CHECK(item.at("expert_verdict").at("verdict") == "invalid");
    const json reviewed = body_of(c.Get("/runs/run1/patterns?status=reviewed"));
    CHECK(reviewed.at("patterns").size() == 1);

    const json k = body_of(c.Get("/runs/run1/reports/kappa"));
    CHECK(k.at("expert_verdicts") == 1);
    CHECK(k.at("grid").at("rows").size() == 10);
  }

  SECTION("concurrent posts to distinct patterns all persist") {
    const std::size_t n = std::min<std::size_t>(served.ids().size(), 8);
    std::vector<std::thread> threads;
    std::vector<int> status(n, 0);
    for (std::size_t i = 0; i < n; ++i)
      threads.emplace_back([&, i] {
        auto cl = served.client();
        const auto r = post(cl, served.ids()[i], {{"verdict", i % 2 ? "valid" : "invalid"}});
        status[i] = r ? r->status : -1;
      });
    for (auto& t : threads) t.join();
    for (int s : status) CHECK(s == 201);
    const VerdictLog log = load_verdicts(served.run_dir());
    CHECK(log.history().size() == n);
    for (std::size_t i = 0; i < n; ++i) CHECK(log.latest(served.ids()[i], Rater::expert));
  }

  SECTION("corrupt verdict file surfaces as a located internal error") {
    write_text_file(served.run_dir() / artifact::verdicts, "{\"pattern_id\": 1}\n");
    auto r = c.Get("/runs/run1/patterns");
    REQUIRE(r);
    CHECK(r->status == 500);
    const json e = json::parse(r->body).at("error");
    CHECK(e.at("code") == "internal");
    CHECK(e.at("detail").at("line") == 1);
  }
}

TEST_CASE("review service works without HTTP", "[server]") {
  TempDir dir("svc");
  ReviewService svc{RunStore(dir.path())};
  CHECK(svc.list_runs().at("runs").empty());
  try {
    svc.get_run("missing");
    FAIL("expected not_found");
  } catch (const ApiException& e) {
    CHECK(e.error().code == "not_found");
  }
  CHECK_THROWS_AS(svc.post_verdict("p", json{{"verdict", "valid"}}, std::nullopt), ApiException);
}

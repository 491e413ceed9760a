#include "gazemine/llm_gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>
#include <thread>

#include <httplib.h>

#include "gazemine/rng.hpp"

namespace gazemine {

json ModelSpec::to_json() const {
  return {{"model_id", model_id},       {"provider", provider},       {"endpoint", endpoint},
          {"model", model_name},        {"api_key_env", api_key_env}, {"temperature", temperature},
          {"max_tokens", max_tokens},   {"max_in_flight", max_in_flight}, {"timeout_s", timeout_s}};
}

ModelSpec ModelSpec::from_json(const json& j) {
  ModelSpec s;
  s.model_id = j.at("model_id").get<std::string>();
  // Keys come from the environment only; a config file never holds one.
  if (j.contains("api_key"))
    throw Error(ErrorKind::configuration, "model '" + s.model_id + "': put the key in an environment variable and name it in api_key_env");
  s.provider = j.value("provider", std::string("mock"));
  s.endpoint = j.value("endpoint", std::string());
  s.model_name = j.value("model", s.model_id);
  s.api_key_env = j.value("api_key_env", std::string());
  s.temperature = j.value("temperature", s.temperature);
  s.max_tokens = j.value("max_tokens", s.max_tokens);
  s.max_in_flight = std::clamp(j.value("max_in_flight", s.max_in_flight), 1, 64);
  s.timeout_s = j.value("timeout_s", s.timeout_s);
  if (s.provider != "mock" && s.provider != "http")
    throw Error(ErrorKind::configuration, "model '" + s.model_id + "': unknown provider '" + s.provider + "'");
  if (s.provider == "http" && s.endpoint.empty())
    throw Error(ErrorKind::configuration, "model '" + s.model_id + "' needs an endpoint");
  return s;
}

std::vector<ModelSpec> default_model_specs() {
  std::vector<ModelSpec> specs;
  for (const char* id : {"gpt4o", "o1", "r1"}) {
    ModelSpec s;
    s.model_id = id;
    s.model_name = id;
    specs.push_back(s);
  }
  return specs;
}

std::string model_label(const std::string& model_id) {
  if (model_id == "gpt4o" || model_id == "gpt-4o") return "4o";
  return model_id;
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorKind::configuration, "endpoint '" + url + "' is not an absolute URL");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport : public HttpTransport {
 public:
  HttpResult post(const std::string& url, const std::string& body,
                  const std::vector<std::pair<std::string, std::string>>& headers,
                  double timeout_s) override {
    const ParsedUrl u = split_url(url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (u.scheme_host_port.rfind("https://", 0) == 0)
      throw Error(ErrorKind::configuration, "https endpoints need a build with OpenSSL");
#endif
    httplib::Client cli(u.scheme_host_port);
    const auto secs = static_cast<time_t>(timeout_s);
    cli.set_connection_timeout(std::min<time_t>(secs, 10), 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(secs, 0);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = cli.Post(u.path, h, body, "application/json");
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
  }
};

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

json ChatCompletionProvider::request_body(const std::string& prompt, const ModelSpec& spec) {
  return {{"model", spec.model_name.empty() ? spec.model_id : spec.model_name},
          {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
          {"temperature", spec.temperature},
          {"max_tokens", spec.max_tokens}};
}

std::string ChatCompletionProvider::response_text(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    throw Error(ErrorKind::content, "provider returned a non-JSON body");
  }
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::content, "provider response has no choices[0].message.content");
  }
}

std::string ChatCompletionProvider::complete(const std::string& prompt, const ModelSpec& spec, int) {
  std::vector<std::pair<std::string, std::string>> headers;
  if (!spec.api_key_env.empty()) {
    const char* key = std::getenv(spec.api_key_env.c_str());
    if (key == nullptr || *key == '\0')
      throw Error(ErrorKind::configuration,
                  "model '" + spec.model_id + "': environment variable " + spec.api_key_env + " is not set");
    headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }
  const HttpResult res =
      transport_->post(spec.endpoint, request_body(prompt, spec).dump(), headers, spec.timeout_s);
  if (res.status == 0) throw TransportError("request to " + spec.endpoint + " failed: " + res.error, 0);
  if (res.status == 429 || res.status >= 500)
    throw TransportError("provider returned HTTP " + std::to_string(res.status), res.status);
  if (res.status == 401 || res.status == 403)
    throw Error(ErrorKind::configuration,
                "provider rejected credentials (HTTP " + std::to_string(res.status) + ")");
  if (res.status < 200 || res.status >= 300)
    throw Error(ErrorKind::content, "provider returned HTTP " + std::to_string(res.status) + ": " +
                                        res.body.substr(0, 200));
  return response_text(res.body);
}

// ---------------------------------------------------------------------------
// Mock

namespace {

const std::vector<std::string>& subjects() {
  static const std::vector<std::string> v = {
      "Drivers", "Navigators", "Students", "Experts", "Participants on hard questions",
      "Participants early in a question"};
  return v;
}

const std::vector<std::string>& behaviors() {
  static const std::vector<std::string> v = {
      "revisit the problem area in short bursts",
      "hold longer fixations before each saccade",
      "alternate between the question stem and the code",
      "make rapid saccades with little dwell time",
      "settle into a steady left-to-right scan",
      "return to the first lines of the code repeatedly"};
  return v;
}

const std::vector<std::string>& contexts() {
  static const std::vector<std::string> v = {
      "after an incorrect attempt", "when the defect is near the bottom of the screen",
      "during the final third of a question", "while the partner is typing",
      "on questions with nested loops", "once the error region has been located"};
  return v;
}

std::vector<std::string> find_aliases(const std::string& prompt) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (std::size_t pos = prompt.find("Q-"); pos != std::string::npos; pos = prompt.find("Q-", pos + 2)) {
    if (pos + 6 > prompt.size()) break;
    if (pos > 0 && std::isalnum(static_cast<unsigned char>(prompt[pos - 1]))) continue;
    const std::string alias = prompt.substr(pos, 6);
    bool hex = true;
    for (std::size_t i = 2; i < 6; ++i)
      hex = hex && std::isxdigit(static_cast<unsigned char>(alias[i])) &&
            !std::isupper(static_cast<unsigned char>(alias[i]));
    if (pos + 6 < prompt.size() && std::isalnum(static_cast<unsigned char>(prompt[pos + 6]))) hex = false;
    if (hex && seen.insert(alias).second) out.push_back(alias);
  }
  return out;
}

}  // namespace

const std::vector<std::string>& MockProvider::vocabulary() {
  static const std::vector<std::string> v = {
      "Experts fixate on the error region earlier than students",
      "Students spend more time on the question stem than on the problem area",
      "Navigators show longer fixation durations than drivers",
      "Drivers produce more saccades per question than navigators",
      "Fixation duration rises on harder questions",
      "Saccade duration shortens once the error region is located",
      "Students alternate between stem and problem area more often than experts",
      "Experts show fewer but longer fixations on the problem area",
      "Long fixations cluster at the start of each question",
      "Gaze drifts back to the question stem after a long fixation on code",
      "Short saccades dominate when participants trace control flow",
      "Students show irregular fixation durations on medium questions",
      "Experts keep a stable saccade rhythm across questions",
      "Fixation counts on the error region predict correct answers",
      "Attention to the error region decreases late in the session",
      "Navigators scan the whole screen more broadly than drivers",
      "Students revisit the same code lines repeatedly",
      "Experts quickly skip the question stem after the first read",
      "Saccade duration increases when participants are uncertain",
      "Gaze dispersion is higher for students than for experts",
      "Fixation duration on the problem area is higher for experts",
      "Participants fixate longer on the error region in hard questions",
      "Rapid stem-to-code switching signals high cognitive load",
      "Drivers focus on the lines currently being edited",
      "Students show more anomalous pauses than experts",
      "Experts exhibit systematic top-down reading of the code",
      "Fixation duration decreases as participants gain familiarity with a question",
      "Saccade counts spike right before an answer is submitted",
      "Students' attention is split evenly between stem and code",
      "Experts concentrate attention on a small number of code regions",
      "Navigators fixate on the error region before drivers do",
      "Long saccades indicate searching behavior on unfamiliar code",
      "Students show declining fixation durations over the session, suggesting fatigue",
      "Horizontal gaze position shifts right as the defect is approached",
      "Vertical gaze movement is larger for students than experts",
      "Fixation durations vary more on easy questions for students",
  };
  return v;
}

std::uint64_t mock_seed(std::uint64_t run_seed, const std::string& model_id) {
  return mix_seed(run_seed, model_id);
}

std::string MockProvider::complete(const std::string& prompt, const ModelSpec&, int run_index) {
  const std::string digest = digest_hex(prompt);
  if (auto it = scripted_.find(digest); it != scripted_.end()) return it->second;
  if (responder_) {
    if (auto r = responder_(prompt, run_index)) return *r;
  }

  Rng rng(mix_seed(mix_seed(seed_, digest), static_cast<std::uint64_t>(run_index)));

  if (prompt.find("`Qid: level`") != std::string::npos) {
    static const char* kLevels[] = {"easy", "medium", "hard"};
    std::string out;
    for (const auto& alias : find_aliases(prompt)) out += alias + ": " + kLevels[rng.below(3)] + "\n";
    return out;
  }

  if (prompt.find("evidence records") != std::string::npos) {
    std::string out;
    for (int rank = 1; rank <= 5; ++rank) {
      const double u = rng.uniform();
      const char* stance = u < 0.55 ? "support" : (u < 0.75 ? "neutral" : "oppose");
      json rec = {{"rank", rank},
                  {"quartile", "Q" + std::to_string(1 + rng.below(4))},
                  {"stance", stance},
                  {"title", "Reference " + std::to_string(rank) + " on gaze behaviour"}};
      out += canonical_dump(rec) + "\n";
    }
    return out;
  }

  const auto& vocab = vocabulary();
  const auto k = static_cast<std::size_t>(rng.between(3, 8));
  std::vector<std::string> items;
  std::set<std::string> seen;
  while (items.size() < k) {
    std::string s;
    if (rng.bernoulli(0.25)) {
      s = subjects()[rng.below(subjects().size())] + " " + behaviors()[rng.below(behaviors().size())] +
          " " + contexts()[rng.below(contexts().size())];
    } else {
      s = vocab[rng.below(vocab.size())];
    }
    if (seen.insert(s).second) items.push_back(std::move(s));
  }
  std::string out = "Behavioral patterns:\n";
  for (std::size_t i = 0; i < items.size(); ++i)
    out += std::to_string(i + 1) + ". " + items[i] + ".\n";
  return out;
}

std::shared_ptr<Provider> make_provider(const ModelSpec& spec, std::uint64_t run_seed) {
  if (spec.is_mock()) return std::make_shared<MockProvider>(mock_seed(run_seed, spec.model_id));
  return std::make_shared<ChatCompletionProvider>(make_http_transport());
}

// ---------------------------------------------------------------------------
// Gateway

std::string RunLog::line(const ModelResponse& r) {
  json j = {{"digest", r.digest},       {"model_id", r.model_id},
            {"run_index", r.run_index}, {"chunk_index", r.chunk_index},
            {"latency_ms", r.latency_ms}, {"status", "ok"}};
  return canonical_dump(j) + "\n";
}

std::string RunLog::failure_line(const std::string& model_id, const std::string& digest,
                                 int run_index, int chunk_index, const Error& e) {
  json j = {{"digest", digest},       {"model_id", model_id},
            {"run_index", run_index}, {"chunk_index", chunk_index},
            {"status", "error"},      {"error_kind", to_string(e.kind())},
            {"error", e.what()}};
  return canonical_dump(j) + "\n";
}

void RunLog::append(const std::string& lines) {
  std::lock_guard lock(mu_);
  append_text_file(path_, lines);
}

void RunLog::record(const ModelResponse& r) { append(line(r)); }

void RunLog::record_failure(const std::string& model_id, const std::string& digest, int run_index,
                            int chunk_index, const Error& e) {
  append(failure_line(model_id, digest, run_index, chunk_index, e));
}

Gateway::Gateway(ModelSpec spec, std::shared_ptr<Provider> provider, RetryPolicy retry,
                 std::shared_ptr<RunLog> log)
    : spec_(std::move(spec)),
      provider_(std::move(provider)),
      retry_(retry),
      log_(std::move(log)),
      in_flight_(std::clamp(spec_.max_in_flight, 1, 64)) {
  if (!provider_) throw Error(ErrorKind::configuration, "gateway needs a provider");
}

ModelResponse Gateway::complete(const std::string& prompt, int run_index, int chunk_index) {
  ModelResponse r;
  r.model_id = spec_.model_id;
  r.digest = digest_hex(prompt);
  r.run_index = run_index;
  r.chunk_index = chunk_index;

  auto delay = retry_.base_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<64>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      ++attempts_;
      const auto start = std::chrono::steady_clock::now();
      r.text = provider_->complete(prompt, spec_, run_index);
      if (provider_->reports_latency()) {
        r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      }
      return r;
    } catch (const TransportError& e) {
      if (attempt >= retry_.max_attempts) {
        throw TransportError("gave up after " + std::to_string(attempt) + " attempts: " + e.what(),
                             e.status());
      }
    }
    std::this_thread::sleep_for(delay);
    delay = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(delay.count()) * retry_.factor));
  }
}

RepeatedResult Gateway::run_repeated(const PromptBundle& bundle, int n) {
  return run_repeated(bundle.chunks, n);
}

RepeatedResult Gateway::run_repeated(const std::vector<std::string>& prompts, int n) {
  if (n < 1) throw Error(ErrorKind::validation, "repetition count must be at least 1");
  const std::size_t chunks = prompts.size();
  const std::size_t total = chunks * static_cast<std::size_t>(n);

  struct Slot {
    std::optional<ModelResponse> response;
    std::optional<RunFailure> failure;
    std::optional<Error> error;
  };
  std::vector<Slot> slots(total);

  auto work = [&](std::size_t task) {
    const int run = static_cast<int>(task / chunks);
    const int chunk = static_cast<int>(task % chunks);
    try {
      slots[task].response = complete(prompts[static_cast<std::size_t>(chunk)], run, chunk);
    } catch (const Error& e) {
      slots[task].failure = RunFailure{run, chunk, e.kind(), e.what()};
      slots[task].error = e;
    }
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(spec_.max_in_flight), total);
  if (workers <= 1 || spec_.is_mock()) {
    for (std::size_t t = 0; t < total; ++t) work(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < total; t = next++) work(t);
      });
    }
  }

  RepeatedResult out;
  std::string log_lines;
  for (std::size_t t = 0; t < total; ++t) {
    auto& s = slots[t];
    if (s.response) {
      if (log_) log_lines += RunLog::line(*s.response);
      out.responses.push_back(std::move(*s.response));
    } else {
      if (log_) {
        log_lines += RunLog::failure_line(spec_.model_id, digest_hex(prompts[t % chunks]),
                                          s.failure->run_index, s.failure->chunk_index, *s.error);
      }
      out.failures.push_back(std::move(*s.failure));
    }
  }
  if (log_ && !log_lines.empty()) log_->append(log_lines);
  if (out.responses.empty()) {
    std::string msg = "all " + std::to_string(total) + " requests to '" + spec_.model_id + "' failed";
    if (!out.failures.empty()) msg += "; last error: " + out.failures.back().message;
    throw Error(ErrorKind::aggregate, msg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Response parsing

namespace {

// Returns the statement after an enumeration marker, or npos when the line is
// not an enumerated item.
std::size_t statement_start(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  if (i >= line.size()) return std::string_view::npos;
  std::size_t j = i;
  if (line[j] == '-' || line[j] == '*' || line[j] == '+') {
    ++j;
  } else if (line.substr(j, 3) == "\xE2\x80\xA2") {
    j += 3;
  } else {
    const std::size_t digits = j;
    while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
    if (j == digits || j >= line.size() || (line[j] != '.' && line[j] != ')')) return std::string_view::npos;
    ++j;
  }
  if (j >= line.size() || (line[j] != ' ' && line[j] != '\t')) return std::string_view::npos;
  while (j < line.size() && (line[j] == ' ' || line[j] == '\t')) ++j;
  return j < line.size() ? j : std::string_view::npos;
}

}  // namespace

std::vector<BehavioralPattern> parse_patterns(const ModelResponse& response,
                                              std::vector<std::string>* warnings) {
  std::vector<BehavioralPattern> out;
  auto add = [&](std::string text) {
    BehavioralPattern p;
    p.id = pattern_id(text);
    p.text = std::move(text);
    p.model_id = response.model_id;
    p.run_index = response.run_index;
    out.push_back(std::move(p));
  };

  const std::string trimmed = trim(response.text);
  if (!trimmed.empty() && trimmed.front() == '[') {
    try {
      const json arr = json::parse(trimmed);
      for (const auto& item : arr) {
        if (!item.is_string()) continue;
        std::string s = trim(item.get<std::string>());
        if (!s.empty() && response.text.find(s) != std::string::npos) add(std::move(s));
      }
      if (!out.empty()) return out;
    } catch (const json::exception&) {
      // fall through to line parsing
    }
  }

  std::string_view text = response.text;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    const std::size_t start = statement_start(line);
    if (start != std::string_view::npos) {
      std::string s = trim(line.substr(start));
      if (!s.empty()) add(std::move(s));
    }
    pos = end + 1;
  }
  if (out.empty() && warnings) {
    warnings->push_back("no patterns parsed from response " + response.digest + " (run " +
                        std::to_string(response.run_index) + ")");
  }
  return out;
}

}  // namespace gazemine

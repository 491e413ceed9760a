#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "gazemine/common.hpp"
#include "gazemine/json_io.hpp"
#include "gazemine/pattern.hpp"
#include "gazemine/segmentation.hpp"

namespace gazemine {

/// One configured model. `provider` is "mock" (deterministic, offline) or
/// "http" (OpenAI-style chat-completion endpoint).
struct ModelSpec {
  std::string model_id;  // gpt4o, o1, r1 or mock
  std::string provider = "mock";
  std::string endpoint;     // full URL of the chat-completions route
  std::string model_name;   // model name sent on the wire
  std::string api_key_env;  // environment variable holding the key
  double temperature = 0.7;
  int max_tokens = 2048;
  int max_in_flight = 2;
  double timeout_s = 120.0;

  bool is_mock() const { return provider == "mock"; }
  json to_json() const;
  static ModelSpec from_json(const json& j);
};

/// The three models of the evaluation grid, offline by default.
std::vector<ModelSpec> default_model_specs();

/// Column label used in report grids ("4o", "o1", "r1").
std::string model_label(const std::string& model_id);

struct ModelResponse {
  std::string model_id;
  std::string digest;  // digest of the prompt text
  std::string text;
  double latency_ms = 0.0;
  int run_index = 0;
  int chunk_index = 0;
};

/// Retryable provider failure (connection error, 429, 5xx).
class TransportError : public Error {
 public:
  TransportError(const std::string& message, int status)
      : Error(ErrorKind::transport, message), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class Provider {
 public:
  virtual ~Provider() = default;
  /// Returns the completion text. Throws TransportError for transient
  /// failures and Error(content|configuration) for permanent ones.
  virtual std::string complete(const std::string& prompt, const ModelSpec& spec, int run_index) = 0;
  virtual bool reports_latency() const { return true; }
};

struct HttpResult {
  int status = 0;  // 0: no HTTP response at all
  std::string body;
  std::string error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post(const std::string& url, const std::string& body,
                          const std::vector<std::pair<std::string, std::string>>& headers,
                          double timeout_s) = 0;
};

/// cpp-httplib backed transport. https URLs need OpenSSL support compiled in.
std::shared_ptr<HttpTransport> make_http_transport();

/// Chat-completion provider speaking the common request/response shape:
/// {"model", "messages":[{"role":"user","content":...}], "temperature",
/// "max_tokens"} -> choices[0].message.content.
class ChatCompletionProvider : public Provider {
 public:
  explicit ChatCompletionProvider(std::shared_ptr<HttpTransport> transport)
      : transport_(std::move(transport)) {}
  std::string complete(const std::string& prompt, const ModelSpec& spec, int run_index) override;

  static json request_body(const std::string& prompt, const ModelSpec& spec);
  static std::string response_text(const std::string& body);

 private:
  std::shared_ptr<HttpTransport> transport_;
};

/// Offline provider. Output is a pure function of (prompt digest, run index,
/// seed). Scripted entries (prompt digest -> text) take precedence; otherwise
/// the answer is generated:
///   - prompts asking for "`Qid: level`" lines get one random level per
///     question alias (Q-xxxx) found in the prompt;
///   - prompts asking for "evidence records" get 5 JSON evidence lines;
///   - everything else gets a numbered list of 3-8 statements drawn from a
///     fixed vocabulary, some of them specific to this seed.
class MockProvider : public Provider {
 public:
  using Responder = std::function<std::optional<std::string>(const std::string& prompt, int run_index)>;

  explicit MockProvider(std::uint64_t seed) : seed_(seed) {}

  void script(const std::string& prompt_digest, std::string text) { scripted_[prompt_digest] = std::move(text); }
  void set_responder(Responder r) { responder_ = std::move(r); }

  std::string complete(const std::string& prompt, const ModelSpec& spec, int run_index) override;
  bool reports_latency() const override { return false; }

  static const std::vector<std::string>& vocabulary();

 private:
  std::uint64_t seed_;
  std::map<std::string, std::string> scripted_;
  Responder responder_;
};

/// Seed of a model's mock provider under a run seed.
std::uint64_t mock_seed(std::uint64_t run_seed, const std::string& model_id);

std::shared_ptr<Provider> make_provider(const ModelSpec& spec, std::uint64_t run_seed);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
  double factor = 2.0;
};

/// Append-only request log (.jsonl), one record per request.
class RunLog {
 public:
  explicit RunLog(std::filesystem::path path) : path_(std::move(path)) {}
  void record(const ModelResponse& r);
  void record_failure(const std::string& model_id, const std::string& digest, int run_index,
                      int chunk_index, const Error& e);
  void append(const std::string& lines);

  static std::string line(const ModelResponse& r);
  static std::string failure_line(const std::string& model_id, const std::string& digest,
                                  int run_index, int chunk_index, const Error& e);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

struct RunFailure {
  int run_index = 0;
  int chunk_index = 0;
  ErrorKind kind = ErrorKind::transport;
  std::string message;
};

struct RepeatedResult {
  std::vector<ModelResponse> responses;  // ordered by (run_index, chunk_index)
  std::vector<RunFailure> failures;
};

class Gateway {
 public:
  Gateway(ModelSpec spec, std::shared_ptr<Provider> provider, RetryPolicy retry = {},
          std::shared_ptr<RunLog> log = nullptr);

  const ModelSpec& spec() const { return spec_; }

  /// One completion with retry on transport errors (exponential backoff,
  /// at most retry.max_attempts attempts). Content and auth errors are not
  /// retried.
  ModelResponse complete(const std::string& prompt, int run_index = 0, int chunk_index = 0);

  /// Every chunk of the bundle, n times. Failed requests are reported in
  /// `failures`; if nothing succeeds an aggregate error is thrown.
  RepeatedResult run_repeated(const PromptBundle& bundle, int n);
  RepeatedResult run_repeated(const std::vector<std::string>& prompts, int n);

  /// Number of provider calls made so far, retries included.
  std::size_t attempts() const { return attempts_; }

 private:
  ModelSpec spec_;
  std::shared_ptr<Provider> provider_;
  RetryPolicy retry_;
  std::shared_ptr<RunLog> log_;
  std::counting_semaphore<64> in_flight_;
  std::atomic<std::size_t> attempts_{0};
};

/// Extracts enumerated statements ("1. ...", "2) ...", "- ...", "* ...") or a
/// JSON array of strings. Every pattern text is a substring of the response.
/// Stage and level are left at their defaults for the caller to fill in.
std::vector<BehavioralPattern> parse_patterns(const ModelResponse& response,
                                              std::vector<std::string>* warnings = nullptr);

}  // namespace gazemine

#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "gazemine/app.hpp"

namespace gazemine {

/// Error payload of the HTTP API: {"error": {"code", "message", "detail"}}.
struct ApiError {
  std::string code;  // not_found, validation, conflict, internal
  std::string message;
  json detail = json::object();

  int http_status() const;
  json to_json() const;
};

class ApiException : public std::runtime_error {
 public:
  explicit ApiException(ApiError e) : std::runtime_error(e.message), error_(std::move(e)) {}
  const ApiError& error() const noexcept { return error_; }

 private:
  ApiError error_;
};

/// Maps library errors onto API errors.
ApiError to_api_error(const std::exception& e);

/// The review API without the HTTP layer. Every method returns the response
/// body or throws ApiException. Verdict writes are serialized per run; reads
/// take a shared lock so they never observe a half-appended verdict line.
class ReviewService {
 public:
  explicit ReviewService(RunStore store) : store_(std::move(store)) {}

  json list_runs() const;
  json get_run(const std::string& run_id) const;
  /// status: "pending" (no expert verdict yet), "reviewed", or empty for all.
  json run_patterns(const std::string& run_id, const std::string& status) const;
  /// Without a run id the newest run whose composite holds the pattern wins.
  json get_pattern(const std::string& pattern_id, const std::optional<std::string>& run_id) const;

  struct PostResult {
    int status = 200;  // 201 when a verdict was added or replaced
    json body;
  };
  /// Body: {"verdict": "valid"|"invalid", "note"?, "run_id"?, "expected"?}.
  /// A repeat of the current verdict is a no-op; a different verdict is
  /// appended and becomes effective. "expected" names the verdict the client
  /// believes is current; a mismatch is a conflict.
  PostResult post_verdict(const std::string& pattern_id, const json& body,
                          const std::optional<std::string>& run_id);

  json kappa(const std::string& run_id) const;
  json anomalies(const std::string& run_id) const;
  json difficulty(const std::string& run_id) const;

  const RunStore& store() const { return store_; }

 private:
  std::shared_mutex& run_mutex(const std::string& run_id) const;
  void require_run(const std::string& run_id) const;
  std::string resolve_run(const std::string& pattern_id, const std::optional<std::string>& run_id) const;
  json queue_item(const std::string& run_id, const BehavioralPattern& p, const std::vector<LiteratureEvidence>& ev,
                  const std::map<std::string, PatternScore>& scores, const VerdictLog& verdicts) const;

  RunStore store_;
  mutable std::mutex map_mu_;
  mutable std::map<std::string, std::unique_ptr<std::shared_mutex>> run_mu_;
};

/// HTTP front end over ReviewService, plus static hosting of the review UI
/// bundle when its directory exists.
class HttpServer {
 public:
  HttpServer(RunStore store, std::filesystem::path ui_dir);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the port (0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop() is called.
  void listen();
  void stop();
  void wait_until_ready() const;

  ReviewService& service();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gazemine

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gazemine/anomaly.hpp"
#include "gazemine/co_eval.hpp"
#include "gazemine/difficulty.hpp"
#include "gazemine/gaze_data.hpp"
#include "gazemine/llm_gateway.hpp"
#include "gazemine/lstm.hpp"
#include "gazemine/pattern_miner.hpp"

namespace gazemine {

/// Everything a run reads from its config file. Unknown keys are rejected so
/// typos surface early.
struct AppConfig {
  std::uint64_t seed = 7;
  std::filesystem::path store = "runs";
  std::optional<std::filesystem::path> input;
  std::optional<std::filesystem::path> aois;
  std::optional<std::filesystem::path> questions;
  std::optional<std::filesystem::path> templates_dir;
  std::filesystem::path ui_dir = "review_ui/dist";

  std::vector<Column> schema = default_schema();
  FieldNames fields;
  CleanConfig clean;

  std::vector<ModelSpec> models = default_model_specs();
  std::optional<std::string> provider;  // forces every model onto this provider
  std::string evidence_model;           // model asked for literature evidence; default first model
  RetryPolicy retry;

  MiningOptions mining;
  GridSpec grid;
  ScoreWeights weights;

  WindowConfig windows;
  TrainConfig train;
  double k = 3.0;

  int repetitions = 5;
  std::vector<std::string> lexicon = default_lexicon();

  std::string host = "127.0.0.1";
  int port = 8080;

  static AppConfig from_json(const json& j);
  json to_json() const;
};

/// Reads the config file when given (relative paths inside it resolve
/// against the file's directory), otherwise returns defaults.
AppConfig load_config(const std::optional<std::filesystem::path>& path);

enum class StageStatus { pending, running, done, failed };
std::string_view to_string(StageStatus s);

struct RunManifest {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string created_at;
  json config;                                     // snapshot taken at creation
  std::map<std::string, StageStatus> stages;       // current status per stage
  std::vector<json> history;                       // every status change, in order
  std::map<std::string, std::string> artifacts;    // name -> path relative to the run dir

  json to_json() const;
  static RunManifest from_json(const json& j);
};

inline const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> s = {"ingest", "segment", "mine", "score", "kappa",
                                             "detect", "predict-difficulty", "report"};
  return s;
}

/// Self-describing run id: UTC timestamp, seed and a digest of both.
std::string make_run_id(std::uint64_t seed);

/// Directory of runs/<run-id>/ folders.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path run_dir(const std::string& run_id) const { return root_ / run_id; }
  bool exists(const std::string& run_id) const;
  std::vector<std::string> list() const;  // sorted
  std::optional<std::string> latest() const;

  RunManifest create(const std::string& run_id, const AppConfig& cfg) const;
  RunManifest load_manifest(const std::string& run_id) const;
  void save_manifest(const RunManifest& m) const;

 private:
  std::filesystem::path root_;
};

// Artifact paths inside a run directory.
namespace artifact {
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* schema = "data/schema.json";
inline constexpr const char* clean_table = "data/clean.tsv";
inline constexpr const char* annotated_table = "data/annotated.tsv";
inline constexpr const char* clean_report = "reports/clean_report.json";
inline constexpr const char* horizontal = "payloads/horizontal.jsonl";
inline constexpr const char* vertical = "payloads/vertical.jsonl";
inline constexpr const char* raw = "payloads/raw.csv";
inline constexpr const char* patterns_dir = "patterns";
inline constexpr const char* composite = "composite.jsonl";
inline constexpr const char* evidence = "evidence.jsonl";
inline constexpr const char* scores = "scores.jsonl";
inline constexpr const char* verdicts = "verdicts.jsonl";
inline constexpr const char* model = "model/lstm.json";
inline constexpr const char* kappa = "reports/kappa.json";
inline constexpr const char* trust_grid = "reports/trust_grid.tsv";
inline constexpr const char* anomalies = "reports/anomalies.json";
inline constexpr const char* anomaly_windows = "reports/anomaly_windows.jsonl";
inline constexpr const char* anomaly_patterns = "reports/anomaly_patterns.jsonl";
inline constexpr const char* difficulty = "reports/difficulty.json";
inline constexpr const char* difficulty_grid = "reports/difficulty.tsv";
inline constexpr const char* difficulty_runs = "reports/difficulty_runs.jsonl";
inline constexpr const char* mining_warnings = "reports/mining_warnings.json";
inline constexpr const char* summary = "reports/summary.json";
inline constexpr const char* requests = "logs/requests.jsonl";
}  // namespace artifact

// Loaders shared by the pipeline and the service. Missing files raise a
// precondition error naming the artifact; corrupt files raise LoadError.
GazeTable load_table(const std::filesystem::path& run_dir, const char* which);
std::vector<PatternSet> load_pattern_sets(const std::filesystem::path& run_dir);
PatternSet load_composite(const std::filesystem::path& run_dir);
std::vector<LiteratureEvidence> load_evidence(const std::filesystem::path& run_dir);
std::map<std::string, PatternScore> load_scores(const std::filesystem::path& run_dir);
VerdictLog load_verdicts(const std::filesystem::path& run_dir);  // empty log when absent

void save_pattern_set(const std::filesystem::path& path, const PatternSet& set);
PatternSet load_pattern_set(const std::filesystem::path& path);

struct KappaSummary {
  std::optional<KappaReport> overall;
  std::vector<CellKappa> cells;
  ExperimentGrid grid;
  std::size_t expert_verdicts = 0;

  json to_json() const;
  static KappaSummary from_json(const json& j);
};

KappaSummary compute_kappa(const PatternSet& composite, const std::map<std::string, PatternScore>& scores,
                           const VerdictLog& verdicts);

/// Deterministic stand-in for an expert: agrees with the literature verdict
/// with probability `agreement`, decided per pattern from the seed.
std::vector<ReviewVerdict> simulate_expert(const PatternSet& composite,
                                           const std::map<std::string, PatternScore>& scores, std::uint64_t seed,
                                           double agreement = 0.85);

/// One run directory worth of stages.
class Pipeline {
 public:
  Pipeline(AppConfig cfg, RunStore store, std::string run_id);

  const std::filesystem::path& dir() const { return dir_; }
  const AppConfig& config() const { return cfg_; }

  CleanReport ingest(const std::filesystem::path& csv);
  std::map<std::string, std::size_t> segment();
  GridResult mine();
  std::map<std::string, PatternScore> score();
  KappaSummary kappa(const std::optional<std::filesystem::path>& verdict_file, bool simulate_expert,
                     double agreement = 0.85);
  AnomalyReport detect();
  DifficultyResult predict_difficulty();
  json report();

  /// Gateways for every configured model (mock seeds follow the run seed).
  std::vector<std::unique_ptr<Gateway>> gateways() const;

 private:
  void mark(const std::string& stage, StageStatus status, const std::string& detail = {});
  template <class F>
  auto staged(const std::string& stage, F&& body);
  void record_artifact(const std::string& name, const std::string& rel);
  std::filesystem::path path(const char* rel) const { return dir_ / rel; }
  void require(const char* rel, const char* producer) const;
  TemplateSet templates() const;
  std::vector<QuestionItem> questions() const;

  AppConfig cfg_;
  RunStore store_;
  std::string run_id_;
  std::filesystem::path dir_;
  std::shared_ptr<RunLog> log_;
};

}  // namespace gazemine

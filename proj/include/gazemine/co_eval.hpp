#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gazemine/common.hpp"
#include "gazemine/json_io.hpp"
#include "gazemine/pattern.hpp"

namespace gazemine {

class Gateway;
class TemplateSet;

enum class Verdict { valid, invalid };
enum class Rater { expert, literature };

std::string_view to_string(Verdict v);
std::string_view to_string(Rater r);
Verdict parse_verdict(std::string_view text);
Rater parse_rater(std::string_view text);

struct LiteratureEvidence {
  std::string pattern_id;
  int rank = 1;      // recommendation order, 1..5
  int quartile = 1;  // 1..4 for Q1..Q4
  int stance = 0;    // +1 support, 0 neutral, -1 oppose
  std::string title;

  int citation_points() const { return 6 - rank; }
  int ranking_points() const { return 5 - quartile; }

  json to_json() const;
  static LiteratureEvidence from_json(const json& j);
  bool operator==(const LiteratureEvidence&) const = default;
};

/// Optional per-dimension multipliers. The defaults reproduce (C + R) * S.
struct ScoreWeights {
  int citation = 1;
  int ranking = 1;
};

int score_evidence(const LiteratureEvidence& e, const ScoreWeights& w = {});

struct PatternScore {
  std::string pattern_id;
  std::array<int, 5> item_scores{};  // F_i by rank
  int total = 0;
  Verdict literature_verdict = Verdict::invalid;
  bool tie = false;  // total == 0, counted as invalid

  json to_json() const;
  static PatternScore from_json(const json& j);
  bool operator==(const PatternScore&) const = default;
};

/// Needs exactly five records whose ranks are a permutation of 1..5.
PatternScore score_pattern(const std::vector<LiteratureEvidence>& evidence, const ScoreWeights& w = {});

/// Reads evidence records out of a model answer (one JSON object per line;
/// stance may be a number or support/neutral/oppose, quartile "Q3" or 3).
std::vector<LiteratureEvidence> parse_evidence_response(const std::string& text, const std::string& pattern_id);

/// Asks the model for five evidence records on one pattern.
std::vector<LiteratureEvidence> request_evidence(const BehavioralPattern& pattern, Gateway& gateway,
                                                 const TemplateSet& templates);

struct ReviewVerdict {
  std::string pattern_id;
  Rater rater = Rater::expert;
  Verdict verdict = Verdict::valid;
  std::string timestamp;  // ISO-8601 UTC
  std::optional<std::string> note;

  json to_json() const;
  static ReviewVerdict from_json(const json& j);
  bool operator==(const ReviewVerdict&) const = default;
  /// Same pattern, rater, verdict and note; the timestamp is ignored.
  bool same_body(const ReviewVerdict& other) const;
};

std::string utc_timestamp();

enum class SubmitOutcome { added, unchanged, replaced };

/// Append-only verdict history. The latest entry per (pattern, rater) is the
/// effective one; replaced entries stay in the history.
class VerdictLog {
 public:
  VerdictLog() = default;
  explicit VerdictLog(std::vector<ReviewVerdict> history);

  SubmitOutcome submit(const ReviewVerdict& v);
  std::optional<ReviewVerdict> latest(const std::string& pattern_id, Rater rater) const;
  /// Effective verdicts, ordered by (pattern_id, rater).
  std::vector<ReviewVerdict> effective() const;
  const std::vector<ReviewVerdict>& history() const { return history_; }

  static VerdictLog load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<ReviewVerdict> history_;
  std::map<std::pair<std::string, Rater>, std::size_t> latest_;
};

struct KappaReport {
  std::size_t n = 0;
  double p_o = 0.0;
  double p_e = 0.0;
  double kappa = 0.0;
  bool consistent = false;
  /// contingency[i][j]: rater a said i, rater b said j (0 valid, 1 invalid).
  std::array<std::array<std::size_t, 2>, 2> contingency{};

  json to_json() const;
  static KappaReport from_json(const json& j);
  bool operator==(const KappaReport&) const = default;
};

inline constexpr double kConsistencyThreshold = 0.6;

KappaReport cohen_kappa(const std::vector<Verdict>& a, const std::vector<Verdict>& b);

/// Row/column grid of values rendered as a tab-delimited report; missing
/// values print as NA.
struct ExperimentGrid {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::map<std::pair<std::string, std::string>, double> values;
  std::string corner = "setting";

  std::optional<double> get(const std::string& row, const std::string& col) const;
  void set(const std::string& row, const std::string& col, double v) { values[{row, col}] = v; }
  std::string render_tsv() const;

  json to_json() const;
  static ExperimentGrid from_json(const json& j);
  bool operator==(const ExperimentGrid&) const = default;
};

/// Table-style row label of a mining cell: "Directly", "h+v(total)", ...
std::string trust_row_label(Stage stage, PromptLevel level);
const std::vector<std::string>& trust_rows();
const std::vector<std::string>& grid_columns();  // 4o, o1, r1

struct CellKappa {
  CellKey key;
  std::optional<KappaReport> report;  // empty when the cell could not be scored
  std::string note;

  json to_json() const;
  static CellKappa from_json(const json& j);
  bool operator==(const CellKappa&) const = default;
};

/// Expert vs literature kappa for every model cell represented in the
/// composite sample. Patterns lacking either verdict are skipped.
std::vector<CellKappa> cell_kappas(const PatternSet& composite, const std::map<std::string, PatternScore>& scores,
                                   const VerdictLog& verdicts);

/// Kappa over every composite pattern having both verdicts.
std::optional<KappaReport> overall_kappa(const PatternSet& composite,
                                         const std::map<std::string, PatternScore>& scores,
                                         const VerdictLog& verdicts);

ExperimentGrid trust_grid(const std::vector<CellKappa>& cells);

}  // namespace gazemine

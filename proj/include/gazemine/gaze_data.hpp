#pragma once

#include <array>
#include <compare>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gazemine/common.hpp"
#include "gazemine/json_io.hpp"

namespace gazemine {

enum class ColumnKind { id, numeric, categorical };
enum class Role { driver, navigator };
enum class Expertise { student, expert };
enum class AoiCategory { error, non_error };

std::string_view to_string(ColumnKind kind);
std::string_view to_string(Role role);
std::string_view to_string(Expertise expertise);
std::string_view to_string(AoiCategory category);  // "Error" / "NonError"
ColumnKind parse_column_kind(std::string_view text);
std::optional<Role> parse_role(std::string_view text);
std::optional<Expertise> parse_expertise(std::string_view text);
std::optional<AoiCategory> parse_aoi_category(std::string_view text);

struct Column {
  std::string name;
  ColumnKind kind;
  bool operator==(const Column&) const = default;
};

/// One table cell. monostate marks a missing or unparseable value.
using Cell = std::variant<std::monostate, double, std::string>;

inline bool is_missing(const Cell& c) { return std::holds_alternative<std::monostate>(c); }

/// Semantic roles the pipeline reads. Column names for each role are
/// configurable; the defaults are the role names themselves.
enum class Field {
  participant_id,
  role,
  expertise,
  question_id,
  timestamp_ms,
  fixation_number,
  fixation_duration_ms,
  saccade_number,
  saccade_duration_ms,
  gaze_x,
  gaze_y,
  aoi,
  aoi_name,
};

std::string_view default_field_name(Field field);

struct FieldNames {
  std::map<Field, std::string> overrides;
  std::string name(Field field) const;
  static FieldNames from_json(const json& j);
};

/// The column layout of the source export shipped with the synthetic corpus.
std::vector<Column> default_schema(const FieldNames& names = {});
std::vector<Column> schema_from_json(const json& j);
json schema_to_json(const std::vector<Column>& schema);

/// The 12 question ids A1..D3.
const std::vector<std::string>& default_questions();

struct GazeRecord {
  std::vector<Cell> cells;  // aligned with GazeTable::schema
  bool operator==(const GazeRecord&) const = default;
};

struct CleanReport {
  std::size_t rows_in = 0;
  std::size_t rows_out = 0;
  std::size_t dropped_missing = 0;
  std::size_t dropped_noise = 0;
  std::size_t dropped_irrelevant = 0;

  std::size_t dropped_total() const { return dropped_missing + dropped_noise + dropped_irrelevant; }
  json to_json() const;
  static CleanReport from_json(const json& j);
  bool operator==(const CleanReport&) const = default;
};

class GazeTable;

struct Provenance {
  std::string source;
  char delimiter = ',';
  std::size_t unparseable_cells = 0;
  std::optional<CleanReport> clean_report;
  // Table as it was before AOI annotation.
  std::shared_ptr<const GazeTable> unannotated;
};

class GazeTable {
 public:
  std::vector<Column> schema;
  std::vector<GazeRecord> records;
  FieldNames fields;
  Provenance provenance;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  std::optional<std::size_t> column_index(std::string_view name) const;
  std::optional<std::size_t> field_index(Field field) const;
  /// Throws a schema error when the field's column is absent.
  std::size_t require(Field field) const;

  const Cell& cell(std::size_t row, std::size_t column) const { return records[row].cells[column]; }
  std::optional<double> number(std::size_t row, std::size_t column) const;
  std::string text(std::size_t row, std::size_t column) const;

  std::vector<std::size_t> columns_of_kind(ColumnKind kind) const;

  /// Schema and records equal; provenance is ignored.
  bool same_content(const GazeTable& other) const {
    return schema == other.schema && records == other.records;
  }
};

/// Reads a comma- or tab-delimited export (delimiter taken from the header
/// line). Every schema column must be present in the header; extra header
/// columns are ignored. Unparseable numeric cells become missing.
GazeTable parse_gaze_csv(std::string_view text, const std::vector<Column>& schema,
                         const FieldNames& fields = {}, std::string source = {});

/// Re-emits the table in its source delimiter (or `delimiter` if given).
/// Output is byte-stable for identical tables.
std::string write_gaze_csv(const GazeTable& table, std::optional<char> delimiter = std::nullopt);

struct CleanConfig {
  double min_fix_ms = 50.0;
  double max_fix_ms = 2000.0;
  /// Rows whose question id is not listed are irrelevant. Empty list disables
  /// the rule.
  std::vector<std::string> questions = default_questions();

  static CleanConfig from_json(const json& j);
};

class CleanError : public Error {
 public:
  CleanError(const std::string& message, CleanReport report)
      : Error(ErrorKind::empty_result, message), report_(report) {}
  const CleanReport& report() const noexcept { return report_; }

 private:
  CleanReport report_;
};

struct CleanResult {
  GazeTable table;
  CleanReport report;
};

/// Drops rows with missing id/numeric values, rows for unknown questions and
/// noisy rows (fixation duration outside the configured band, negative
/// saccade duration, repeated timestamps where the later frame wins). Rows of
/// one (participant, question) sequence are reordered by timestamp in place;
/// the positions a sequence occupies in the table do not change.
CleanResult clean(const GazeTable& table, const CleanConfig& cfg = {});

struct Rect {
  double x0, y0, x1, y1;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  double area() const { return (x1 - x0) * (y1 - y0); }
};

struct AoiDefinition {
  std::string name;
  std::string question_id;
  Rect region;
  AoiCategory category;
};

struct AoiLabel {
  std::string name;
  AoiCategory category;
};

inline AoiLabel default_aoi_label() { return {"question_stem", AoiCategory::non_error}; }

std::vector<AoiDefinition> aoi_definitions_from_json(const json& j);
json aoi_definitions_to_json(const std::vector<AoiDefinition>& aois);

/// Labels every record with the first declared region (for its question)
/// containing (gaze_x, gaze_y); region edges are inclusive. Points outside
/// every region get `fallback`. Adds `aoi` and `aoi_name` columns.
GazeTable annotate_aoi(const GazeTable& table, const std::vector<AoiDefinition>& aois,
                       const std::optional<AoiLabel>& fallback = default_aoi_label());

/// Per-record model input: fixation duration, saccade duration, gaze x, gaze y.
inline constexpr std::size_t kFeatureDim = 4;
using FeatureVector = std::array<double, kFeatureDim>;
const std::array<std::string_view, kFeatureDim>& feature_names();

struct SequenceKey {
  std::string participant_id;
  std::string question_id;
  auto operator<=>(const SequenceKey&) const = default;
};

struct GazeSequence {
  std::string participant_id;
  std::string question_id;
  std::optional<Expertise> expertise;
  std::vector<FeatureVector> features;
  std::vector<AoiCategory> aoi;
  std::vector<std::size_t> rows;  // table row of each element
};

/// Partitions a cleaned, annotated table into timestamp-ordered sequences.
std::map<SequenceKey, GazeSequence> sessionize(const GazeTable& table);

}  // namespace gazemine

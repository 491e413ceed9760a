#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gazemine/gaze_data.hpp"
#include "gazemine/pattern.hpp"

namespace gazemine {

/// One table row as a JSON object keyed by column name.
struct RowPayload {
  std::size_t row_index = 0;
  json fields;

  std::string serialize() const { return canonical_dump(fields); }
};

/// One id column paired with one numeric column, row by row.
struct ColumnPairPayload {
  std::string id_column;
  std::string value_column;
  std::vector<std::pair<Cell, Cell>> pairs;

  json to_json() const;
  static ColumnPairPayload from_json(const json& j);
  std::string serialize() const { return canonical_dump(to_json()); }
};

json cell_to_json(const Cell& cell);
Cell cell_from_json(const json& value, ColumnKind kind);

/// Horizontal path: one payload per row, in table order.
std::vector<RowPayload> split_horizontal(const GazeTable& table);

/// Inverse of the horizontal serialization for one row.
GazeRecord row_from_payload(const json& fields, const std::vector<Column>& schema);

/// Vertical path: one payload per (id column, numeric column), id columns in
/// schema order, numeric columns in schema order within each id column.
std::vector<ColumnPairPayload> split_vertical(const GazeTable& table);

/// Template slots are plain text with {{DATA}}, {{PATTERNS}} and
/// {{QUESTIONS}} placeholders. Built-in defaults cover every slot; a templates
/// directory overrides them file by file (<slot>.txt).
class TemplateSet {
 public:
  static TemplateSet builtin();
  static TemplateSet load_dir(const std::filesystem::path& dir);

  const std::string& get(const std::string& slot) const;
  void set(const std::string& slot, std::string text) { slots_[slot] = std::move(text); }
  bool has(const std::string& slot) const { return slots_.count(slot) != 0; }

 private:
  std::map<std::string, std::string> slots_;
};

/// Slot name of a mining template: "<stage>_<level>", e.g. "hv_brief".
std::string mining_slot(Stage stage, PromptLevel level);

std::string render_template(const std::string& tpl, const std::map<std::string, std::string>& values);

std::string render_pattern_list(const std::vector<BehavioralPattern>& patterns);

struct PromptBundle {
  std::string slot;
  Stage stage = Stage::direct;
  std::optional<PromptLevel> level;
  std::vector<std::string> chunks;  // complete prompt texts
  std::vector<BehavioralPattern> carried;
};

struct BundleOptions {
  std::size_t budget_chars = 12000;
  /// Text placed ahead of the payload lines in every chunk (e.g. a CSV header).
  std::string preamble;
};

/// Greedy fill in payload order: a chunk's data (preamble + payload lines
/// joined by newlines) never exceeds the budget. A payload that cannot fit on
/// its own raises an oversize error naming it.
std::vector<std::string> chunk_payloads(const std::vector<std::string>& payloads,
                                        const BundleOptions& opts = {});

/// Wraps chunked payloads in the (stage, level) mining template. Vertical
/// bundles may carry horizontal patterns; merge bundles must carry patterns
/// from both the horizontal and the vertical stage.
PromptBundle build_bundle(const std::vector<std::string>& payloads, Stage stage, PromptLevel level,
                          const std::vector<BehavioralPattern>& carried,
                          const TemplateSet& templates, const BundleOptions& opts = {});

/// Serialized payload lines for each stage's input.
std::vector<std::string> horizontal_lines(const GazeTable& table);
std::vector<std::string> vertical_lines(const GazeTable& table);
/// Vertical lines computed separately for each (participant, question)
/// sequence, in order of first appearance, so each column pair stays small
/// enough for a prompt.
std::vector<std::string> vertical_lines_by_sequence(const GazeTable& table);
/// Raw delimited rows (no header) for the no-module baseline.
std::vector<std::string> raw_lines(const GazeTable& table);
std::string raw_header(const GazeTable& table);

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace gazemine

#include "gazemine/segmentation.hpp"

#include <fstream>
#include <set>

namespace gazemine {

namespace fs = std::filesystem;

json cell_to_json(const Cell& cell) {
  if (const auto* v = std::get_if<double>(&cell)) return *v;
  if (const auto* s = std::get_if<std::string>(&cell)) return *s;
  return nullptr;
}

Cell cell_from_json(const json& value, ColumnKind kind) {
  if (value.is_null()) return std::monostate{};
  if (kind == ColumnKind::numeric) {
    if (!value.is_number())
      throw Error(ErrorKind::validation, "expected a number, got " + value.dump());
    return value.get<double>();
  }
  if (!value.is_string()) throw Error(ErrorKind::validation, "expected a string, got " + value.dump());
  return value.get<std::string>();
}

json ColumnPairPayload::to_json() const {
  json p = json::array();
  for (const auto& [id, v] : pairs) p.push_back(json::array({cell_to_json(id), cell_to_json(v)}));
  return {{"id_column", id_column}, {"value_column", value_column}, {"pairs", std::move(p)}};
}

ColumnPairPayload ColumnPairPayload::from_json(const json& j) {
  ColumnPairPayload out;
  out.id_column = j.at("id_column").get<std::string>();
  out.value_column = j.at("value_column").get<std::string>();
  for (const auto& pair : j.at("pairs")) {
    out.pairs.emplace_back(cell_from_json(pair.at(0), ColumnKind::id),
                           cell_from_json(pair.at(1), ColumnKind::numeric));
  }
  return out;
}

std::vector<RowPayload> split_horizontal(const GazeTable& table) {
  std::vector<RowPayload> out;
  out.reserve(table.size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    json fields = json::object();
    for (std::size_t c = 0; c < table.schema.size(); ++c)
      fields[table.schema[c].name] = cell_to_json(table.records[r].cells[c]);
    out.push_back({r, std::move(fields)});
  }
  return out;
}

GazeRecord row_from_payload(const json& fields, const std::vector<Column>& schema) {
  if (!fields.is_object() || fields.size() != schema.size())
    throw Error(ErrorKind::validation, "row payload does not match the column schema");
  GazeRecord rec;
  rec.cells.reserve(schema.size());
  for (const auto& col : schema) {
    if (!fields.contains(col.name))
      throw Error(ErrorKind::validation, "row payload lacks column '" + col.name + "'");
    rec.cells.push_back(cell_from_json(fields.at(col.name), col.kind));
  }
  return rec;
}

std::vector<ColumnPairPayload> split_vertical(const GazeTable& table) {
  const auto ids = table.columns_of_kind(ColumnKind::id);
  const auto numerics = table.columns_of_kind(ColumnKind::numeric);
  if (ids.empty()) throw Error(ErrorKind::configuration, "vertical split needs an id column");
  if (numerics.empty()) throw Error(ErrorKind::configuration, "vertical split needs a numeric column");
  std::vector<ColumnPairPayload> out;
  out.reserve(ids.size() * numerics.size());
  for (std::size_t id : ids) {
    for (std::size_t num : numerics) {
      ColumnPairPayload p;
      p.id_column = table.schema[id].name;
      p.value_column = table.schema[num].name;
      p.pairs.reserve(table.size());
      for (const auto& rec : table.records) p.pairs.emplace_back(rec.cells[id], rec.cells[num]);
      out.push_back(std::move(p));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Templates

namespace {

constexpr const char* kBackground =
    "Background: the data comes from an eye-tracking study of pair programming. Students and "
    "experts solved twelve programming questions (A1 to D3) in driver or navigator roles while a "
    "250 Hz eye tracker recorded fixations and saccades. Each record carries a participant id, "
    "role, expertise, question id, timestamp, fixation number and duration (ms), saccade number "
    "and duration (ms), normalized gaze coordinates and, when annotated, the area of interest "
    "(Error = the problem area containing the defect, NonError = the question stem).\n";

constexpr const char* kFocus =
    "Focus on: how fixation and saccade durations differ between experts and students and "
    "between drivers and navigators; how attention is split between Error and NonError areas; "
    "and how these behaviors change across questions and over time within a question.\n";

constexpr const char* kListInstruction =
    "\nAnswer as a numbered list, one behavioral pattern per line, with no other text.\n";

std::string stage_intro(Stage stage) {
  switch (stage) {
    case Stage::direct:
      return "Below is the raw eye-tracking table in delimited text form.\n";
    case Stage::horizontal:
      return "Each line below is one eye-tracking record serialized as a JSON object; analyze the "
             "relationships between the fields within each record.\n";
    case Stage::vertical:
      return "Each line below pairs an identifier column with one numeric column as JSON "
             "(id_column, value_column, pairs of [id, value]); analyze how each feature evolves "
             "across identifiers and over time.\n";
    case Stage::merged:
      return "Below are behavioral patterns produced by a horizontal (row-wise) and a vertical "
             "(column-wise) analysis of the same eye-tracking data. Merge them, resolve "
             "contradictions and derive deeper patterns and structural dependencies.\n";
  }
  return {};
}

std::string mining_template(Stage stage, PromptLevel level) {
  std::string t;
  if (level != PromptLevel::brief) t += kBackground;
  if (level == PromptLevel::detailed) t += kFocus;
  if (level != PromptLevel::brief) t += stage_intro(stage);
  t += "{{PATTERNS}}";
  t += "Data:\n{{DATA}}\n";
  if (level == PromptLevel::brief) {
    t += "\nWhat behavioral patterns does this data show?";
  } else {
    t += "\nExtract the behavioral patterns supported by this data.";
  }
  t += kListInstruction;
  return t;
}

}  // namespace

std::string mining_slot(Stage stage, PromptLevel level) {
  return std::string(to_string(stage)) + "_" + std::string(to_string(level));
}

TemplateSet TemplateSet::builtin() {
  TemplateSet set;
  for (Stage s : {Stage::direct, Stage::horizontal, Stage::vertical, Stage::merged})
    for (PromptLevel l : kAllLevels) set.set(mining_slot(s, l), mining_template(s, l));

  set.set("inductive",
          std::string(kBackground) +
              "Below are behavioral pattern sets produced by several language models for the same "
              "analysis setting. Perform an inductive analysis: consolidate statements that "
              "describe the same behavior into one pattern and keep distinct ones separate.\n"
              "Data:\n{{DATA}}\n" +
              kListInstruction);

  set.set("anomaly",
          std::string(kBackground) +
              "An LSTM autoencoder trained on expert gaze flagged anomalous windows in the "
              "students' gaze. The JSON below gives anomaly counts per student, question and area "
              "of interest, plus group-level aggregates.\n"
              "Data:\n{{DATA}}\n"
              "\n1. Horizontal, inter-group: how do the students' anomaly distributions differ "
              "from the expert baseline and from each other?\n"
              "2. Vertical, intra-individual: how do each student's anomalies evolve across the "
              "question sequence, and what does that suggest about their strategy?\n"
              "3. Which questions may be flawed (no anomalies for any student)?\n" +
              kListInstruction);

  set.set("literature",
          "For the behavioral pattern below, recommend 5 related peer-reviewed papers, ordered "
          "by relevance. For each paper give its recommendation rank (1-5), the JCR quartile of "
          "its journal (Q1-Q4) and whether it supports, opposes or is neutral toward the pattern.\n"
          "Pattern:\n{{PATTERNS}}\n"
          "Answer with exactly 5 evidence records, one JSON object per line with the keys "
          "rank, quartile, stance, title.\n");

  const std::string difficulty_tail =
      "Questions:\n{{QUESTIONS}}\n"
      "{{DATA}}"
      "\nPredict the difficulty of every question. Answer with one line per question in the "
      "form `Qid: level`, where level is easy, medium or hard.\n";
  set.set("difficulty_total",
          "You will judge the difficulty of programming questions used in an eye-tracking study. "
          "There are 12 questions evenly distributed across three difficulty levels (easy, "
          "medium and hard), four questions per level.\n" +
              difficulty_tail);
  set.set("difficulty_none",
          "You will judge the difficulty of programming questions used in an eye-tracking "
          "study.\n" +
              difficulty_tail);
  return set;
}

TemplateSet TemplateSet::load_dir(const fs::path& dir) {
  TemplateSet set = builtin();
  if (!fs::is_directory(dir))
    throw Error(ErrorKind::configuration, "templates directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) set.set(f.stem().string(), read_text_file(f));
  return set;
}

const std::string& TemplateSet::get(const std::string& slot) const {
  auto it = slots_.find(slot);
  if (it == slots_.end()) throw Error(ErrorKind::configuration, "no prompt template for slot '" + slot + "'");
  return it->second;
}

std::string render_template(const std::string& tpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tpl.size());
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    const std::size_t open = tpl.find("{{", pos);
    if (open == std::string::npos) break;
    const std::size_t close = tpl.find("}}", open + 2);
    if (close == std::string::npos) break;
    out.append(tpl, pos, open - pos);
    const std::string name = tpl.substr(open + 2, close - open - 2);
    if (auto it = values.find(name); it != values.end()) {
      out += it->second;
    }
    pos = close + 2;
  }
  out.append(tpl, pos, std::string::npos);
  return out;
}

std::string render_pattern_list(const std::vector<BehavioralPattern>& patterns) {
  if (patterns.empty()) return {};
  std::string out = "Previously identified patterns:\n";
  for (const auto& p : patterns) {
    out += "- [" + p.id + "] (" + std::string(to_string(p.stage)) + ") " + p.text + "\n";
  }
  return out;
}

std::vector<std::string> chunk_payloads(const std::vector<std::string>& payloads,
                                        const BundleOptions& opts) {
  const std::size_t base = opts.preamble.empty() ? 0 : opts.preamble.size() + 1;
  std::vector<std::string> chunks;
  std::string current;
  bool has_payload = false;
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    const std::string& p = payloads[i];
    if (base + p.size() > opts.budget_chars) {
      throw Error(ErrorKind::oversize,
                  "payload " + std::to_string(i) + " (" + std::to_string(p.size()) +
                      " chars, starts '" + p.substr(0, 40) + "') exceeds the chunk budget of " +
                      std::to_string(opts.budget_chars) + " chars");
    }
    const std::size_t extra = has_payload ? p.size() + 1 : p.size();
    if (has_payload && base + current.size() + extra > opts.budget_chars) {
      chunks.push_back(std::move(current));
      current.clear();
      has_payload = false;
    }
    if (has_payload) current.push_back('\n');
    current += p;
    has_payload = true;
  }
  if (has_payload || chunks.empty()) chunks.push_back(std::move(current));
  if (!opts.preamble.empty()) {
    for (auto& c : chunks) c = opts.preamble + "\n" + c;
  }
  return chunks;
}

PromptBundle build_bundle(const std::vector<std::string>& payloads, Stage stage, PromptLevel level,
                          const std::vector<BehavioralPattern>& carried,
                          const TemplateSet& templates, const BundleOptions& opts) {
  if (stage == Stage::merged) {
    const bool has_h = std::any_of(carried.begin(), carried.end(),
                                   [](const auto& p) { return p.stage == Stage::horizontal; });
    const bool has_v = std::any_of(carried.begin(), carried.end(),
                                   [](const auto& p) { return p.stage == Stage::vertical; });
    if (!has_h || !has_v)
      throw Error(ErrorKind::precondition,
                  "merge bundle needs carried patterns from both the horizontal and vertical stages");
  } else if ((stage == Stage::horizontal || stage == Stage::direct) && !carried.empty()) {
    throw Error(ErrorKind::precondition,
                std::string(to_string(stage)) + " bundles do not carry patterns");
  }

  PromptBundle bundle;
  bundle.slot = mining_slot(stage, level);
  bundle.stage = stage;
  bundle.level = level;
  bundle.carried = carried;
  const std::string& tpl = templates.get(bundle.slot);
  // Merge prompts list the carried patterns as their data, not as a header.
  const std::string header_patterns = stage == Stage::vertical ? render_pattern_list(carried) : "";
  for (auto& data : chunk_payloads(payloads, opts))
    bundle.chunks.push_back(render_template(tpl, {{"DATA", data}, {"PATTERNS", header_patterns}}));
  return bundle;
}

std::vector<std::string> horizontal_lines(const GazeTable& table) {
  std::vector<std::string> out;
  for (const auto& p : split_horizontal(table)) out.push_back(p.serialize());
  return out;
}

std::vector<std::string> vertical_lines(const GazeTable& table) {
  std::vector<std::string> out;
  for (const auto& p : split_vertical(table)) out.push_back(p.serialize());
  return out;
}

std::vector<std::string> vertical_lines_by_sequence(const GazeTable& table) {
  const std::size_t pcol = table.require(Field::participant_id);
  const std::size_t qcol = table.require(Field::question_id);
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, GazeTable> groups;
  for (std::size_t row = 0; row < table.size(); ++row) {
    const auto& rec = table.records[row];
    const auto key = std::make_pair(table.text(row, pcol), table.text(row, qcol));
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) {
      it->second.schema = table.schema;
      it->second.fields = table.fields;
      order.push_back(key);
    }
    it->second.records.push_back(rec);
  }
  std::vector<std::string> out;
  for (const auto& key : order) {
    auto lines = vertical_lines(groups.at(key));
    out.insert(out.end(), std::make_move_iterator(lines.begin()), std::make_move_iterator(lines.end()));
  }
  return out;
}

std::string raw_header(const GazeTable& table) {
  const std::string csv = write_gaze_csv(table, ',');
  return csv.substr(0, csv.find('\n'));
}

std::vector<std::string> raw_lines(const GazeTable& table) {
  const std::string csv = write_gaze_csv(table, ',');
  std::vector<std::string> out;
  std::size_t pos = csv.find('\n') + 1;
  while (pos < csv.size()) {
    const std::size_t end = csv.find('\n', pos);
    out.push_back(csv.substr(pos, end - pos));
    pos = end + 1;
  }
  return out;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) {
    text += l;
    text.push_back('\n');
  }
  write_text_file(path, text);
}

std::vector<std::string> read_lines(const fs::path& path) {
  const std::string text = read_text_file(path);
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    if (end > pos) out.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  return out;
}

}  // namespace gazemine

#include "gazemine/gaze_data.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

namespace gazemine {

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::id: return "id";
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::categorical: return "categorical";
  }
  return "categorical";
}

std::string_view to_string(Role role) { return role == Role::driver ? "driver" : "navigator"; }

std::string_view to_string(Expertise e) { return e == Expertise::expert ? "expert" : "student"; }

std::string_view to_string(AoiCategory c) { return c == AoiCategory::error ? "Error" : "NonError"; }

ColumnKind parse_column_kind(std::string_view text) {
  if (text == "id") return ColumnKind::id;
  if (text == "numeric") return ColumnKind::numeric;
  if (text == "categorical") return ColumnKind::categorical;
  throw Error(ErrorKind::configuration, "unknown column kind '" + std::string(text) + "'");
}

std::optional<Role> parse_role(std::string_view text) {
  if (iequals(text, "driver")) return Role::driver;
  if (iequals(text, "navigator")) return Role::navigator;
  return std::nullopt;
}

std::optional<Expertise> parse_expertise(std::string_view text) {
  if (iequals(text, "expert")) return Expertise::expert;
  if (iequals(text, "student")) return Expertise::student;
  return std::nullopt;
}

std::optional<AoiCategory> parse_aoi_category(std::string_view text) {
  if (iequals(text, "error")) return AoiCategory::error;
  if (iequals(text, "nonerror") || iequals(text, "non-error") || iequals(text, "non_error"))
    return AoiCategory::non_error;
  return std::nullopt;
}

std::string_view default_field_name(Field field) {
  switch (field) {
    case Field::participant_id: return "participant_id";
    case Field::role: return "role";
    case Field::expertise: return "expertise";
    case Field::question_id: return "question_id";
    case Field::timestamp_ms: return "timestamp_ms";
    case Field::fixation_number: return "fixation_number";
    case Field::fixation_duration_ms: return "fixation_duration_ms";
    case Field::saccade_number: return "saccade_number";
    case Field::saccade_duration_ms: return "saccade_duration_ms";
    case Field::gaze_x: return "gaze_x";
    case Field::gaze_y: return "gaze_y";
    case Field::aoi: return "aoi";
    case Field::aoi_name: return "aoi_name";
  }
  return "";
}

namespace {

constexpr Field kAllFields[] = {
    Field::participant_id, Field::role,           Field::expertise,
    Field::question_id,    Field::timestamp_ms,   Field::fixation_number,
    Field::fixation_duration_ms, Field::saccade_number, Field::saccade_duration_ms,
    Field::gaze_x,         Field::gaze_y,         Field::aoi,
    Field::aoi_name,
};

}  // namespace

std::string FieldNames::name(Field field) const {
  if (auto it = overrides.find(field); it != overrides.end()) return it->second;
  return std::string(default_field_name(field));
}

FieldNames FieldNames::from_json(const json& j) {
  FieldNames names;
  if (!j.is_object()) return names;
  for (Field f : kAllFields) {
    const std::string key(default_field_name(f));
    if (j.contains(key)) names.overrides[f] = j.at(key).get<std::string>();
  }
  return names;
}

std::vector<Column> default_schema(const FieldNames& n) {
  return {
      {n.name(Field::participant_id), ColumnKind::id},
      {n.name(Field::role), ColumnKind::categorical},
      {n.name(Field::expertise), ColumnKind::categorical},
      {n.name(Field::question_id), ColumnKind::id},
      {n.name(Field::timestamp_ms), ColumnKind::numeric},
      {n.name(Field::fixation_number), ColumnKind::numeric},
      {n.name(Field::fixation_duration_ms), ColumnKind::numeric},
      {n.name(Field::saccade_number), ColumnKind::numeric},
      {n.name(Field::saccade_duration_ms), ColumnKind::numeric},
      {n.name(Field::gaze_x), ColumnKind::numeric},
      {n.name(Field::gaze_y), ColumnKind::numeric},
  };
}

std::vector<Column> schema_from_json(const json& j) {
  std::vector<Column> schema;
  for (const auto& c : j) {
    schema.push_back({c.at("name").get<std::string>(),
                      parse_column_kind(c.at("kind").get<std::string>())});
  }
  return schema;
}

json schema_to_json(const std::vector<Column>& schema) {
  json out = json::array();
  for (const auto& c : schema) out.push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
  return out;
}

const std::vector<std::string>& default_questions() {
  static const std::vector<std::string> kQuestions = {"A1", "A2", "A3", "B1", "B2", "B3",
                                                      "C1", "C2", "C3", "D1", "D2", "D3"};
  return kQuestions;
}

json CleanReport::to_json() const {
  return {{"rows_in", rows_in},
          {"rows_out", rows_out},
          {"dropped_missing", dropped_missing},
          {"dropped_noise", dropped_noise},
          {"dropped_irrelevant", dropped_irrelevant}};
}

CleanReport CleanReport::from_json(const json& j) {
  CleanReport r;
  r.rows_in = j.at("rows_in").get<std::size_t>();
  r.rows_out = j.at("rows_out").get<std::size_t>();
  r.dropped_missing = j.at("dropped_missing").get<std::size_t>();
  r.dropped_noise = j.at("dropped_noise").get<std::size_t>();
  r.dropped_irrelevant = j.at("dropped_irrelevant").get<std::size_t>();
  return r;
}

std::optional<std::size_t> GazeTable::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < schema.size(); ++i)
    if (schema[i].name == name) return i;
  return std::nullopt;
}

std::optional<std::size_t> GazeTable::field_index(Field field) const {
  return column_index(fields.name(field));
}

std::size_t GazeTable::require(Field field) const {
  if (auto idx = field_index(field)) return *idx;
  throw Error(ErrorKind::schema, "table has no column '" + fields.name(field) + "'");
}

std::optional<double> GazeTable::number(std::size_t row, std::size_t column) const {
  if (const auto* v = std::get_if<double>(&records[row].cells[column])) return *v;
  return std::nullopt;
}

std::string GazeTable::text(std::size_t row, std::size_t column) const {
  const Cell& c = records[row].cells[column];
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* v = std::get_if<double>(&c)) return format_number(*v);
  return {};
}

std::vector<std::size_t> GazeTable::columns_of_kind(ColumnKind kind) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < schema.size(); ++i)
    if (schema[i].kind == kind) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Delimited text

namespace {

// Splits one logical record starting at `pos`; honours RFC 4180 quoting,
// including newlines inside quoted fields. Advances `pos` past the record.
std::vector<std::string> read_record(std::string_view text, std::size_t& pos, char delim) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  while (pos < text.size()) {
    const char c = text[pos];
    if (quoted) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field.push_back('"');
          pos += 2;
          continue;
        }
        quoted = false;
        ++pos;
        continue;
      }
      field.push_back(c);
      ++pos;
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
      ++pos;
    } else if (c == delim) {
      fields.push_back(std::move(field));
      field.clear();
      ++pos;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
      ++pos;
      break;
    } else {
      field.push_back(c);
      ++pos;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

bool blank(const std::vector<std::string>& fields) {
  return std::all_of(fields.begin(), fields.end(),
                     [](const std::string& f) { return trim(f).empty(); });
}

std::string quote_if_needed(const std::string& s, char delim) {
  if (s.find_first_of(std::string{delim, '"', '\n', '\r'}) == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

GazeTable parse_gaze_csv(std::string_view text, const std::vector<Column>& schema,
                         const FieldNames& fields, std::string source) {
  if (schema.empty()) throw Error(ErrorKind::schema, "column schema is empty");
  if (std::none_of(schema.begin(), schema.end(),
                   [](const Column& c) { return c.kind == ColumnKind::id; }))
    throw Error(ErrorKind::schema, "column schema needs at least one id column");

  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF)
    text.remove_prefix(3);
  if (trim(text).empty()) throw Error(ErrorKind::empty_input, "input '" + source + "' is empty");

  const std::string_view first_line = text.substr(0, text.find('\n'));
  const char delim = first_line.find('\t') != std::string_view::npos ? '\t' : ',';

  std::size_t pos = 0;
  std::vector<std::string> header = read_record(text, pos, delim);
  for (auto& h : header) h = trim(h);

  std::vector<std::size_t> source_index(schema.size());
  std::vector<std::string> missing;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), schema[c].name);
    if (it == header.end()) {
      missing.push_back(schema[c].name);
    } else {
      source_index[c] = static_cast<std::size_t>(it - header.begin());
    }
  }
  if (!missing.empty()) {
    std::string msg = "header is missing columns:";
    for (const auto& m : missing) msg += " " + m;
    throw Error(ErrorKind::schema, msg);
  }

  GazeTable table;
  table.schema = schema;
  table.fields = fields;
  table.provenance.source = std::move(source);
  table.provenance.delimiter = delim;

  while (pos < text.size()) {
    std::vector<std::string> raw = read_record(text, pos, delim);
    if (blank(raw)) continue;
    GazeRecord rec;
    rec.cells.reserve(schema.size());
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const std::size_t s = source_index[c];
      const std::string value = s < raw.size() ? trim(raw[s]) : std::string{};
      if (value.empty()) {
        rec.cells.emplace_back(std::monostate{});
      } else if (schema[c].kind == ColumnKind::numeric) {
        if (auto v = parse_number(value)) {
          rec.cells.emplace_back(*v);
        } else {
          rec.cells.emplace_back(std::monostate{});
          ++table.provenance.unparseable_cells;
        }
      } else {
        rec.cells.emplace_back(value);
      }
    }
    table.records.push_back(std::move(rec));
  }
  if (table.records.empty())
    throw Error(ErrorKind::empty_input, "input '" + table.provenance.source + "' has no data rows");
  return table;
}

std::string write_gaze_csv(const GazeTable& table, std::optional<char> delimiter) {
  const char d = delimiter.value_or(table.provenance.delimiter);
  std::string out;
  for (std::size_t c = 0; c < table.schema.size(); ++c) {
    if (c) out.push_back(d);
    out += quote_if_needed(table.schema[c].name, d);
  }
  out.push_back('\n');
  for (const auto& rec : table.records) {
    for (std::size_t c = 0; c < rec.cells.size(); ++c) {
      if (c) out.push_back(d);
      const Cell& cell = rec.cells[c];
      if (const auto* v = std::get_if<double>(&cell)) {
        out += format_number(*v);
      } else if (const auto* s = std::get_if<std::string>(&cell)) {
        out += quote_if_needed(*s, d);
      }
    }
    out.push_back('\n');
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cleaning

CleanConfig CleanConfig::from_json(const json& j) {
  CleanConfig cfg;
  if (!j.is_object()) return cfg;
  cfg.min_fix_ms = j.value("min_fix", cfg.min_fix_ms);
  cfg.max_fix_ms = j.value("max_fix", cfg.max_fix_ms);
  if (j.contains("questions")) cfg.questions = j.at("questions").get<std::vector<std::string>>();
  return cfg;
}

CleanResult clean(const GazeTable& table, const CleanConfig& cfg) {
  const std::size_t pid = table.require(Field::participant_id);
  const std::size_t qid = table.require(Field::question_id);
  const std::size_t ts = table.require(Field::timestamp_ms);
  const std::size_t fix = table.require(Field::fixation_duration_ms);
  const auto sacc = table.field_index(Field::saccade_duration_ms);

  CleanReport report;
  report.rows_in = table.size();
  const std::set<std::string> questions(cfg.questions.begin(), cfg.questions.end());

  std::vector<std::size_t> kept;
  kept.reserve(table.size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto& rec = table.records[r];
    bool missing = false;
    for (std::size_t c = 0; c < table.schema.size(); ++c) {
      const auto kind = table.schema[c].kind;
      if ((kind == ColumnKind::numeric || kind == ColumnKind::id) && is_missing(rec.cells[c])) {
        missing = true;
        break;
      }
    }
    if (missing) {
      ++report.dropped_missing;
      continue;
    }
    if (!questions.empty() && !questions.count(table.text(r, qid))) {
      ++report.dropped_irrelevant;
      continue;
    }
    const double f = *table.number(r, fix);
    const bool bad_fix = f < cfg.min_fix_ms || f > cfg.max_fix_ms;
    const bool bad_sacc = sacc && *table.number(r, *sacc) < 0.0;
    const bool bad_ts = *table.number(r, ts) < 0.0;
    if (bad_fix || bad_sacc || bad_ts) {
      ++report.dropped_noise;
      continue;
    }
    kept.push_back(r);
  }

  // Repeated timestamps inside a sequence: the later frame wins.
  std::map<std::pair<SequenceKey, double>, std::size_t> last_frame;
  for (std::size_t r : kept)
    last_frame[{{table.text(r, pid), table.text(r, qid)}, *table.number(r, ts)}] = r;
  std::vector<std::size_t> unique_rows;
  unique_rows.reserve(kept.size());
  for (std::size_t r : kept) {
    if (last_frame.at({{table.text(r, pid), table.text(r, qid)}, *table.number(r, ts)}) == r) {
      unique_rows.push_back(r);
    } else {
      ++report.dropped_noise;
    }
  }

  // Within each sequence, fill the slots that sequence occupies with its rows
  // in timestamp order.
  std::map<SequenceKey, std::vector<std::size_t>> slots;
  for (std::size_t i = 0; i < unique_rows.size(); ++i) {
    const std::size_t r = unique_rows[i];
    slots[{table.text(r, pid), table.text(r, qid)}].push_back(i);
  }
  std::vector<std::size_t> ordered(unique_rows.size());
  for (auto& [key, positions] : slots) {
    std::vector<std::size_t> rows;
    rows.reserve(positions.size());
    for (std::size_t p : positions) rows.push_back(unique_rows[p]);
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      return *table.number(a, ts) < *table.number(b, ts);
    });
    for (std::size_t k = 0; k < positions.size(); ++k) ordered[positions[k]] = rows[k];
  }

  GazeTable out;
  out.schema = table.schema;
  out.fields = table.fields;
  out.provenance = table.provenance;
  out.records.reserve(ordered.size());
  for (std::size_t r : ordered) out.records.push_back(table.records[r]);

  report.rows_out = out.size();
  out.provenance.clean_report = report;
  if (out.empty()) throw CleanError("cleaning dropped every row", report);
  return {std::move(out), report};
}

// ---------------------------------------------------------------------------
// AOI annotation

std::vector<AoiDefinition> aoi_definitions_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorKind::configuration, "AOI definitions must be a JSON array");
  std::vector<AoiDefinition> out;
  for (const auto& item : j) {
    const auto rect = item.at("rect").get<std::vector<double>>();
    if (rect.size() != 4) throw Error(ErrorKind::configuration, "AOI rect needs 4 numbers");
    AoiDefinition def;
    def.name = item.at("name").get<std::string>();
    def.question_id = item.at("question_id").get<std::string>();
    def.region = {rect[0], rect[1], rect[2], rect[3]};
    auto cat = parse_aoi_category(item.at("category").get<std::string>());
    if (!cat) throw Error(ErrorKind::configuration, "AOI '" + def.name + "' has unknown category");
    def.category = *cat;
    if (!(def.region.x1 > def.region.x0 && def.region.y1 > def.region.y0))
      throw Error(ErrorKind::configuration, "AOI '" + def.name + "' has non-positive area");
    out.push_back(std::move(def));
  }
  return out;
}

json aoi_definitions_to_json(const std::vector<AoiDefinition>& aois) {
  json out = json::array();
  for (const auto& a : aois) {
    out.push_back({{"name", a.name},
                   {"question_id", a.question_id},
                   {"rect", {a.region.x0, a.region.y0, a.region.x1, a.region.y1}},
                   {"category", to_string(a.category)}});
  }
  return out;
}

GazeTable annotate_aoi(const GazeTable& table, const std::vector<AoiDefinition>& aois,
                       const std::optional<AoiLabel>& fallback) {
  for (const auto& a : aois) {
    if (!(a.region.area() > 0.0))
      throw Error(ErrorKind::configuration, "AOI '" + a.name + "' has non-positive area");
  }
  const std::size_t qid = table.require(Field::question_id);
  const std::size_t gx = table.require(Field::gaze_x);
  const std::size_t gy = table.require(Field::gaze_y);

  std::unordered_map<std::string, std::vector<const AoiDefinition*>> by_question;
  for (const auto& a : aois) by_question[a.question_id].push_back(&a);

  GazeTable out = table;
  out.provenance.unannotated = std::make_shared<const GazeTable>(table);

  const std::string aoi_col = out.fields.name(Field::aoi);
  const std::string name_col = out.fields.name(Field::aoi_name);
  auto ensure_column = [&](const std::string& name) {
    if (auto idx = out.column_index(name)) return *idx;
    out.schema.push_back({name, ColumnKind::categorical});
    for (auto& rec : out.records) rec.cells.emplace_back(std::monostate{});
    return out.schema.size() - 1;
  };
  const std::size_t aoi_idx = ensure_column(aoi_col);
  const std::size_t name_idx = ensure_column(name_col);

  for (std::size_t r = 0; r < out.size(); ++r) {
    const std::string q = table.text(r, qid);
    const auto it = by_question.find(q);
    if (it == by_question.end() && !fallback)
      throw Error(ErrorKind::configuration, "question '" + q + "' has no AOIs and no default AOI");
    const auto x = table.number(r, gx);
    const auto y = table.number(r, gy);
    const AoiDefinition* hit = nullptr;
    if (it != by_question.end() && x && y) {
      for (const auto* def : it->second) {
        if (def->region.contains(*x, *y)) {
          hit = def;
          break;
        }
      }
    }
    AoiLabel label;
    if (hit) {
      label = {hit->name, hit->category};
    } else if (fallback) {
      label = *fallback;
    } else {
      throw Error(ErrorKind::configuration,
                  "row " + std::to_string(r) + " of question '" + q +
                      "' lies outside every AOI and no default AOI is declared");
    }
    out.records[r].cells[aoi_idx] = std::string(to_string(label.category));
    out.records[r].cells[name_idx] = label.name;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequences

const std::array<std::string_view, kFeatureDim>& feature_names() {
  static const std::array<std::string_view, kFeatureDim> kNames = {
      "fixation_duration_ms", "saccade_duration_ms", "gaze_x", "gaze_y"};
  return kNames;
}

std::map<SequenceKey, GazeSequence> sessionize(const GazeTable& table) {
  const std::size_t pid = table.require(Field::participant_id);
  const std::size_t qid = table.require(Field::question_id);
  const std::size_t ts = table.require(Field::timestamp_ms);
  const std::array<std::size_t, kFeatureDim> cols = {
      table.require(Field::fixation_duration_ms), table.require(Field::saccade_duration_ms),
      table.require(Field::gaze_x), table.require(Field::gaze_y)};
  const auto exp_col = table.field_index(Field::expertise);
  const auto aoi_col = table.field_index(Field::aoi);

  std::map<SequenceKey, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < table.size(); ++r)
    groups[{table.text(r, pid), table.text(r, qid)}].push_back(r);

  std::map<SequenceKey, GazeSequence> out;
  for (auto& [key, rows] : groups) {
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      return table.number(a, ts).value_or(0.0) < table.number(b, ts).value_or(0.0);
    });
    GazeSequence seq;
    seq.participant_id = key.participant_id;
    seq.question_id = key.question_id;
    if (exp_col) seq.expertise = parse_expertise(table.text(rows.front(), *exp_col));
    for (std::size_t r : rows) {
      FeatureVector f{};
      for (std::size_t k = 0; k < kFeatureDim; ++k) f[k] = table.number(r, cols[k]).value_or(0.0);
      seq.features.push_back(f);
      AoiCategory cat = AoiCategory::non_error;
      if (aoi_col) cat = parse_aoi_category(table.text(r, *aoi_col)).value_or(AoiCategory::non_error);
      seq.aoi.push_back(cat);
      seq.rows.push_back(r);
    }
    out.emplace(key, std::move(seq));
  }
  return out;
}

}  // namespace gazemine

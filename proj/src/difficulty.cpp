#include "gazemine/difficulty.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include "gazemine/rng.hpp"

namespace gazemine {

std::string_view to_string(DifficultyLevel l) {
  switch (l) {
    case DifficultyLevel::easy: return "easy";
    case DifficultyLevel::medium: return "medium";
    case DifficultyLevel::hard: return "hard";
  }
  return "easy";
}

std::string_view to_string(PromptVariant v) { return v == PromptVariant::total ? "total" : "none"; }

std::string_view to_string(ModuleSetting s) {
  switch (s) {
    case ModuleSetting::direct: return "direct";
    case ModuleSetting::h: return "h";
    case ModuleSetting::v: return "v";
    case ModuleSetting::hv: return "hv";
  }
  return "direct";
}

DifficultyLevel parse_difficulty(std::string_view text) {
  const std::string t = to_lower(trim(text));
  if (t == "easy") return DifficultyLevel::easy;
  if (t == "medium") return DifficultyLevel::medium;
  if (t == "hard") return DifficultyLevel::hard;
  throw Error(ErrorKind::validation, "unknown difficulty level '" + std::string(text) + "'");
}

PromptVariant parse_prompt_variant(std::string_view text) {
  const std::string t = to_lower(trim(text));
  if (t == "total" || t == "detailed") return PromptVariant::total;
  if (t == "none" || t == "brief") return PromptVariant::none;
  throw Error(ErrorKind::validation, "prompt variant must be total or none, got '" + std::string(text) + "'");
}

ModuleSetting parse_module_setting(std::string_view text) {
  const std::string t = to_lower(trim(text));
  if (t == "direct" || t == "directly") return ModuleSetting::direct;
  if (t == "h") return ModuleSetting::h;
  if (t == "v") return ModuleSetting::v;
  if (t == "hv" || t == "h+v") return ModuleSetting::hv;
  throw Error(ErrorKind::validation, "unknown module setting '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Questions

std::vector<QuestionItem> questions_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorKind::validation, "questions file must hold a JSON array");
  std::vector<QuestionItem> items;
  std::set<std::string> ids;
  std::map<DifficultyLevel, int> per_level;
  for (const auto& q : j) {
    QuestionItem item;
    try {
      item.question_id = q.at("question_id").get<std::string>();
      item.true_level = parse_difficulty(q.at("level").get<std::string>());
      item.raw_text = q.at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::validation, std::string("question record: ") + e.what());
    }
    if (!ids.insert(item.question_id).second)
      throw Error(ErrorKind::validation, "duplicate question id " + item.question_id);
    ++per_level[item.true_level];
    items.push_back(std::move(item));
  }
  if (items.size() != 12) throw Error(ErrorKind::validation, "expected 12 questions, got " + std::to_string(items.size()));
  for (DifficultyLevel l : {DifficultyLevel::easy, DifficultyLevel::medium, DifficultyLevel::hard})
    if (per_level[l] != 4)
      throw Error(ErrorKind::validation, "expected 4 " + std::string(to_string(l)) + " questions, got " +
                                             std::to_string(per_level[l]));
  return items;
}

json questions_to_json(const std::vector<QuestionItem>& items) {
  json arr = json::array();
  for (const auto& q : items)
    arr.push_back({{"question_id", q.question_id}, {"level", to_string(q.true_level)}, {"text", q.raw_text}});
  return arr;
}

std::vector<QuestionItem> load_questions(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  try {
    return questions_from_json(j);
  } catch (const Error& e) {
    throw LoadError(path.string(), 0, 0, e.what());
  }
}

std::vector<QuestionItem> builtin_questions() {
  static const char* kText = R"([
  {"question_id": "A1", "level": "easy", "text": "1. [Easy] A loop is meant to sum every element of an array but the result is always short by the last element. Find the defect."},
  {"question_id": "A2", "level": "medium", "text": "2. [Medium] A function that reverses a singly linked list loses every node after the head. Locate the faulty pointer update."},
  {"question_id": "A3", "level": "hard", "text": "3. [Hard] A recursive permutation generator produces duplicates when the input contains repeated characters. Explain which pruning step is missing."},
  {"question_id": "B1", "level": "hard", "text": "Question 4 (hard): A binary search over a rotated sorted array never terminates for some inputs. Identify the boundary condition that fails."},
  {"question_id": "B2", "level": "medium", "text": "Question 5 (medium): A word counter reports one extra word whenever a line ends with a space. Find where the count is incremented."},
  {"question_id": "B3", "level": "easy", "text": "Question 6 (easy): A temperature converter prints 32 for every input. Find the integer division that discards the fraction."},
  {"question_id": "C1", "level": "medium", "text": "C1 - MEDIUM: A stack-based bracket matcher accepts the string ')(' as balanced. Point out the missing check."},
  {"question_id": "C2", "level": "hard", "text": "C2 - HARD: A memoized Fibonacci function returns wrong values after the first call because the cache is shared incorrectly. Describe the fix."},
  {"question_id": "C3", "level": "easy", "text": "C3 - EASY: A function that returns the maximum of a list fails when all values are negative. Find the bad initial value."},
  {"question_id": "D1", "level": "easy", "text": "#10 easy: A string comparison uses == on two character arrays and always reports a mismatch. Explain the defect."},
  {"question_id": "D2", "level": "hard", "text": "#11 hard: A breadth-first search on a grid visits some cells twice and overflows its queue. Find where visited cells should be marked."},
  {"question_id": "D3", "level": "medium", "text": "#12 medium: A matrix transpose in place swaps every pair twice and leaves the matrix unchanged. Fix the inner loop bound."}
])";
  return questions_from_json(json::parse(kText));
}

std::map<std::string, std::string> question_bands(const std::vector<QuestionItem>& items) {
  std::map<std::string, std::string> out;
  for (const auto& q : items) out[q.question_id] = std::string(to_string(q.true_level));
  return out;
}

// ---------------------------------------------------------------------------
// Anonymization

std::vector<std::string> default_lexicon() {
  return {"easy",  "medium",   "hard",         "simple",    "moderate",        "difficult", "tricky",
          "basic", "advanced", "intermediate", "beginner",  "challenging",     "trivial",   "difficulty",
          "level", "novice",   "expert-level", "easiest",   "hardest",         "harder",    "easier"};
}

namespace {

std::string regex_escape(const std::string& s) {
  static const std::regex special(R"([.^$|()\[\]{}*+?\\-])");
  return std::regex_replace(s, special, R"(\$&)");
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

std::vector<std::string> lexicon_hits(std::string_view text, const std::vector<std::string>& lexicon) {
  std::vector<std::string> hits;
  const std::string lower = to_lower(text);
  for (const auto& word : lexicon) {
    const std::string w = to_lower(word);
    for (std::size_t pos = lower.find(w); pos != std::string::npos; pos = lower.find(w, pos + 1)) {
      const bool left = pos == 0 || !is_word_char(lower[pos - 1]);
      const bool right = pos + w.size() >= lower.size() || !is_word_char(lower[pos + w.size()]);
      if (left && right) {
        hits.push_back(word);
        break;
      }
    }
  }
  return hits;
}

std::string anonymize_text(std::string_view text, const std::vector<std::string>& question_ids,
                           const std::vector<std::string>& lexicon) {
  static const std::regex numbering(R"(^\s*(?:(?:question|problem|task|exercise|q)\s*)?#?\d+\s*[.):\-]?\s*)",
                                    std::regex::icase);
  static const std::regex empty_brackets(R"(\(\s*\)|\[\s*\]|\{\s*\})");
  static const std::regex leading_punct(R"(^[\s:.\-]+)");

  std::vector<std::regex> words;
  for (const auto& id : question_ids)
    words.emplace_back(R"(\b)" + regex_escape(id) + R"(\b\s*[:\-]?)", std::regex::icase);
  for (const auto& w : lexicon)
    words.emplace_back(R"(\b)" + regex_escape(w) + R"(\b\s*[:\-]?)", std::regex::icase);

  std::string s(text);
  for (int pass = 0; pass < 16; ++pass) {
    std::string next = std::regex_replace(s, numbering, "");
    for (const auto& re : words) next = std::regex_replace(next, re, "");
    next = std::regex_replace(next, empty_brackets, "");
    next = std::regex_replace(next, leading_punct, "");
    next = trim(collapse_whitespace(next));
    if (next == s) break;
    s = std::move(next);
  }
  return s;
}

std::vector<QuestionItem> anonymize(std::vector<QuestionItem> items, std::uint64_t seed,
                                    const std::vector<std::string>& lexicon) {
  std::vector<std::string> ids;
  for (const auto& q : items) ids.push_back(q.question_id);
  std::set<std::string> used;
  for (auto& q : items) {
    q.anonymized_text = anonymize_text(q.raw_text, ids, lexicon);
    for (std::uint64_t salt = 0;; ++salt) {
      const std::string alias =
          "Q-" + digest_hex(std::to_string(seed) + ":" + q.question_id + ":" + std::to_string(salt)).substr(0, 4);
      if (used.insert(alias).second) {
        q.alias = alias;
        break;
      }
    }
  }
  Rng rng(mix_seed(seed, "question-order"));
  rng.shuffle(items);
  return items;
}

// ---------------------------------------------------------------------------
// Prompts

GazeArtifacts gaze_artifacts(const GazeTable& table, const std::vector<QuestionItem>& anonymized) {
  const std::size_t qcol = table.require(Field::question_id);
  std::map<std::string, std::string> alias_of;
  for (const auto& q : anonymized) alias_of[q.question_id] = q.alias;

  std::map<std::string, GazeTable> per_question;
  for (const auto& rec : table.records) {
    const std::string qid = std::holds_alternative<std::string>(rec.cells[qcol]) ? std::get<std::string>(rec.cells[qcol]) : "";
    const auto it = alias_of.find(qid);
    if (it == alias_of.end()) continue;
    auto [pos, inserted] = per_question.try_emplace(qid);
    if (inserted) {
      pos->second.schema = table.schema;
      pos->second.fields = table.fields;
    }
    GazeRecord r = rec;
    r.cells[qcol] = it->second;
    pos->second.records.push_back(std::move(r));
  }

  GazeArtifacts a;
  a.raw_header = raw_header(table);
  for (const auto& [qid, sub] : per_question) {
    a.horizontal[qid] = horizontal_lines(sub);
    a.vertical[qid] = vertical_lines_by_sequence(sub);
    a.raw[qid] = raw_lines(sub);
  }
  return a;
}

PromptBundle build_difficulty_prompt(const std::vector<QuestionItem>& anonymized, PromptVariant variant,
                                     ModuleSetting setting, const GazeArtifacts* artifacts,
                                     const TemplateSet& templates, const DifficultyPromptOptions& opts) {
  if ((setting != ModuleSetting::direct) && artifacts == nullptr)
    throw Error(ErrorKind::configuration,
                "module setting " + std::string(to_string(setting)) + " needs segmentation payloads from gaze data");
  std::string questions;
  for (const auto& q : anonymized) {
    if (q.alias.empty()) throw Error(ErrorKind::precondition, "questions must be anonymized first");
    questions += q.alias + ": " + q.anonymized_text + "\n";
  }

  std::vector<std::string> lines;
  std::string preamble;
  if (artifacts) {
    auto append = [&](const std::map<std::string, std::vector<std::string>>& by_q) {
      for (const auto& q : anonymized) {
        const auto it = by_q.find(q.question_id);
        if (it != by_q.end()) lines.insert(lines.end(), it->second.begin(), it->second.end());
      }
    };
    switch (setting) {
      case ModuleSetting::direct:
        preamble = "Gaze data (CSV):\n" + artifacts->raw_header;
        append(artifacts->raw);
        break;
      case ModuleSetting::h:
        preamble = "Gaze data, one row object per line:";
        append(artifacts->horizontal);
        break;
      case ModuleSetting::v:
        preamble = "Gaze data, one column pairing per line:";
        append(artifacts->vertical);
        break;
      case ModuleSetting::hv:
        preamble = "Gaze data, row objects followed by column pairings:";
        append(artifacts->horizontal);
        append(artifacts->vertical);
        break;
    }
  }

  PromptBundle b;
  b.slot = variant == PromptVariant::total ? "difficulty_total" : "difficulty_none";
  b.stage = setting == ModuleSetting::h    ? Stage::horizontal
            : setting == ModuleSetting::v  ? Stage::vertical
            : setting == ModuleSetting::hv ? Stage::merged
                                           : Stage::direct;
  const std::string& tpl = templates.get(b.slot);
  if (lines.empty()) {
    b.chunks.push_back(render_template(tpl, {{"QUESTIONS", questions}, {"DATA", ""}}));
    return b;
  }
  BundleOptions bo = opts.bundle;
  bo.preamble = preamble;
  bo.budget_chars = bo.budget_chars > questions.size() + 512 ? bo.budget_chars - questions.size() : 512;
  for (auto& data : chunk_payloads(lines, bo))
    b.chunks.push_back(render_template(tpl, {{"QUESTIONS", questions}, {"DATA", data + "\n"}}));
  return b;
}

std::map<std::string, DifficultyLevel> parse_difficulty_answer(std::string_view text) {
  static const std::regex line_re(R"((Q-[0-9a-f]{4})\b[^A-Za-z0-9]*(easy|medium|hard)\b)", std::regex::icase);
  std::map<std::string, DifficultyLevel> out;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), line_re); it != std::sregex_iterator(); ++it) {
    std::string alias = (*it)[1].str();
    alias[0] = 'Q';
    for (std::size_t i = 2; i < alias.size(); ++i) alias[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(alias[i])));
    out.try_emplace(alias, parse_difficulty((*it)[2].str()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runs and grid

std::size_t PredictionRun::parsed() const {
  return static_cast<std::size_t>(
      std::count_if(predictions.begin(), predictions.end(), [](const auto& kv) { return kv.second.has_value(); }));
}

std::size_t PredictionRun::correct(const std::vector<QuestionItem>& items) const {
  std::size_t n = 0;
  for (const auto& q : items) {
    const auto it = predictions.find(q.question_id);
    if (it != predictions.end() && it->second == q.true_level) ++n;
  }
  return n;
}

double PredictionRun::accuracy(const std::vector<QuestionItem>& items) const {
  if (items.empty()) return 0.0;
  return static_cast<double>(correct(items)) / static_cast<double>(items.size());
}

json PredictionRun::to_json() const {
  json preds = json::object();
  for (const auto& [q, l] : predictions) preds[q] = l ? json(to_string(*l)) : json(nullptr);
  json j = {{"model_id", model_id},
            {"prompt_variant", to_string(variant)},
            {"module_setting", to_string(setting)},
            {"repetition", repetition},
            {"predictions", preds}};
  if (error) j["error"] = *error;
  return j;
}

PredictionRun PredictionRun::from_json(const json& j) {
  PredictionRun r;
  r.model_id = j.at("model_id").get<std::string>();
  r.variant = parse_prompt_variant(j.at("prompt_variant").get<std::string>());
  r.setting = parse_module_setting(j.at("module_setting").get<std::string>());
  r.repetition = j.at("repetition").get<int>();
  for (const auto& [q, l] : j.at("predictions").items())
    r.predictions[q] = l.is_null() ? std::nullopt : std::optional(parse_difficulty(l.get<std::string>()));
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  return r;
}

std::string difficulty_row_label(ModuleSetting s, PromptVariant v) {
  std::string prefix;
  switch (s) {
    case ModuleSetting::direct: prefix = "Directly"; break;
    case ModuleSetting::h: prefix = "h"; break;
    case ModuleSetting::v: prefix = "v"; break;
    case ModuleSetting::hv: prefix = "h+v"; break;
  }
  return prefix + "(" + std::string(to_string(v)) + ")";
}

const std::vector<DifficultyCell>& difficulty_cells() {
  static const std::vector<DifficultyCell> cells = {
      {ModuleSetting::direct, PromptVariant::total}, {ModuleSetting::hv, PromptVariant::total},
      {ModuleSetting::h, PromptVariant::total},      {ModuleSetting::v, PromptVariant::total},
      {ModuleSetting::hv, PromptVariant::none},      {ModuleSetting::h, PromptVariant::none},
      {ModuleSetting::v, PromptVariant::none}};
  return cells;
}

DifficultyResult run_and_score(const std::vector<QuestionItem>& anonymized, const std::vector<DifficultyCell>& cells,
                               const std::vector<Gateway*>& gateways, const TemplateSet& templates,
                               const GazeArtifacts* artifacts, int repetitions, const DifficultyPromptOptions& opts) {
  if (repetitions < 1) throw Error(ErrorKind::validation, "repetitions must be at least 1");
  std::map<std::string, std::string> question_of;
  for (const auto& q : anonymized) question_of[q.alias] = q.question_id;

  DifficultyResult result;
  result.grid.corner = "setting";
  result.grid.columns = grid_columns();
  for (const auto& c : cells) result.grid.rows.push_back(difficulty_row_label(c.setting, c.variant));

  for (const auto& cell : cells) {
    const PromptBundle bundle = build_difficulty_prompt(anonymized, cell.variant, cell.setting, artifacts, templates, opts);
    for (Gateway* g : gateways) {
      std::vector<PredictionRun> runs(static_cast<std::size_t>(repetitions));
      for (int r = 0; r < repetitions; ++r) {
        auto& run = runs[static_cast<std::size_t>(r)];
        run.model_id = g->spec().model_id;
        run.variant = cell.variant;
        run.setting = cell.setting;
        run.repetition = r;
        for (const auto& q : anonymized) run.predictions[q.question_id] = std::nullopt;
      }
      try {
        const RepeatedResult rr = g->run_repeated(bundle, repetitions);
        // Responses arrive ordered by (run, chunk): the first chunk that
        // answers a question decides it.
        for (const auto& resp : rr.responses) {
          auto& run = runs[static_cast<std::size_t>(resp.run_index)];
          for (const auto& [alias, level] : parse_difficulty_answer(resp.text)) {
            const auto q = question_of.find(alias);
            if (q == question_of.end()) continue;
            auto& slot = run.predictions[q->second];
            if (!slot) slot = level;
          }
        }
        for (const auto& f : rr.failures) {
          auto& run = runs[static_cast<std::size_t>(f.run_index)];
          const std::string msg = "chunk " + std::to_string(f.chunk_index) + ": " + f.message;
          run.error = run.error ? *run.error + "; " + msg : msg;
        }
      } catch (const Error& e) {
        for (auto& run : runs) run.error = e.what();
      }

      double sum = 0.0;
      bool any_parsed = false;
      for (const auto& run : runs) {
        sum += run.accuracy(anonymized);
        any_parsed = any_parsed || run.parsed() > 0;
      }
      if (any_parsed)
        result.grid.set(difficulty_row_label(cell.setting, cell.variant), model_label(g->spec().model_id),
                        sum / static_cast<double>(repetitions));
      result.runs.insert(result.runs.end(), runs.begin(), runs.end());
    }
  }
  return result;
}

}  // namespace gazemine

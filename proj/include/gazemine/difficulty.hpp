#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gazemine/co_eval.hpp"
#include "gazemine/gaze_data.hpp"
#include "gazemine/llm_gateway.hpp"
#include "gazemine/segmentation.hpp"

namespace gazemine {

enum class DifficultyLevel { easy, medium, hard };
enum class PromptVariant { total, none };
enum class ModuleSetting { direct, h, v, hv };

std::string_view to_string(DifficultyLevel l);
std::string_view to_string(PromptVariant v);
std::string_view to_string(ModuleSetting s);
DifficultyLevel parse_difficulty(std::string_view text);
PromptVariant parse_prompt_variant(std::string_view text);
ModuleSetting parse_module_setting(std::string_view text);

struct QuestionItem {
  std::string question_id;
  DifficultyLevel true_level = DifficultyLevel::easy;
  std::string raw_text;
  std::string anonymized_text;  // filled by anonymize
  std::string alias;            // "Q-xxxx", filled by anonymize

  bool operator==(const QuestionItem&) const = default;
};

/// Questions file: JSON array of {question_id, level, text}. Requires 12
/// items, four per level, unique ids.
std::vector<QuestionItem> questions_from_json(const json& j);
json questions_to_json(const std::vector<QuestionItem>& items);
std::vector<QuestionItem> load_questions(const std::filesystem::path& path);
/// The bundled programming question set (same content as data/questions.json).
std::vector<QuestionItem> builtin_questions();

/// Question id -> level name, for per-band anomaly rates.
std::map<std::string, std::string> question_bands(const std::vector<QuestionItem>& items);

/// Words removed from question texts, matched case-insensitively on word
/// boundaries together with a trailing ':' or '-'.
std::vector<std::string> default_lexicon();

/// Lexicon words still present in a text (empty when clean).
std::vector<std::string> lexicon_hits(std::string_view text, const std::vector<std::string>& lexicon);

/// Removes lexicon words, question ids and sequential numbering from each
/// text, assigns a seed-derived alias per question and shuffles the
/// presentation order.
std::vector<QuestionItem> anonymize(std::vector<QuestionItem> items, std::uint64_t seed,
                                    const std::vector<std::string>& lexicon = default_lexicon());

/// Cleans one text. Applying it twice gives the same result.
std::string anonymize_text(std::string_view text, const std::vector<std::string>& question_ids,
                           const std::vector<std::string>& lexicon);

/// Segmentation payloads per question, with question ids replaced by the
/// question aliases so the data carries no ordering cue.
struct GazeArtifacts {
  std::map<std::string, std::vector<std::string>> horizontal;  // question id -> lines
  std::map<std::string, std::vector<std::string>> vertical;
  std::map<std::string, std::vector<std::string>> raw;
  std::string raw_header;
};

GazeArtifacts gaze_artifacts(const GazeTable& table, const std::vector<QuestionItem>& anonymized);

struct DifficultyPromptOptions {
  BundleOptions bundle;
};

/// Every chunk lists all questions. H/V settings need artifacts; the direct
/// setting attaches raw rows when artifacts are given.
PromptBundle build_difficulty_prompt(const std::vector<QuestionItem>& anonymized, PromptVariant variant,
                                     ModuleSetting setting, const GazeArtifacts* artifacts,
                                     const TemplateSet& templates, const DifficultyPromptOptions& opts = {});

/// Alias -> level, first match per alias wins.
std::map<std::string, DifficultyLevel> parse_difficulty_answer(std::string_view text);

struct PredictionRun {
  std::string model_id;
  PromptVariant variant = PromptVariant::total;
  ModuleSetting setting = ModuleSetting::direct;
  int repetition = 0;
  std::map<std::string, std::optional<DifficultyLevel>> predictions;  // question id -> level or unparsed
  std::optional<std::string> error;

  std::size_t parsed() const;
  std::size_t correct(const std::vector<QuestionItem>& items) const;
  double accuracy(const std::vector<QuestionItem>& items) const;  // correct / item count

  json to_json() const;
  static PredictionRun from_json(const json& j);
  bool operator==(const PredictionRun&) const = default;
};

struct DifficultyCell {
  ModuleSetting setting;
  PromptVariant variant;
};

/// Table-style row label: "Directly(total)", "h+v(none)", ...
std::string difficulty_row_label(ModuleSetting s, PromptVariant v);
const std::vector<DifficultyCell>& difficulty_cells();  // the seven table rows in order

struct DifficultyResult {
  ExperimentGrid grid;
  std::vector<PredictionRun> runs;
};

/// Runs every cell on every model `repetitions` times. A cell's value is the
/// mean per-repetition accuracy; it is NA when no repetition produced a
/// parseable answer.
DifficultyResult run_and_score(const std::vector<QuestionItem>& anonymized, const std::vector<DifficultyCell>& cells,
                               const std::vector<Gateway*>& gateways, const TemplateSet& templates,
                               const GazeArtifacts* artifacts, int repetitions = 5,
                               const DifficultyPromptOptions& opts = {});

}  // namespace gazemine

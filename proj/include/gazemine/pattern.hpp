#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gazemine/json_io.hpp"

namespace gazemine {

/// Analysis module a pattern came from. `direct` is the no-module baseline
/// (raw table straight to the model); `merged` is the H+V merge stage.
enum class Stage { direct, horizontal, vertical, merged };

enum class PromptLevel { detailed, semi_detailed, brief };

enum class FrequencyClass { high, low };

std::string_view to_string(Stage stage);        // direct / h / v / hv
std::string_view to_string(PromptLevel level);  // detailed / semi_detailed / brief
std::string_view to_string(FrequencyClass fc);  // high / low
Stage parse_stage(std::string_view text);
PromptLevel parse_prompt_level(std::string_view text);

/// Table-style label of a prompt level: total / half / none.
std::string_view level_label(PromptLevel level);

inline constexpr PromptLevel kAllLevels[] = {PromptLevel::detailed, PromptLevel::semi_detailed,
                                             PromptLevel::brief};

/// Lowercase, strip leading enumeration markers and trailing punctuation,
/// collapse whitespace.
std::string normalize_pattern_text(std::string_view text);

/// Content id of a pattern statement: digest of its normalized text.
std::string pattern_id(std::string_view text);

struct BehavioralPattern {
  std::string id;
  std::string text;  // statement exactly as it appeared in the response
  Stage stage = Stage::direct;
  PromptLevel level = PromptLevel::detailed;
  std::string model_id;
  int run_index = 0;
  std::optional<FrequencyClass> frequency;

  json to_json() const;
  static BehavioralPattern from_json(const json& j);
  bool operator==(const BehavioralPattern&) const = default;
};

struct CellKey {
  Stage stage = Stage::direct;
  PromptLevel level = PromptLevel::detailed;
  std::string model_id;  // or "merged" for cross-model sets

  auto operator<=>(const CellKey&) const = default;
  /// File stem: <stage>_<prompt>_<model>.
  std::string file_stem() const;
};

struct PatternSet {
  CellKey key;
  std::vector<BehavioralPattern> patterns;
  bool deduped = false;

  bool operator==(const PatternSet&) const = default;
};

std::vector<json> patterns_to_json(const std::vector<BehavioralPattern>& patterns);
std::vector<BehavioralPattern> patterns_from_json(const std::vector<json>& records);

}  // namespace gazemine

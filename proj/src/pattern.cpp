#include "gazemine/pattern.hpp"

#include <cctype>

#include "gazemine/common.hpp"

namespace gazemine {

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::direct: return "direct";
    case Stage::horizontal: return "h";
    case Stage::vertical: return "v";
    case Stage::merged: return "hv";
  }
  return "direct";
}

std::string_view to_string(PromptLevel level) {
  switch (level) {
    case PromptLevel::detailed: return "detailed";
    case PromptLevel::semi_detailed: return "semi_detailed";
    case PromptLevel::brief: return "brief";
  }
  return "detailed";
}

std::string_view to_string(FrequencyClass fc) { return fc == FrequencyClass::high ? "high" : "low"; }

Stage parse_stage(std::string_view text) {
  const std::string t = to_lower(text);
  if (t == "direct" || t == "directly") return Stage::direct;
  if (t == "h" || t == "horizontal") return Stage::horizontal;
  if (t == "v" || t == "vertical") return Stage::vertical;
  if (t == "hv" || t == "h+v" || t == "hv_merge" || t == "merged") return Stage::merged;
  throw Error(ErrorKind::validation, "unknown stage '" + std::string(text) + "'");
}

PromptLevel parse_prompt_level(std::string_view text) {
  const std::string t = to_lower(text);
  if (t == "detailed" || t == "total") return PromptLevel::detailed;
  if (t == "semi_detailed" || t == "semi-detailed" || t == "half") return PromptLevel::semi_detailed;
  if (t == "brief" || t == "none") return PromptLevel::brief;
  throw Error(ErrorKind::validation, "unknown prompt level '" + std::string(text) + "'");
}

std::string_view level_label(PromptLevel level) {
  switch (level) {
    case PromptLevel::detailed: return "total";
    case PromptLevel::semi_detailed: return "half";
    case PromptLevel::brief: return "none";
  }
  return "total";
}

std::string normalize_pattern_text(std::string_view text) {
  std::string s = to_lower(collapse_whitespace(text));
  // Leading enumeration: "1.", "12)", "-", "*", "•", "(3)".
  std::size_t i = 0;
  for (;;) {
    const std::size_t start = i;
    while (i < s.size() && s[i] == ' ') ++i;
    if (i < s.size() && (s[i] == '-' || s[i] == '*')) {
      ++i;
    } else if (s.compare(i, 3, "\xE2\x80\xA2") == 0) {
      i += 3;
    } else {
      std::size_t j = i;
      if (j < s.size() && s[j] == '(') ++j;
      const std::size_t digits = j;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      // "2.5" is a number, not a marker: the marker must end the token.
      if (j > digits && j < s.size() && (s[j] == '.' || s[j] == ')' || s[j] == ':') &&
          (j + 1 == s.size() || s[j + 1] == ' ')) {
        i = j + 1;
      }
    }
    if (i == start) break;
  }
  s = s.substr(i);
  while (!s.empty() && (std::ispunct(static_cast<unsigned char>(s.back())) || s.back() == ' '))
    s.pop_back();
  return trim(s);
}

std::string pattern_id(std::string_view text) { return digest_hex(normalize_pattern_text(text)); }

json BehavioralPattern::to_json() const {
  json j = {{"id", id},
            {"text", text},
            {"stage", to_string(stage)},
            {"prompt_level", to_string(level)},
            {"model_id", model_id},
            {"run_index", run_index}};
  if (frequency) j["frequency_class"] = to_string(*frequency);
  return j;
}

BehavioralPattern BehavioralPattern::from_json(const json& j) {
  BehavioralPattern p;
  p.id = j.at("id").get<std::string>();
  p.text = j.at("text").get<std::string>();
  p.stage = parse_stage(j.at("stage").get<std::string>());
  p.level = parse_prompt_level(j.at("prompt_level").get<std::string>());
  p.model_id = j.at("model_id").get<std::string>();
  p.run_index = j.at("run_index").get<int>();
  if (j.contains("frequency_class")) {
    const auto fc = j.at("frequency_class").get<std::string>();
    if (fc == "high") {
      p.frequency = FrequencyClass::high;
    } else if (fc == "low") {
      p.frequency = FrequencyClass::low;
    } else {
      throw Error(ErrorKind::validation, "unknown frequency class '" + fc + "'");
    }
  }
  return p;
}

std::string CellKey::file_stem() const {
  return std::string(to_string(stage)) + "_" + std::string(to_string(level)) + "_" + model_id;
}

std::vector<json> patterns_to_json(const std::vector<BehavioralPattern>& patterns) {
  std::vector<json> out;
  out.reserve(patterns.size());
  for (const auto& p : patterns) out.push_back(p.to_json());
  return out;
}

std::vector<BehavioralPattern> patterns_from_json(const std::vector<json>& records) {
  std::vector<BehavioralPattern> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(BehavioralPattern::from_json(r));
  return out;
}

}  // namespace gazemine

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gazemine/gaze_data.hpp"
#include "gazemine/llm_gateway.hpp"
#include "gazemine/pattern.hpp"
#include "gazemine/segmentation.hpp"

namespace gazemine {

/// Serialized inputs of every analysis module, computed once per table.
struct MiningInputs {
  std::vector<std::string> horizontal;
  std::vector<std::string> vertical;
  std::vector<std::string> raw;
  std::string raw_header;
};

MiningInputs mining_inputs(const GazeTable& table);

struct MatchOptions {
  /// When set, two statements also count as the same pattern if the Jaccard
  /// index of their normalized token sets reaches `jaccard`.
  bool similarity = false;
  double jaccard = 0.8;
};

double token_jaccard(const std::string& a, const std::string& b);
bool same_pattern(const BehavioralPattern& a, const BehavioralPattern& b, const MatchOptions& opts);

struct MiningOptions {
  int n_runs = 10;
  BundleOptions bundle;
  MatchOptions match;
};

/// Runs one (stage, level) cell for one model and returns the union of parsed
/// patterns over all runs (not deduplicated). The merged stage runs the
/// horizontal stage, then the vertical stage carrying the deduplicated
/// horizontal patterns, then the merge prompt over both pattern sets.
PatternSet mine_cell(const MiningInputs& inputs, Stage stage, PromptLevel level, Gateway& gateway,
                     const TemplateSet& templates, const MiningOptions& opts = {},
                     std::vector<std::string>* warnings = nullptr);

/// Keeps the first occurrence of each pattern (earliest run index, then input
/// order); output order follows the kept occurrences.
PatternSet dedupe(const PatternSet& set, const MatchOptions& opts = {});

/// Labels each pattern high when it occurs in at least two of the model sets
/// (same stage and level), low otherwise. Needs >= 2 deduplicated sets.
std::vector<PatternSet> classify_frequency(const std::vector<PatternSet>& sets,
                                           const MatchOptions& opts = {});

inline constexpr double kHighSampleRate = 0.30;
inline constexpr double kLowSampleRate = 0.10;

/// ceil(rate * n) computed without floating error at exact multiples.
std::size_t sample_size(std::size_t n, double rate);

/// Draws ceil(0.3 h) high and ceil(0.1 l) low patterns uniformly without
/// replacement. Picks keep their input order, high before low.
PatternSet sample_composite(const std::vector<BehavioralPattern>& labeled, std::uint64_t seed);

/// Cross-model consolidation of several deduplicated sets through the
/// "inductive" template.
PatternSet inductive_summary(const std::vector<PatternSet>& sets, Gateway& gateway,
                             const TemplateSet& templates, const MiningOptions& opts = {});

struct GridSpec {
  std::vector<Stage> stages = {Stage::direct, Stage::merged, Stage::horizontal, Stage::vertical};
  std::vector<PromptLevel> levels = {PromptLevel::detailed, PromptLevel::semi_detailed, PromptLevel::brief};
  /// The no-module baseline is mined once, at this level.
  PromptLevel direct_level = PromptLevel::detailed;
};

struct GridResult {
  std::map<CellKey, PatternSet> cells;  // deduplicated and labeled
  PatternSet composite;                 // concatenated per-cell samples
  std::vector<std::string> warnings;
};

/// The full mining grid: every (stage, level) for every model, dedupe,
/// frequency classification across models, and per-cell composite sampling.
GridResult run_mining_grid(const MiningInputs& inputs, const GridSpec& grid,
                           std::vector<Gateway*> gateways, const TemplateSet& templates,
                           const MiningOptions& opts, std::uint64_t seed);

}  // namespace gazemine

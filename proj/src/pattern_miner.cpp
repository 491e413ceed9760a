#include "gazemine/pattern_miner.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "gazemine/rng.hpp"

namespace gazemine {

MiningInputs mining_inputs(const GazeTable& table) {
  MiningInputs in;
  in.horizontal = horizontal_lines(table);
  in.vertical = vertical_lines_by_sequence(table);
  in.raw = raw_lines(table);
  in.raw_header = raw_header(table);
  return in;
}

namespace {

std::set<std::string> token_set(const std::string& text) {
  std::set<std::string> out;
  std::istringstream ss(normalize_pattern_text(text));
  std::string tok;
  while (ss >> tok) out.insert(tok);
  return out;
}

std::string pattern_line(const BehavioralPattern& p) {
  return "- [" + p.id + "] (" + std::string(to_string(p.stage)) + ") " + p.text;
}

void note_failures(const RepeatedResult& r, const std::string& where, std::vector<std::string>* warnings) {
  if (!warnings) return;
  for (const auto& f : r.failures) {
    warnings->push_back(where + ": run " + std::to_string(f.run_index) + " chunk " +
                        std::to_string(f.chunk_index) + " failed: " + f.message);
  }
}

std::vector<BehavioralPattern> run_stage(const PromptBundle& bundle, Stage stage, PromptLevel level,
                                         Gateway& gateway, const MiningOptions& opts,
                                         std::vector<std::string>* warnings) {
  const RepeatedResult r = gateway.run_repeated(bundle, opts.n_runs);
  note_failures(r, gateway.spec().model_id + " " + bundle.slot, warnings);
  std::vector<BehavioralPattern> out;
  for (const auto& resp : r.responses) {
    for (auto& p : parse_patterns(resp, warnings)) {
      p.stage = stage;
      p.level = level;
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace

double token_jaccard(const std::string& a, const std::string& b) {
  const auto ta = token_set(a);
  const auto tb = token_set(b);
  if (ta.empty() && tb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : ta) inter += tb.count(t);
  return static_cast<double>(inter) / static_cast<double>(ta.size() + tb.size() - inter);
}

bool same_pattern(const BehavioralPattern& a, const BehavioralPattern& b, const MatchOptions& opts) {
  if (a.id == b.id) return true;
  return opts.similarity && token_jaccard(a.text, b.text) >= opts.jaccard;
}

PatternSet mine_cell(const MiningInputs& inputs, Stage stage, PromptLevel level, Gateway& gateway,
                     const TemplateSet& templates, const MiningOptions& opts,
                     std::vector<std::string>* warnings) {
  PatternSet set;
  set.key = {stage, level, gateway.spec().model_id};
  switch (stage) {
    case Stage::direct: {
      BundleOptions b = opts.bundle;
      b.preamble = inputs.raw_header;
      const auto bundle = build_bundle(inputs.raw, stage, level, {}, templates, b);
      set.patterns = run_stage(bundle, stage, level, gateway, opts, warnings);
      break;
    }
    case Stage::horizontal:
    case Stage::vertical: {
      const auto& lines = stage == Stage::horizontal ? inputs.horizontal : inputs.vertical;
      const auto bundle = build_bundle(lines, stage, level, {}, templates, opts.bundle);
      set.patterns = run_stage(bundle, stage, level, gateway, opts, warnings);
      break;
    }
    case Stage::merged: {
      PatternSet h{{Stage::horizontal, level, set.key.model_id}, {}, false};
      h.patterns = run_stage(build_bundle(inputs.horizontal, Stage::horizontal, level, {}, templates, opts.bundle),
                             Stage::horizontal, level, gateway, opts, warnings);
      h = dedupe(h, opts.match);
      if (h.patterns.empty())
        throw Error(ErrorKind::empty_result, "merge stage: horizontal stage produced no patterns");

      PatternSet v{{Stage::vertical, level, set.key.model_id}, {}, false};
      v.patterns = run_stage(build_bundle(inputs.vertical, Stage::vertical, level, h.patterns, templates, opts.bundle),
                             Stage::vertical, level, gateway, opts, warnings);
      v = dedupe(v, opts.match);
      if (v.patterns.empty())
        throw Error(ErrorKind::empty_result, "merge stage: vertical stage produced no patterns");

      std::vector<BehavioralPattern> carried = h.patterns;
      carried.insert(carried.end(), v.patterns.begin(), v.patterns.end());
      std::vector<std::string> lines;
      lines.reserve(carried.size());
      for (const auto& p : carried) lines.push_back(pattern_line(p));
      const auto bundle = build_bundle(lines, Stage::merged, level, carried, templates, opts.bundle);
      set.patterns = run_stage(bundle, Stage::merged, level, gateway, opts, warnings);
      break;
    }
  }
  return set;
}

PatternSet dedupe(const PatternSet& set, const MatchOptions& opts) {
  std::vector<std::size_t> order(set.patterns.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return set.patterns[a].run_index < set.patterns[b].run_index;
  });

  PatternSet out;
  out.key = set.key;
  out.deduped = true;
  std::set<std::string> ids;
  for (std::size_t i : order) {
    const auto& p = set.patterns[i];
    if (ids.count(p.id)) continue;
    if (opts.similarity &&
        std::any_of(out.patterns.begin(), out.patterns.end(),
                    [&](const BehavioralPattern& q) { return same_pattern(p, q, opts); }))
      continue;
    ids.insert(p.id);
    out.patterns.push_back(p);
  }
  return out;
}

std::vector<PatternSet> classify_frequency(const std::vector<PatternSet>& sets, const MatchOptions& opts) {
  if (sets.size() < 2)
    throw Error(ErrorKind::precondition, "frequency classification needs at least two model sets");
  for (const auto& s : sets) {
    if (!s.deduped)
      throw Error(ErrorKind::precondition, "frequency classification needs deduplicated sets (" +
                                               s.key.file_stem() + ")");
    if (s.key.stage != sets.front().key.stage || s.key.level != sets.front().key.level)
      throw Error(ErrorKind::validation, "frequency classification mixes settings: " +
                                             sets.front().key.file_stem() + " vs " + s.key.file_stem());
  }
  std::vector<PatternSet> out = sets;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (auto& p : out[i].patterns) {
      bool shared = false;
      for (std::size_t j = 0; j < sets.size() && !shared; ++j) {
        if (j == i) continue;
        shared = std::any_of(sets[j].patterns.begin(), sets[j].patterns.end(),
                             [&](const BehavioralPattern& q) { return same_pattern(p, q, opts); });
      }
      p.frequency = shared ? FrequencyClass::high : FrequencyClass::low;
    }
  }
  return out;
}

std::size_t sample_size(std::size_t n, double rate) {
  if (rate < 0.0 || rate > 1.0) throw Error(ErrorKind::domain, "sampling rate must be in [0, 1]");
  const double r = rate * static_cast<double>(n);
  const double nearest = std::round(r);
  if (std::abs(r - nearest) < 1e-9) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(r));
}

PatternSet sample_composite(const std::vector<BehavioralPattern>& labeled, std::uint64_t seed) {
  std::vector<const BehavioralPattern*> high, low;
  for (const auto& p : labeled) {
    if (!p.frequency)
      throw Error(ErrorKind::precondition, "pattern " + p.id + " has no frequency class");
    (*p.frequency == FrequencyClass::high ? high : low).push_back(&p);
  }
  Rng rng(seed);
  PatternSet out;
  out.key = {Stage::direct, PromptLevel::detailed, "composite"};
  out.deduped = true;
  for (std::size_t i : rng.sample_indices(high.size(), sample_size(high.size(), kHighSampleRate)))
    out.patterns.push_back(*high[i]);
  for (std::size_t i : rng.sample_indices(low.size(), sample_size(low.size(), kLowSampleRate)))
    out.patterns.push_back(*low[i]);
  return out;
}

PatternSet inductive_summary(const std::vector<PatternSet>& sets, Gateway& gateway,
                             const TemplateSet& templates, const MiningOptions& opts) {
  if (sets.empty()) throw Error(ErrorKind::empty_input, "inductive summary needs at least one pattern set");
  std::vector<std::string> lines;
  for (const auto& s : sets) {
    for (const auto& p : s.patterns) lines.push_back("[" + s.key.model_id + "] " + pattern_line(p));
  }
  if (lines.empty()) throw Error(ErrorKind::empty_input, "inductive summary: every set is empty");

  std::vector<std::string> prompts;
  const std::string& tpl = templates.get("inductive");
  for (auto& data : chunk_payloads(lines, opts.bundle))
    prompts.push_back(render_template(tpl, {{"DATA", data}}));

  const RepeatedResult r = gateway.run_repeated(prompts, 1);
  PatternSet out;
  out.key = {sets.front().key.stage, sets.front().key.level, "merged"};
  for (const auto& resp : r.responses) {
    for (auto& p : parse_patterns(resp)) {
      p.stage = out.key.stage;
      p.level = out.key.level;
      p.model_id = "merged";
      out.patterns.push_back(std::move(p));
    }
  }
  return dedupe(out, opts.match);
}

GridResult run_mining_grid(const MiningInputs& inputs, const GridSpec& grid, std::vector<Gateway*> gateways,
                           const TemplateSet& templates, const MiningOptions& opts, std::uint64_t seed) {
  if (gateways.empty()) throw Error(ErrorKind::configuration, "mining grid needs at least one model");
  GridResult result;
  result.composite.key = {Stage::direct, PromptLevel::detailed, "composite"};
  result.composite.deduped = true;

  for (Stage stage : grid.stages) {
    std::vector<PromptLevel> levels =
        stage == Stage::direct ? std::vector<PromptLevel>{grid.direct_level} : grid.levels;
    for (PromptLevel level : levels) {
      std::vector<PatternSet> sets;
      for (Gateway* g : gateways)
        sets.push_back(dedupe(mine_cell(inputs, stage, level, *g, templates, opts, &result.warnings), opts.match));

      if (sets.size() >= 2) {
        sets = classify_frequency(sets, opts.match);
      } else {
        result.warnings.push_back(sets.front().key.file_stem() +
                                  ": single model, every pattern classified low");
        for (auto& p : sets.front().patterns) p.frequency = FrequencyClass::low;
      }

      for (auto& s : sets) {
        const PatternSet sample = sample_composite(s.patterns, mix_seed(seed, s.key.file_stem()));
        result.composite.patterns.insert(result.composite.patterns.end(), sample.patterns.begin(),
                                         sample.patterns.end());
        result.cells[s.key] = std::move(s);
      }
    }
  }
  return result;
}

}  // namespace gazemine

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gazemine/gaze_data.hpp"

namespace gazemine {

/// Generator for desk-scale gaze exports shaped like the pair-programming
/// corpus: experts E1..E10 and students S1..S9, questions A1..D3, one
/// fixation-level record per row. Every sequence is a phase-shifted periodic
/// scan path plus Gaussian jitter.
struct SyntheticConfig {
  std::uint64_t seed = 7;
  std::size_t experts = 10;
  std::size_t students = 9;
  std::vector<std::string> questions = default_questions();
  std::size_t min_fixations = 48;
  std::size_t max_fixations = 64;
  double period = 16.0;  // fixations per scan cycle

  // Fractions of rows corrupted for cleaning exercises.
  double missing_rate = 0.0;     // blank fixation duration
  double noise_rate = 0.0;       // 5 ms fixation
  double irrelevant_rate = 0.0;  // question id outside the experiment
};

struct SyntheticManifest {
  std::vector<std::string> participants;
  std::map<std::string, Expertise> expertise;
  /// Clean row count per sequence (corrupted rows excluded).
  std::map<SequenceKey, std::size_t> sequence_lengths;
  std::size_t rows = 0;
  std::size_t missing_rows = 0;
  std::size_t noise_rows = 0;
  std::size_t irrelevant_rows = 0;
};

struct SyntheticDataset {
  std::string csv;
  SyntheticManifest manifest;
  std::vector<AoiDefinition> aois;
};

SyntheticDataset generate_gaze_dataset(const SyntheticConfig& cfg = {});

/// AOI layout used by the synthetic corpus: the right-hand problem area of each
/// question is Error, everything else falls back to the question stem.
std::vector<AoiDefinition> synthetic_aois(const std::vector<std::string>& questions);

/// Adds large fixation/saccade spikes at the given sample positions of a
/// sequence (in place).
void inject_spike(GazeSequence& seq, std::size_t from, std::size_t to, double magnitude = 1.0);

}  // namespace gazemine

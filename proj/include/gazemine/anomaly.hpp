#pragma once

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "gazemine/gaze_data.hpp"
#include "gazemine/lstm.hpp"
#include "gazemine/segmentation.hpp"

namespace gazemine {

struct Window {
  std::string participant_id;
  std::string question_id;
  std::size_t start = 0;       // index into the sequence
  Eigen::MatrixXd features;    // window_len x feature_dim
  AoiCategory aoi_majority = AoiCategory::non_error;
};

struct WindowConfig {
  int window_len = 32;
  int stride = 16;
};

/// Sliding windows over each sequence, in sequence-key order. Sequences
/// shorter than the window produce a warning and no windows. AOI majority
/// ties go to Error.
std::vector<Window> build_windows(const std::map<SequenceKey, GazeSequence>& sequences, const WindowConfig& cfg,
                                  std::vector<std::string>* warnings = nullptr);

/// Splits sessionized sequences by expertise.
std::vector<Window> windows_of(const std::vector<Window>& all, const std::map<SequenceKey, GazeSequence>& sequences,
                               Expertise who);

std::vector<Eigen::MatrixXd> feature_matrices(const std::vector<Window>& windows);
void normalize_windows(std::vector<Window>& windows, const Normalizer& n);

/// mean + k * population std.
double calibrate_threshold(const std::vector<double>& errors, double k);

struct WindowResult {
  std::string participant_id;
  std::string question_id;
  std::size_t start = 0;
  AoiCategory aoi = AoiCategory::non_error;
  double error = 0.0;
  bool flagged = false;

  json to_json() const;
  static WindowResult from_json(const json& j);
  bool operator==(const WindowResult&) const = default;
};

struct BandRate {
  std::size_t flagged = 0;
  std::size_t total = 0;
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(flagged) / static_cast<double>(total); }
  bool operator==(const BandRate&) const = default;
};

using AnomalyBin = std::tuple<std::string, std::string, AoiCategory>;  // student, question, AOI

struct AnomalyReport {
  double threshold = 0.0;
  double k = 0.0;
  std::vector<std::string> students;
  std::vector<std::string> questions;
  std::vector<WindowResult> windows;
  std::map<AnomalyBin, std::size_t> counts;  // every (student, question, AOI) cell, zeros included
  std::vector<std::string> double_zero;      // questions with no anomaly for any student
  std::map<std::string, std::map<std::string, BandRate>> band_rates;  // student -> band -> rate

  std::size_t flagged() const;
  std::size_t count(const std::string& student, const std::string& question) const;
  /// Questions ordered by descending anomaly count for one student (ties by
  /// question order).
  std::vector<std::string> top_questions(const std::string& student, std::size_t n) const;

  /// Summary payload (everything except per-window detail).
  json summary_json() const;
  json to_json() const;
  static AnomalyReport from_json(const json& j);
  bool operator==(const AnomalyReport&) const = default;
};

/// Windows must already be normalized with the model's parameters.
/// `question_bands` maps question id to a difficulty band name for the
/// per-band rates; `questions` fixes the question axis (defaults to those
/// present in the windows).
template <Reconstructor M>
std::vector<double> window_errors(const M& model, const std::vector<Window>& windows) {
  std::vector<double> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(reconstruction_error(model, w.features));
  return out;
}

AnomalyReport detect_from_errors(const std::vector<Window>& windows, const std::vector<double>& errors,
                                 double threshold, double k, const std::vector<std::string>& questions = {},
                                 const std::map<std::string, std::string>& question_bands = {});

template <Reconstructor M>
AnomalyReport detect(const M& model, double threshold, const std::vector<Window>& windows,
                     const std::vector<std::string>& questions = {},
                     const std::map<std::string, std::string>& question_bands = {}, double k = 0.0) {
  return detect_from_errors(windows, window_errors(model, windows), threshold, k, questions, question_bands);
}

/// Wraps the summary payload in the anomaly template.
PromptBundle summarize_for_llm(const AnomalyReport& report, const TemplateSet& templates,
                               const BundleOptions& opts = {});

/// The (student, question, AOI) counts recovered from a summary payload.
std::map<AnomalyBin, std::size_t> counts_from_payload(const json& payload);

}  // namespace gazemine

#include "gazemine/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace gazemine {

std::vector<Window> build_windows(const std::map<SequenceKey, GazeSequence>& sequences, const WindowConfig& cfg,
                                  std::vector<std::string>* warnings) {
  if (cfg.window_len < 2) throw Error(ErrorKind::validation, "window length must be at least 2");
  if (cfg.stride < 1) throw Error(ErrorKind::validation, "stride must be at least 1");
  const auto len = static_cast<std::size_t>(cfg.window_len);
  const auto stride = static_cast<std::size_t>(cfg.stride);
  std::vector<Window> out;
  for (const auto& [key, seq] : sequences) {
    const std::size_t n = seq.features.size();
    if (n < len) {
      if (warnings)
        warnings->push_back("sequence " + key.participant_id + "/" + key.question_id + " has " + std::to_string(n) +
                            " records, shorter than the window (" + std::to_string(len) + ")");
      continue;
    }
    for (std::size_t start = 0; start + len <= n; start += stride) {
      Window w;
      w.participant_id = key.participant_id;
      w.question_id = key.question_id;
      w.start = start;
      w.features.resize(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(kFeatureDim));
      std::size_t errors = 0;
      for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t j = 0; j < kFeatureDim; ++j)
          w.features(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = seq.features[start + t][j];
        if (start + t < seq.aoi.size() && seq.aoi[start + t] == AoiCategory::error) ++errors;
      }
      w.aoi_majority = 2 * errors >= len ? AoiCategory::error : AoiCategory::non_error;
      out.push_back(std::move(w));
    }
  }
  return out;
}

std::vector<Window> windows_of(const std::vector<Window>& all, const std::map<SequenceKey, GazeSequence>& sequences,
                               Expertise who) {
  std::vector<Window> out;
  for (const auto& w : all) {
    const auto it = sequences.find({w.participant_id, w.question_id});
    if (it != sequences.end() && it->second.expertise == who) out.push_back(w);
  }
  return out;
}

std::vector<Eigen::MatrixXd> feature_matrices(const std::vector<Window>& windows) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(w.features);
  return out;
}

void normalize_windows(std::vector<Window>& windows, const Normalizer& n) {
  for (auto& w : windows) w.features = n.apply(w.features);
}

double calibrate_threshold(const std::vector<double>& errors, double k) {
  if (errors.size() < 2) throw Error(ErrorKind::validation, "threshold calibration needs at least 2 errors");
  if (k < 0.0) throw Error(ErrorKind::validation, "threshold multiplier must be non-negative");
  double mean = 0.0;
  for (double e : errors) mean += e;
  mean /= static_cast<double>(errors.size());
  double var = 0.0;
  for (double e : errors) var += (e - mean) * (e - mean);
  var /= static_cast<double>(errors.size());
  return mean + k * std::sqrt(var);
}

json WindowResult::to_json() const {
  return {{"participant_id", participant_id}, {"question_id", question_id}, {"start", start},
          {"aoi", to_string(aoi)},            {"error", error},             {"flagged", flagged}};
}

WindowResult WindowResult::from_json(const json& j) {
  WindowResult w;
  w.participant_id = j.at("participant_id").get<std::string>();
  w.question_id = j.at("question_id").get<std::string>();
  w.start = j.at("start").get<std::size_t>();
  const auto aoi = parse_aoi_category(j.at("aoi").get<std::string>());
  if (!aoi) throw Error(ErrorKind::validation, "unknown AOI category " + j.at("aoi").dump());
  w.aoi = *aoi;
  w.error = j.at("error").get<double>();
  w.flagged = j.at("flagged").get<bool>();
  return w;
}

std::size_t AnomalyReport::flagged() const {
  return static_cast<std::size_t>(std::count_if(windows.begin(), windows.end(), [](const auto& w) { return w.flagged; }));
}

std::size_t AnomalyReport::count(const std::string& student, const std::string& question) const {
  std::size_t n = 0;
  for (AoiCategory a : {AoiCategory::error, AoiCategory::non_error}) {
    const auto it = counts.find({student, question, a});
    if (it != counts.end()) n += it->second;
  }
  return n;
}

std::vector<std::string> AnomalyReport::top_questions(const std::string& student, std::size_t n) const {
  std::vector<std::string> qs = questions;
  std::stable_sort(qs.begin(), qs.end(),
                   [&](const auto& a, const auto& b) { return count(student, a) > count(student, b); });
  if (qs.size() > n) qs.resize(n);
  return qs;
}

json AnomalyReport::summary_json() const {
  json cells = json::array();
  std::map<std::string, std::size_t> per_student, per_question;
  std::map<std::string, std::size_t> per_aoi = {{"Error", 0}, {"NonError", 0}};
  std::size_t total = 0;
  for (const auto& [bin, n] : counts) {
    const auto& [s, q, a] = bin;
    cells.push_back({s, q, to_string(a), n});
    per_student[s] += n;
    per_question[q] += n;
    per_aoi[std::string(to_string(a))] += n;
    total += n;
  }
  json bands = json::object();
  for (const auto& [s, by_band] : band_rates) {
    for (const auto& [band, r] : by_band)
      bands[s][band] = {{"flagged", r.flagged}, {"total", r.total}, {"rate", r.rate()}};
  }
  return {{"threshold", threshold},
          {"k", k},
          {"students", students},
          {"questions", questions},
          {"counts", cells},
          {"double_zero", double_zero},
          {"band_rates", bands},
          {"aggregates",
           {{"flagged", total},
            {"windows", windows.size()},
            {"per_student", per_student},
            {"per_question", per_question},
            {"per_aoi", per_aoi}}}};
}

json AnomalyReport::to_json() const {
  json j = summary_json();
  json detail = json::array();
  for (const auto& w : windows) detail.push_back(w.to_json());
  j["windows"] = detail;
  return j;
}

AnomalyReport AnomalyReport::from_json(const json& j) {
  AnomalyReport r;
  try {
    r.threshold = j.at("threshold").get<double>();
    r.k = j.at("k").get<double>();
    r.students = j.at("students").get<std::vector<std::string>>();
    r.questions = j.at("questions").get<std::vector<std::string>>();
    r.counts = counts_from_payload(j);
    r.double_zero = j.at("double_zero").get<std::vector<std::string>>();
    for (const auto& [s, by_band] : j.at("band_rates").items())
      for (const auto& [band, v] : by_band.items())
        r.band_rates[s][band] = {v.at("flagged").get<std::size_t>(), v.at("total").get<std::size_t>()};
    if (j.contains("windows"))
      for (const auto& w : j.at("windows")) r.windows.push_back(WindowResult::from_json(w));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::validation, std::string("anomaly report: ") + e.what());
  }
  return r;
}

AnomalyReport detect_from_errors(const std::vector<Window>& windows, const std::vector<double>& errors,
                                 double threshold, double k, const std::vector<std::string>& questions,
                                 const std::map<std::string, std::string>& question_bands) {
  if (errors.size() != windows.size()) throw Error(ErrorKind::shape, "one error per window is required");
  AnomalyReport r;
  r.threshold = threshold;
  r.k = k;
  std::set<std::string> students, seen_q;
  for (const auto& w : windows) {
    students.insert(w.participant_id);
    seen_q.insert(w.question_id);
  }
  r.students.assign(students.begin(), students.end());
  if (!questions.empty()) {
    r.questions = questions;
  } else {
    r.questions.assign(seen_q.begin(), seen_q.end());
  }
  for (const auto& s : r.students)
    for (const auto& q : r.questions)
      for (AoiCategory a : {AoiCategory::error, AoiCategory::non_error}) r.counts[{s, q, a}] = 0;

  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    WindowResult res{w.participant_id, w.question_id, w.start, w.aoi_majority, errors[i], errors[i] > threshold};
    if (res.flagged) ++r.counts[{w.participant_id, w.question_id, w.aoi_majority}];
    const auto band = question_bands.find(w.question_id);
    if (band != question_bands.end()) {
      auto& br = r.band_rates[w.participant_id][band->second];
      ++br.total;
      if (res.flagged) ++br.flagged;
    }
    r.windows.push_back(std::move(res));
  }
  if (!r.students.empty()) {
    for (const auto& q : r.questions) {
      const bool zero = std::all_of(r.students.begin(), r.students.end(),
                                    [&](const auto& s) { return r.count(s, q) == 0; });
      if (zero) r.double_zero.push_back(q);
    }
  }
  return r;
}

PromptBundle summarize_for_llm(const AnomalyReport& report, const TemplateSet& templates, const BundleOptions& opts) {
  PromptBundle b;
  b.slot = "anomaly";
  b.stage = Stage::direct;
  const std::string payload = canonical_dump(report.summary_json());
  if (payload.size() > opts.budget_chars)
    throw Error(ErrorKind::oversize, "anomaly summary (" + std::to_string(payload.size()) +
                                         " chars) exceeds the prompt budget");
  b.chunks.push_back(render_template(templates.get("anomaly"), {{"DATA", payload}}));
  return b;
}

std::map<AnomalyBin, std::size_t> counts_from_payload(const json& payload) {
  std::map<AnomalyBin, std::size_t> out;
  for (const auto& cell : payload.at("counts")) {
    const auto aoi = parse_aoi_category(cell.at(2).get<std::string>());
    if (!aoi) throw Error(ErrorKind::validation, "unknown AOI category " + cell.at(2).dump());
    out[{cell.at(0).get<std::string>(), cell.at(1).get<std::string>(), *aoi}] = cell.at(3).get<std::size_t>();
  }
  return out;
}

}  // namespace gazemine

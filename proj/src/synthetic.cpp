#include "gazemine/synthetic.hpp"

#include <cmath>

#include "gazemine/rng.hpp"

namespace gazemine {

namespace {
constexpr double kTwoPi = 6.283185307179586;
}

std::vector<AoiDefinition> synthetic_aois(const std::vector<std::string>& questions) {
  std::vector<AoiDefinition> out;
  for (const auto& q : questions)
    out.push_back({"problem_area", q, {0.55, 0.25, 0.95, 0.75}, AoiCategory::error});
  return out;
}

SyntheticDataset generate_gaze_dataset(const SyntheticConfig& cfg) {
  SyntheticDataset ds;
  ds.aois = synthetic_aois(cfg.questions);
  auto& m = ds.manifest;

  std::vector<std::pair<std::string, Expertise>> people;
  for (std::size_t i = 0; i < cfg.experts; ++i)
    people.emplace_back("E" + std::to_string(i + 1), Expertise::expert);
  for (std::size_t i = 0; i < cfg.students; ++i)
    people.emplace_back("S" + std::to_string(i + 1), Expertise::student);

  std::string& csv = ds.csv;
  csv =
      "participant_id,role,expertise,question_id,timestamp_ms,fixation_number,"
      "fixation_duration_ms,saccade_number,saccade_duration_ms,gaze_x,gaze_y\n";

  Rng rng(cfg.seed);
  for (std::size_t p = 0; p < people.size(); ++p) {
    const auto& [pid, expertise] = people[p];
    m.participants.push_back(pid);
    m.expertise[pid] = expertise;
    const std::string_view role = (p % 2 == 0) ? "driver" : "navigator";
    for (const auto& q : cfg.questions) {
      const auto length = static_cast<std::size_t>(
          rng.between(static_cast<std::int64_t>(cfg.min_fixations),
                      static_cast<std::int64_t>(cfg.max_fixations)));
      const double phase = rng.uniform(0.0, kTwoPi);
      double t = 0.0;
      std::size_t clean_rows = 0;
      for (std::size_t k = 0; k < length; ++k) {
        const double theta = kTwoPi * static_cast<double>(k) / cfg.period + phase;
        double fix = std::round(280.0 + 110.0 * std::sin(theta) + rng.normal(0.0, 12.0));
        const double sacc = std::round(45.0 + 15.0 * std::cos(theta) + rng.normal(0.0, 2.0));
        const double gx = std::round((0.5 + 0.22 * std::sin(theta + 0.6) + rng.normal(0.0, 0.012)) * 1e4) / 1e4;
        const double gy = std::round((0.5 + 0.18 * std::cos(theta + 0.6) + rng.normal(0.0, 0.012)) * 1e4) / 1e4;
        t += fix + sacc;

        std::string question = q;
        std::string fix_text = format_number(fix);
        const double roll = rng.uniform();
        if (roll < cfg.missing_rate) {
          fix_text.clear();
          ++m.missing_rows;
        } else if (roll < cfg.missing_rate + cfg.noise_rate) {
          fix_text = "5";
          ++m.noise_rows;
        } else if (roll < cfg.missing_rate + cfg.noise_rate + cfg.irrelevant_rate) {
          question = "Z9";
          ++m.irrelevant_rows;
        } else {
          ++clean_rows;
        }

        csv += pid;
        csv += ',';
        csv += role;
        csv += ',';
        csv += to_string(expertise);
        csv += ',';
        csv += question;
        csv += ',';
        csv += format_number(std::round(t));
        csv += ',';
        csv += std::to_string(k + 1);
        csv += ',';
        csv += fix_text;
        csv += ',';
        csv += std::to_string(k + 1);
        csv += ',';
        csv += format_number(sacc);
        csv += ',';
        csv += format_number(gx);
        csv += ',';
        csv += format_number(gy);
        csv += '\n';
        ++m.rows;
      }
      m.sequence_lengths[{pid, q}] = clean_rows;
    }
  }
  return ds;
}

void inject_spike(GazeSequence& seq, std::size_t from, std::size_t to, double magnitude) {
  for (std::size_t i = from; i < to && i < seq.features.size(); ++i) {
    seq.features[i][0] += 900.0 * magnitude;
    seq.features[i][1] += 120.0 * magnitude;
    seq.features[i][2] = 0.05;
    seq.features[i][3] = 0.95;
  }
}

}  // namespace gazemine

#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "gazemine/gaze_data.hpp"
#include "gazemine/json_io.hpp"
#include "gazemine/rng.hpp"

namespace gazemine::testing {

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gazemine-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::string test_data(const std::string& name) { return std::string(GAZEMINE_TEST_DATA) + "/" + name; }
inline std::string repo_data(const std::string& name) { return std::string(GAZEMINE_REPO_DATA) + "/" + name; }

// Random table with a random mix of id, numeric and categorical columns
// (at least one id and one numeric). About 2% of cells are missing.
inline GazeTable random_table(Rng& rng, std::size_t rows) {
  GazeTable t;
  const auto n_cols = static_cast<std::size_t>(rng.between(2, 9));
  for (std::size_t c = 0; c < n_cols; ++c) {
    ColumnKind kind = c == 0 ? ColumnKind::id : c == 1 ? ColumnKind::numeric
                                                       : static_cast<ColumnKind>(rng.between(0, 2));
    t.schema.push_back({"col" + std::to_string(c) + "_" + std::string(to_string(kind)), kind});
  }
  // Shuffle so the id/numeric columns are not always first.
  for (std::size_t i = t.schema.size(); i > 1; --i)
    std::swap(t.schema[i - 1], t.schema[static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(i) - 1))]);
  t.records.resize(rows);
  for (auto& rec : t.records) {
    for (const auto& col : t.schema) {
      if (rng.uniform() < 0.02) {
        rec.cells.emplace_back(std::monostate{});
      } else if (col.kind == ColumnKind::numeric) {
        rec.cells.emplace_back(std::round(rng.uniform(-1e4, 1e4) * 1000.0) / 1000.0);
      } else {
        rec.cells.emplace_back((col.kind == ColumnKind::id ? "P" : "c\"\t") + std::to_string(rng.between(0, 50)));
      }
    }
  }
  return t;
}

}  // namespace gazemine::testing

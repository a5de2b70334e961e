#pragma once

// Output artifacts of the experiment runner. Everything here is a pure
// function of suite results so reruns reproduce the files byte for byte;
// wall-clock data goes to a separate timing document.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ets/engine.hpp"
#include "json.hpp"

namespace ets {

struct RunRow {
  std::string label;
  PolicyConfig policy;
  SuiteSummary summary;
};

std::string results_jsonl(const SuiteResult& suite);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string summary_csv(std::span<const RunRow> rows);

// One row per (method, width) with KV reduction against the first-listed
// method at the same width.
std::string compare_csv(std::span<const RunRow> rows, std::span<const std::string> method_order);

struct SweepPoint {
  double lambda_b = 0.0;
  double accuracy = 0.0;  // fraction in [0,1]
  double mean_cumulative_kv = 0.0;
};

struct SweepSelection {
  std::vector<double> delta_points;  // baseline accuracy minus point accuracy, in points
  std::optional<std::size_t> selected;
};

// Largest lambda_b whose accuracy is at most `tolerance_points` below the baseline.
SweepSelection select_lambda_b(std::span<const SweepPoint> points, double baseline_accuracy,
                               double tolerance_points);

std::string sweep_csv(std::span<const SweepPoint> points, const SweepSelection& selection,
                      double baseline_accuracy, double baseline_kv);

// Timing sidecar for one suite run.
nlohmann::json timing_document(const std::string& label, const SuiteResult& suite, double wall_seconds);

// Summary recomputed from a results JSONL file.
struct JsonlSummary {
  std::size_t problems = 0;
  std::size_t correct = 0;
  std::size_t answered = 0;
  std::size_t errors = 0;
  double accuracy = 0.0;
  double mean_cumulative_kv = 0.0;
  double mean_generated_tokens = 0.0;
  std::string digest;
};

JsonlSummary summarize_jsonl(const std::filesystem::path& path);

// Named column of the first data row of a summary CSV.
double summary_csv_value(const std::filesystem::path& path, const std::string& column);

void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace ets

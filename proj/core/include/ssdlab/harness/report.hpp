#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssdlab/selftrain/selftrain.hpp"

namespace ssdlab::harness {

using selftrain::MetricsRow;

inline constexpr const char* kCsvHeader = "mode,fraction,seed,iteration,map_5095,map_50,per_class_json,seconds";

/// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

/// Header plus one line per row; reals use round-trip formatting, per-class
/// APs are a quoted JSON array with null for classes without ground truth.
std::string write_metrics_csv(std::span<const MetricsRow> rows);
/// Inverse of write_metrics_csv. Throws std::runtime_error naming the line on malformed input.
std::vector<MetricsRow> read_metrics_csv(const std::string& text);

/// "50.00 ± 10.00"
std::string format_mean_std(double mean, double stdev);
double mean_of(std::span<const double> values);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_stdev(std::span<const double> values);

struct SummaryCell {
  std::string mode;
  double fraction = 0;
  std::size_t runs = 0;
  double mean_5095 = 0;
  double stdev_5095 = 0;
  double mean_50 = 0;
  double stdev_50 = 0;
};

/// One cell per (mode, fraction), aggregated over seeds. Independent of row
/// order: values are combined in seed order.
std::vector<SummaryCell> summarize(std::span<const MetricsRow> rows);

struct PerClassTable {
  std::vector<std::string> class_names;  // one table row per class
  std::vector<std::string> columns;      // "<mode> <fraction>%"
  std::vector<std::vector<std::optional<double>>> cells;  // [class][column], seed mean
};
PerClassTable per_class_table(std::span<const MetricsRow> rows, const std::vector<std::string>& class_names);

std::string render_summary_markdown(std::span<const SummaryCell> cells);
std::string render_summary_csv(std::span<const SummaryCell> cells);
std::string render_per_class_markdown(const PerClassTable& table);

/// Self-contained SVG line plot of validation mAP@[.5:.95] and mAP@.5 against iteration.
std::string render_curve_svg(const std::string& title, std::span<const MetricsRow> trajectory);

/// File stem of a run: "<mode>_f<percent>_s<seed>".
std::string run_name(const std::string& mode, double fraction, std::uint64_t seed);

/// Writes summary.md, summary.csv, per_class.md and curves/<run>.svg into `dir`.
/// Class names default to the shape families when empty.
void emit_report(const std::filesystem::path& dir, std::span<const MetricsRow> test_rows,
                 std::span<const MetricsRow> curve_rows, std::vector<std::string> class_names = {});

}  // namespace ssdlab::harness

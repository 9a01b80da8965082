#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace farfield {

/// One report line. Degradations are relative to the experiment's baseline
/// row, which leaves them empty (printed as "-").
struct ReportRow {
  std::string experiment;
  std::string condition;
  double absolute_metric = 0.0;
  std::optional<double> rel_degradation;
  std::optional<double> clean;
  std::optional<double> noisy;
  std::uint64_t seed = 0;
  std::string config_hash;

  bool operator==(const ReportRow&) const = default;
};

struct DegradationReport {
  std::vector<ReportRow> rows;

  /// Throws std::out_of_range when absent.
  const ReportRow& row(const std::string& condition) const;
  bool operator==(const DegradationReport&) const = default;
};

/// 100 (test - baseline) / baseline. Baseline must be positive.
double relative_degradation(double baseline_metric, double test_metric);

/// CSV with header experiment,condition,absolute_metric,rel_degradation,clean,noisy,seed,config_hash.
/// Numbers use shortest round-trip formatting.
std::string report_to_csv(const DegradationReport& report);
DegradationReport report_from_csv(const std::string& text);

/// Aligned text table with one decimal.
std::string report_to_table(const DegradationReport& report);

/// Writes `<stem>.csv` and `<stem>.txt`. Throws IoError.
void emit_report(const DegradationReport& report, const std::string& stem);
DegradationReport load_report(const std::string& csv_path);

/// FNV-1a 64-bit, hex encoded.
std::string fnv1a_hex(const std::string& text);

}  // namespace farfield

#include "farfield/report.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "farfield/errors.hpp"

namespace farfield {

namespace {

const char* kHeader = "experiment,condition,absolute_metric,rel_degradation,clean,noisy,seed,config_hash";

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : "-"; }

std::string fixed1(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << *v;
  return s.str();
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

double parse_num(const std::string& s) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw IoError("bad number in report: '" + s + "'");
  }
  return v;
}

std::optional<double> parse_opt(const std::string& s) {
  if (s == "-") return std::nullopt;
  return parse_num(s);
}

}  // namespace

const ReportRow& DegradationReport::row(const std::string& condition) const {
  for (const auto& r : rows) {
    if (r.condition == condition) return r;
  }
  throw std::out_of_range("no report row '" + condition + "'");
}

double relative_degradation(double baseline_metric, double test_metric) {
  if (!(baseline_metric > 0.0)) throw std::domain_error("baseline metric must be positive");
  return 100.0 * (test_metric - baseline_metric) / baseline_metric;
}

std::string report_to_csv(const DegradationReport& report) {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : report.rows) {
    out += quote(r.experiment) + "," + quote(r.condition) + "," + num(r.absolute_metric) + "," +
           opt(r.rel_degradation) + "," + opt(r.clean) + "," + opt(r.noisy) + "," +
           std::to_string(r.seed) + "," + r.config_hash + "\n";
  }
  return out;
}

DegradationReport report_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw IoError("report CSV header mismatch");
  DegradationReport rep;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw IoError("report CSV row has " + std::to_string(f.size()) + " fields");
    ReportRow r;
    r.experiment = f[0];
    r.condition = f[1];
    r.absolute_metric = parse_num(f[2]);
    r.rel_degradation = parse_opt(f[3]);
    r.clean = parse_opt(f[4]);
    r.noisy = parse_opt(f[5]);
    r.seed = std::stoull(f[6]);
    r.config_hash = f[7];
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

std::string report_to_table(const DegradationReport& report) {
  std::size_t width = 9;
  for (const auto& r : report.rows) width = std::max(width, r.condition.size());
  std::ostringstream s;
  s << std::left << std::setw(int(width)) << "condition" << std::right << std::setw(10) << "metric %"
    << std::setw(10) << "WERR %" << std::setw(10) << "clean" << std::setw(10) << "noisy" << "\n";
  for (const auto& r : report.rows) {
    s << std::left << std::setw(int(width)) << r.condition << std::right << std::setw(10)
      << fixed1(r.absolute_metric) << std::setw(10) << fixed1(r.rel_degradation) << std::setw(10)
      << fixed1(r.clean) << std::setw(10) << fixed1(r.noisy) << "\n";
  }
  return s.str();
}

void emit_report(const DegradationReport& report, const std::string& stem) {
  for (const auto& [ext, body] : {std::pair{".csv", report_to_csv(report)},
                                  std::pair{".txt", report_to_table(report)}}) {
    std::ofstream out(stem + ext, std::ios::binary);
    if (!out) throw IoError("cannot write " + stem + ext);
    out << body;
    if (!out) throw IoError("write failed for " + stem + ext);
  }
}

DegradationReport load_report(const std::string& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot read " + csv_path);
  std::ostringstream s;
  s << in.rdbuf();
  return report_from_csv(s.str());
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace farfield

#include "feudal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <stdexcept>

namespace feudal {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

constexpr const char* kSchemaLine = "#feudal-metrics v1";
constexpr const char* kHeaderLine =
    "step,episode,return,intrinsic_return_mean,entropy,vloss_manager,"
    "vloss_extrinsic,vloss_intrinsic,skipped_manager_updates";

}  // namespace

MetricsWriter::MetricsWriter(const std::string& path)
    : out_(path, std::ios::binary) {  // binary keeps LF endings everywhere
  if (!out_) throw std::runtime_error("metrics: cannot open " + path);
  out_ << kSchemaLine << ",epoch_steps=" << kEpochSteps << "\n";
  out_ << kHeaderLine << "\n";
}

void MetricsWriter::write_row(const MetricsRow& row) {
  out_ << row.step << "," << row.episode << "," << fmt_double(row.ret) << ","
       << fmt_double(row.intrinsic_return_mean) << ","
       << fmt_double(row.entropy) << "," << fmt_double(row.vloss_manager)
       << "," << fmt_double(row.vloss_extrinsic) << ","
       << fmt_double(row.vloss_intrinsic) << ","
       << row.skipped_manager_updates << "\n";
}

void MetricsWriter::flush() { out_.flush(); }

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("metrics: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kSchemaLine, 0) != 0) {
    throw std::runtime_error("metrics: unknown schema in " + path);
  }
  if (!std::getline(in, line) || line != kHeaderLine) {
    throw std::runtime_error("metrics: unexpected header in " + path);
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRow row;
    char* end = nullptr;
    const char* p = line.c_str();
    auto next_field = [&](bool last) {
      const char* comma = std::strchr(p, ',');
      if (!comma && !last) {
        throw std::runtime_error("metrics: short row in " + path);
      }
      return comma;
    };
    row.step = std::strtoull(p, &end, 10);
    p = next_field(false) + 1;
    row.episode = std::strtoull(p, &end, 10);
    p = next_field(false) + 1;
    row.ret = std::strtod(p, &end);
    p = next_field(false) + 1;
    row.intrinsic_return_mean = std::strtod(p, &end);
    p = next_field(false) + 1;
    row.entropy = std::strtod(p, &end);
    p = next_field(false) + 1;
    row.vloss_manager = std::strtod(p, &end);
    p = next_field(false) + 1;
    row.vloss_extrinsic = std::strtod(p, &end);
    p = next_field(false) + 1;
    row.vloss_intrinsic = std::strtod(p, &end);
    p = next_field(false) + 1;
    row.skipped_manager_updates = std::strtoull(p, &end, 10);
    rows.push_back(row);
  }
  return rows;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(values.begin(), values.end());
  double pos = q * static_cast<double>(values.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  std::size_t hi = std::min(lo + 1, values.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

std::vector<AggregateRow> aggregate_metrics(
    const std::vector<std::string>& per_seed_paths) {
  // epoch -> per-seed mean return over rows in that epoch
  std::map<std::size_t, std::vector<double>> buckets;
  for (const auto& path : per_seed_paths) {
    std::map<std::size_t, std::pair<double, std::size_t>> seed_epochs;
    for (const auto& row : read_metrics_csv(path)) {
      if (std::isnan(row.ret)) continue;  // no finished episode that interval
      std::size_t epoch = (row.step + kEpochSteps - 1) / kEpochSteps;
      auto& acc = seed_epochs[epoch];
      acc.first += row.ret;
      acc.second += 1;
    }
    for (const auto& [epoch, acc] : seed_epochs) {
      buckets[epoch].push_back(acc.first / static_cast<double>(acc.second));
    }
  }
  std::vector<AggregateRow> out;
  for (const auto& [epoch, values] : buckets) {
    AggregateRow row;
    row.epoch = epoch;
    row.step = epoch * kEpochSteps;
    row.median = quantile(values, 0.5);
    row.q25 = quantile(values, 0.25);
    row.q75 = quantile(values, 0.75);
    row.seeds = values.size();
    out.push_back(row);
  }
  return out;
}

void write_aggregate_csv(const std::string& path,
                         const std::vector<AggregateRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("metrics: cannot open " + path);
  out << "#feudal-aggregate v1,epoch_steps=" << kEpochSteps << "\n";
  out << "epoch,step,return_median,return_q25,return_q75,seeds\n";
  for (const auto& r : rows) {
    out << r.epoch << "," << r.step << "," << fmt_double(r.median) << ","
        << fmt_double(r.q25) << "," << fmt_double(r.q75) << "," << r.seeds
        << "\n";
  }
}

void write_plot_script(const std::string& path,
                       const std::string& aggregate_csv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("metrics: cannot open " + path);
  out << "set datafile separator ','\n"
      << "set xlabel 'environment steps'\n"
      << "set ylabel 'episodic return'\n"
      << "set key left top\n"
      << "plot '" << aggregate_csv
      << "' every ::1 using 2:4:5 with filledcurves fs transparent solid 0.2 "
         "notitle, \\\n"
      << "     '" << aggregate_csv
      << "' every ::1 using 2:3 with lines lw 2 title 'median return'\n";
}

}  // namespace feudal

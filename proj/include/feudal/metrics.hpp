#pragma once

#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

namespace feudal {

/// One metrics epoch is this many environment steps. Stated in every CSV
/// header so downstream readers cannot misinterpret the x axis.
inline constexpr std::size_t kEpochSteps = 10000;

/// One flushed metrics row. `ret` is the mean raw episodic return over the
/// flush interval (NaN when no episode finished in it).
struct MetricsRow {
  std::size_t step = 0;
  std::size_t episode = 0;
  double ret = 0.0;
  double intrinsic_return_mean = 0.0;
  double entropy = 0.0;
  double vloss_manager = 0.0;
  double vloss_extrinsic = 0.0;
  double vloss_intrinsic = 0.0;
  std::size_t skipped_manager_updates = 0;  // cumulative
};

/// Writes the versioned metrics CSV: '#feudal-metrics v1' schema line, a
/// header row, then comma-separated rows with LF endings and floats at 17
/// significant digits (rereads are bit-exact).
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void write_row(const MetricsRow& row);
  void flush();

 private:
  std::ofstream out_;
};

/// Rejects files whose schema line is missing or has an unknown version.
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

/// Per-epoch median and quartiles of episodic return across seeds.
struct AggregateRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  std::size_t seeds = 0;
};

std::vector<AggregateRow> aggregate_metrics(
    const std::vector<std::string>& per_seed_paths);

void write_aggregate_csv(const std::string& path,
                         const std::vector<AggregateRow>& rows);

/// Emits a gnuplot script next to the aggregate data; plotting stays
/// dependency-free.
void write_plot_script(const std::string& path,
                       const std::string& aggregate_csv);

/// Linear-interpolation quantile of an unsorted sample (q in [0, 1]).
double quantile(std::vector<double> values, double q);

}  // namespace feudal

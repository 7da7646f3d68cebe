#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nilm/elec.hpp"

namespace nilm {

/// Mergeable sufficient statistics over aligned (estimate, truth) pairs.
struct PairAccumulator {
  Coverage coverage;
  double period_s = 1.0;
  double on_threshold_w = 5.0;
  std::uint64_t n = 0;
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  CompensatedSum abs_error, squared_error;
  CompensatedSum estimate_joules, truth_joules;

  PairAccumulator() = default;
  PairAccumulator(double period, double threshold) : period_s(period), on_threshold_w(threshold) {}

  void add(double estimate_w, double truth_w);
  /// Column 0 is the estimate, column 1 the truth.
  static PairAccumulator from_chunk(const AlignedChunk& chunk, double period_s,
                                    double on_threshold_w);
  void merge_from(const PairAccumulator& later);
};

struct F1Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Zero denominators give 0.
F1Score f1_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);

struct ApplianceMetrics {
  std::string label;
  std::uint64_t n_pairs = 0;
  double f1 = 0.0, precision = 0.0, recall = 0.0;
  double error_total_energy_kwh = 0.0;
  double mean_abs_error_w = 0.0;
  double rms_error_w = 0.0;
  double estimated_kwh = 0.0;
  double true_kwh = 0.0;
};

/// Throws an undefined-statistic error when no pairs were accumulated.
ApplianceMetrics finalize(const PairAccumulator& acc, std::string label = {});

/// Sum over appliances of min(estimated share, true share) of energy.
double fraction_energy_assigned_correctly(const std::vector<double>& estimated_kwh,
                                          const std::vector<double>& true_kwh);

struct MetricsConfig {
  /// Grid period; defaults to the truth meter's sample period.
  std::optional<double> period_s;
  double on_threshold_w = 5.0;
  std::size_t chunk_rows = kDefaultChunkRows;
  std::size_t jobs = 1;
};

/// Accumulates over the aligned pairs of an estimate and a truth meter.
PairAccumulator accumulate(const ElecMeter& estimate, const ElecMeter& truth,
                           const MetricsConfig& config = {});

struct ApplianceEntry {
  int meter = 0;
  std::optional<ApplianceMetrics> metrics;
  std::optional<std::string> error;
};

struct BuildingReport {
  int building = 0;
  std::vector<ApplianceEntry> appliances;
  std::optional<double> feac;
  std::optional<std::string> feac_error;
  /// Set when the building could not be evaluated at all.
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
  /// Unweighted mean over appliances with metrics.
  std::map<std::string, double> summary() const;
  double true_kwh() const;
};

struct Aggregate {
  double mean = 0.0, min = 0.0, max = 0.0;
  std::size_t n = 0;
};

struct MetricReport {
  std::string run_id;
  std::vector<BuildingReport> buildings;
  std::map<std::string, Aggregate> across_buildings;
  /// Means weighted by each building's true appliance energy.
  std::map<std::string, double> energy_weighted;

  void aggregate();
};

/// Per-building metrics for one run. Missing estimates become per-building
/// error entries.
MetricReport evaluate(const Dataset& dataset, const std::string& run_id,
                      const std::vector<int>& buildings, const MetricsConfig& config = {});

struct StreamPair {
  std::string label;
  std::filesystem::path estimate;
  std::filesystem::path truth;
};

/// Metrics straight from CSV files, no dataset required.
BuildingReport evaluate_files(const std::vector<StreamPair>& pairs, double period_s,
                              double max_sample_period_s, const MetricsConfig& config = {});

json to_json(const ApplianceMetrics& m);
json to_json(const BuildingReport& report);
json to_json(const MetricReport& report);
/// One row per (building, appliance).
std::string to_csv(const MetricReport& report);
std::string render_tables(const MetricReport& report);

}  // namespace nilm

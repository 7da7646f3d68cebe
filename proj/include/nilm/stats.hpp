#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "nilm/pipeline.hpp"

namespace nilm {

inline constexpr double kDefaultMaxPowerW = 50'000.0;
inline constexpr double kDefaultOnThresholdW = 5.0;
inline constexpr double kDefaultSwitchBucketS = 60.0;
inline constexpr double kDefaultEntropyBinW = 10.0;

/// Clamps power into [0, max_power_w] and drops NaN rows.
Chunk clip(Chunk chunk, double max_power_w, ClipResult* counts = nullptr);

// -------------------------------------------------------------------- nodes

class ClipNode : public Node {
 public:
  explicit ClipNode(double max_power_w = kDefaultMaxPowerW);
  void transform(Chunk& chunk) override;
  std::optional<AnyResult> accumulate(const Chunk& chunk) override;
  std::optional<AnyResult> empty_result() const override { return ClipResult{}; }

 private:
  double max_power_w_;
  ClipResult last_;
};

class TotalEnergyNode : public Node {
 public:
  TotalEnergyNode(double sample_period_s, double max_sample_period_s);
  static std::shared_ptr<TotalEnergyNode> for_meter(const ElecMeterMeta& meta);
  std::optional<AnyResult> accumulate(const Chunk& chunk) override;
  std::optional<AnyResult> empty_result() const override;

 private:
  double sample_period_s_;
  double max_sample_period_s_;
};

/// Locates sampling gaps; grants `gaps_located`.
class GoodSectionsNode : public Node {
 public:
  explicit GoodSectionsNode(double max_sample_period_s);
  std::optional<AnyResult> accumulate(const Chunk& chunk) override;
  std::optional<AnyResult> empty_result() const override;

 private:
  double max_sample_period_s_;
};

class DropoutRateNode : public Node {
 public:
  explicit DropoutRateNode(double sample_period_s);
  std::optional<AnyResult> accumulate(const Chunk& chunk) override;
  std::optional<AnyResult> empty_result() const override;

 private:
  double sample_period_s_;
};

class HourlyNode : public Node {
 public:
  HourlyNode(std::string timezone, double max_power_w = kDefaultMaxPowerW);
  std::optional<AnyResult> accumulate(const Chunk& chunk) override;
  std::optional<AnyResult> empty_result() const override;

 private:
  std::string timezone_;
  double max_power_w_;
};

class HistogramNode : public Node {
 public:
  explicit HistogramNode(double bin_width_w = kDefaultEntropyBinW);
  std::optional<AnyResult> accumulate(const Chunk& chunk) override;
  std::optional<AnyResult> empty_result() const override;

 private:
  double bin_width_w_;
};

class ValueCountsNode : public Node {
 public:
  ValueCountsNode();
  std::optional<AnyResult> accumulate(const Chunk& chunk) override;
  std::optional<AnyResult> empty_result() const override { return ValueCountsResult{}; }
};

// ------------------------------------------------------- per-chunk helpers

HistogramResult histogram_of(const Chunk& chunk, double bin_width_w, bool round_to_nearest,
                             double max_power_w = 0.0);
/// Pair statistics of two columns of an aligned chunk.
PairStatsResult pair_stats_of(const AlignedChunk& chunk, std::size_t column_a,
                              std::size_t column_b);
/// On/off switch counts of every column of an aligned chunk.
SwitchesResult switches_of(const AlignedChunk& chunk, double on_threshold_w);

// ------------------------------------------------------- meter statistics

struct StatOptions {
  std::size_t chunk_rows = kDefaultChunkRows;
  std::size_t look_ahead_rows = 0;
  double max_power_w = kDefaultMaxPowerW;
};

EnergyResult meter_energy(const ElecMeter& meter, const StatOptions& options = {});
GoodSectionsResult good_sections(const ElecMeter& meter, const StatOptions& options = {});
DropoutResult dropout(const ElecMeter& meter, const StatOptions& options = {});
/// Fraction of expected samples missing; nullopt when undefined.
std::optional<double> dropout_rate(const ElecMeter& meter, const StatOptions& options = {});

enum class HourlyStatistic { median, mean };
HourlyResult hourly(const MeterGroup& group, const StatOptions& options = {},
                    std::optional<double> period_s = std::nullopt);
std::array<std::optional<double>, 24> hourly_stat(const MeterGroup& group, HourlyStatistic statistic,
                                                  const StatOptions& options = {},
                                                  std::optional<double> period_s = std::nullopt);

/// Shannon entropy in bits of the power histogram.
double entropy(const MeterGroup& group, double bin_width_w = kDefaultEntropyBinW,
               const StatOptions& options = {}, std::optional<double> period_s = std::nullopt);

/// kWh per category over select(category=c); meters in several categories
/// count in each. Categories with no meter are absent.
std::map<std::string, double> energy_per_category(
    const MeterGroup& building_group, const Vocabulary& vocabulary = Vocabulary::builtin(),
    const StatOptions& options = {});

SwitchesResult simultaneous_switches(const MeterGroup& group,
                                     double on_threshold_w = kDefaultOnThresholdW,
                                     double bucket_s = kDefaultSwitchBucketS,
                                     std::size_t chunk_rows = kDefaultChunkRows);

PairStatsResult pair_stats(const ElecMeter& a, const ElecMeter& b, double period_s,
                           std::size_t chunk_rows = kDefaultChunkRows);
/// Pearson correlation of two meters on a shared grid.
double correlation(const ElecMeter& a, const ElecMeter& b, double period_s,
                   std::size_t chunk_rows = kDefaultChunkRows);

/// Longest sample period in a group; the finest grid every meter fits.
double coarsest_sample_period(const MeterGroup& group);

}  // namespace nilm

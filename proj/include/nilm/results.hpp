#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nilm/chunk.hpp"
#include "nilm/compensated_sum.hpp"
#include "nilm/metadata.hpp"

namespace nilm {

/// Chunk frames an accumulator has seen, coalesced where they touch.
struct Coverage {
  std::vector<TimeFrame> frames;

  bool empty() const noexcept { return frames.empty(); }
  std::optional<TimeFrame> span() const;
  void add(const TimeFrame& frame);
  /// Appends frames that all lie after this coverage.
  void absorb(const Coverage& later);
};

/// True if `a` lies entirely before `b`, false if entirely after. Throws a
/// merge error if the coverages overlap or interleave.
bool precedes(const Coverage& a, const Coverage& b);

/// Rectangular energy integration. Each sample contributes its power times
/// the gap to the next sample, capped at max_sample_period_s; the final
/// sample contributes one sample period.
struct EnergyResult {
  Coverage coverage;
  double sample_period_s = 1.0;
  double max_sample_period_s = 1.0;
  CompensatedSum joules;
  CompensatedSum seconds;
  std::optional<Sample> first;
  std::optional<Sample> last;
  std::uint64_t n_samples = 0;

  static EnergyResult from_chunk(const Chunk& chunk, double sample_period_s,
                                 double max_sample_period_s);
  void merge_from(const EnergyResult& later);

  double kwh() const;
  double uptime_s() const;
  json to_json() const;
};

/// Maximal frames in which consecutive samples are at most
/// max_sample_period_s apart. A section ends max_sample_period_s after its
/// last sample.
struct GoodSectionsResult {
  Coverage coverage;
  double max_sample_period_s = 1.0;
  std::vector<TimeFrame> sections;
  std::optional<Timestamp> last_timestamp;

  static GoodSectionsResult from_chunk(const Chunk& chunk, double max_sample_period_s);
  void merge_from(const GoodSectionsResult& later);
  json to_json() const;
};

struct DropoutResult {
  Coverage coverage;
  double sample_period_s = 1.0;
  std::uint64_t n_samples = 0;
  std::optional<Timestamp> first_timestamp;
  std::optional<Timestamp> last_timestamp;

  static DropoutResult from_chunk(const Chunk& chunk, double sample_period_s);
  void merge_from(const DropoutResult& later);
  /// Fraction of expected samples missing; nullopt with fewer than 2 samples.
  std::optional<double> rate() const;
  json to_json() const;
};

/// Sparse fixed-width power histogram. With `round_to_nearest` a value p
/// lands in bin round(p / width), otherwise floor(p / width). Values are
/// clamped into [0, max_power_w].
struct HistogramResult {
  Coverage coverage;
  double bin_width_w = 1.0;
  double max_power_w = 0.0;  // 0 means unbounded
  bool round_to_nearest = true;
  std::map<std::int64_t, std::uint64_t> bins;
  std::uint64_t total = 0;

  std::int64_t bin_of(double power) const;
  void add(double power);
  void merge_counts(const HistogramResult& other);
  void merge_from(const HistogramResult& later);

  /// Median of the bin values (bin index times width), averaging the two
  /// middle values for an even count. Requires total > 0.
  double median() const;
  /// Shannon entropy in bits of the bin frequencies. Requires total > 0.
  double entropy_bits() const;
  json to_json() const;
};

/// Hour-of-day histograms and sums in a building's local time.
struct HourlyResult {
  Coverage coverage;
  std::string timezone = "UTC";
  std::array<HistogramResult, 24> histograms;
  std::array<CompensatedSum, 24> sums;

  static HourlyResult make(const std::string& timezone, double max_power_w);
  static HourlyResult from_chunk(const Chunk& chunk, const std::string& timezone,
                                 double max_power_w);
  void merge_from(const HourlyResult& later);

  std::array<std::optional<double>, 24> medians() const;
  std::array<std::optional<double>, 24> means() const;
  json to_json() const;
};

/// Sufficient statistics for Pearson correlation over aligned pairs.
struct PairStatsResult {
  Coverage coverage;
  std::uint64_t n = 0;
  CompensatedSum sum_x, sum_y, sum_xx, sum_yy, sum_xy;

  void add(double x, double y);
  void merge_from(const PairStatsResult& later);
  /// Throws an undefined-statistic error for fewer than two pairs or zero
  /// variance on either side.
  double correlation() const;
  json to_json() const;
};

/// Histogram over buckets of how many meters changed on/off state since the
/// immediately preceding bucket.
struct SwitchesResult {
  Coverage coverage;
  std::size_t n_meters = 0;
  std::vector<std::uint64_t> counts;  // index = number of meters switching
  std::optional<std::int64_t> first_bucket;
  std::optional<std::int64_t> last_bucket;
  std::vector<bool> first_state;
  std::vector<bool> last_state;

  explicit SwitchesResult(std::size_t meters = 0) : n_meters(meters), counts(meters + 1, 0) {}
  /// Adds one bucket's on/off state vector. Buckets must arrive in order.
  void add_bucket(std::int64_t bucket, const std::vector<bool>& state);
  void merge_from(const SwitchesResult& later);
  json to_json() const;
};

/// Multiset of observed power values.
struct ValueCountsResult {
  Coverage coverage;
  std::map<double, std::uint64_t> counts;
  std::uint64_t total = 0;

  static ValueCountsResult from_chunk(const Chunk& chunk);
  void merge_from(const ValueCountsResult& later);
  json to_json() const;
};

struct ClipResult {
  Coverage coverage;
  std::uint64_t dropped_nan = 0;
  std::uint64_t clamped = 0;

  void merge_from(const ClipResult& later);
  json to_json() const;
};

using AnyResult = std::variant<EnergyResult, GoodSectionsResult, DropoutResult,
                               HistogramResult, HourlyResult, PairStatsResult,
                               SwitchesResult, ValueCountsResult, ClipResult>;

/// Combines two accumulators of the same statistic over disjoint coverage,
/// in either argument order. Throws a merge error on mismatched statistics
/// or overlapping frames.
AnyResult merge(const AnyResult& a, const AnyResult& b);

template <typename R>
R merge(const R& a, const R& b) {
  if (a.coverage.empty() && !b.coverage.empty()) return b;
  if (b.coverage.empty()) return a;
  const bool a_first = precedes(a.coverage, b.coverage);
  R out = a_first ? a : b;
  out.merge_from(a_first ? b : a);
  return out;
}

json to_json(const AnyResult& result);

}  // namespace nilm

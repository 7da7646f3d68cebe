#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nilm/datastore.hpp"
#include "nilm/results.hpp"

namespace nilm {

/// One metered channel: its metadata plus the stream it reads from.
class ElecMeter {
 public:
  ElecMeter(const Dataset& dataset, int building, int instance);
  /// View of an estimate stream, carrying the metadata of the raw meter
  /// with the same instance.
  static ElecMeter estimate(const Dataset& dataset, int building, int instance,
                            const std::string& run_id);

  const Dataset& dataset() const noexcept { return *dataset_; }
  int building() const noexcept { return key_.building; }
  int instance() const noexcept { return key_.meter; }
  const ElecMeterMeta& meta() const noexcept { return meta_; }
  const StreamKey& key() const noexcept { return key_; }
  std::string label() const { return key_.label(); }

  ChunkReader load(const LoadOptions& options = {}) const;

  friend bool operator==(const ElecMeter& a, const ElecMeter& b) {
    return a.dataset_ == b.dataset_ && a.key_ == b.key_;
  }

 private:
  ElecMeter(const Dataset& dataset, ElecMeterMeta meta, StreamKey key);

  const Dataset* dataset_;
  ElecMeterMeta meta_;
  StreamKey key_;
};

/// Ordered set of meters from one dataset, usable wherever a meter is.
class MeterGroup {
 public:
  MeterGroup() = default;
  explicit MeterGroup(std::vector<ElecMeter> meters);
  MeterGroup(const ElecMeter& meter);  // NOLINT: a meter is a group of one

  /// Every raw meter of a building, in instance order.
  static MeterGroup building(const Dataset& dataset, int building);

  const std::vector<ElecMeter>& meters() const noexcept { return meters_; }
  std::size_t size() const noexcept { return meters_.size(); }
  bool empty() const noexcept { return meters_.empty(); }
  const ElecMeter& operator[](std::size_t i) const { return meters_[i]; }
  auto begin() const { return meters_.begin(); }
  auto end() const { return meters_.end(); }

  /// Meters of `other` not already present are appended.
  MeterGroup united(const MeterGroup& other) const;
  std::vector<int> instances() const;

 private:
  std::vector<ElecMeter> meters_;
};

struct Predicate {
  enum class Op { eq, in };
  std::string path;
  Op op = Op::eq;
  std::vector<std::string> values;
};

/// Conjunction of metadata predicates. Textual form:
/// `category=lighting,type=fridge|kettle,building=2` where `a|b` means `in`.
class SelectionQuery {
 public:
  SelectionQuery() = default;
  static SelectionQuery parse(const std::string& text);
  static const std::vector<std::string>& valid_paths();

  SelectionQuery& where(const std::string& path, const std::string& value);
  SelectionQuery& where_in(const std::string& path, std::vector<std::string> values);

  const std::vector<Predicate>& predicates() const noexcept { return predicates_; }
  std::string to_string() const;

 private:
  void add(Predicate predicate);
  std::vector<Predicate> predicates_;
};

/// Meters with at least one appliance satisfying every appliance-level
/// predicate (type, category) and satisfying every meter-level predicate.
MeterGroup select(const MeterGroup& group, const SelectionQuery& query,
                  const Vocabulary& vocabulary = Vocabulary::builtin());

/// Site meters of a single-building group.
MeterGroup mains(const MeterGroup& group);
/// Meters wired directly below a site meter.
MeterGroup submeters(const MeterGroup& group);

/// Streaming resampler onto the epoch-aligned grid t_k = k * period_s.
/// The value of bin k is the mean of samples in [t_k, t_k + period_s); an
/// empty bin repeats the last sample if it is less than max_sample_period_s
/// old at t_k, otherwise the bin is a gap. This matches the half-open end
/// of a good section.
class Resampler {
 public:
  Resampler(SampleCursor cursor, double period_s, double max_sample_period_s);

  /// Bins must be requested in strictly increasing order.
  std::optional<double> value_at(std::int64_t bin);
  /// Lowest bin >= `bin` that can hold a value, or nullopt when exhausted.
  std::optional<std::int64_t> earliest_candidate(std::int64_t bin);

 private:
  std::int64_t bin_of(Timestamp t) const;

  SampleCursor cursor_;
  double period_s_;
  double max_sample_period_s_;
  std::optional<Sample> peeked_;
  bool exhausted_ = false;
  std::optional<Sample> last_;
};

/// Row-at-a-time alignment of several meters on one resample grid. A row
/// is produced only where every meter has a value.
class AlignedCursor {
 public:
  AlignedCursor(const MeterGroup& group, double period_s,
                std::optional<std::vector<TimeFrame>> sections = std::nullopt);
  AlignedCursor(std::vector<Resampler> resamplers, double period_s);

  std::size_t width() const noexcept { return resamplers_.size(); }
  double period_s() const noexcept { return period_s_; }
  /// Fills `values` (resized to width()) and returns the row's grid bin.
  std::optional<std::int64_t> next(std::vector<double>& values);

 private:
  std::vector<Resampler> resamplers_;
  double period_s_;
  std::optional<std::int64_t> bin_;
  bool exhausted_ = false;
};

/// A block of aligned rows in row-major order.
struct AlignedChunk {
  TimeFrame frame;
  std::size_t width = 0;
  std::vector<Timestamp> timestamps;
  std::vector<std::int64_t> bins;
  std::vector<double> values;
  ResidencyToken residency;

  std::size_t rows() const noexcept { return timestamps.size(); }
  double at(std::size_t row, std::size_t column) const { return values[row * width + column]; }
};

class AlignedReader {
 public:
  AlignedReader(const MeterGroup& group, std::size_t chunk_rows, double period_s,
                std::optional<std::vector<TimeFrame>> sections = std::nullopt);
  /// Reader over an arbitrary cursor; chunks are untracked when `tracker`
  /// is null.
  AlignedReader(AlignedCursor cursor, std::size_t chunk_rows,
                std::shared_ptr<ResidencyTracker> tracker = nullptr,
                std::string label = "aligned");

  std::optional<AlignedChunk> next();
  std::size_t width() const noexcept { return cursor_.width(); }

 private:
  AlignedCursor cursor_;
  std::size_t chunk_rows_;
  std::shared_ptr<ResidencyTracker> tracker_;
  std::string label_;
};

/// Chunks of the summed power of a group on the shared grid.
class SummedReader {
 public:
  SummedReader(const MeterGroup& group, std::size_t chunk_rows, double period_s,
               std::optional<std::vector<TimeFrame>> sections = std::nullopt);

  std::optional<Chunk> next();

 private:
  AlignedCursor cursor_;
  std::size_t chunk_rows_;
  std::shared_ptr<ResidencyTracker> tracker_;
  std::string label_;
  std::vector<double> row_;
};

/// Requires a non-empty group and period_s >= every meter's sample period.
SummedReader load_summed(const MeterGroup& group, std::size_t chunk_rows, double period_s,
                         std::optional<std::vector<TimeFrame>> sections = std::nullopt);

struct GroupEnergy {
  std::vector<std::pair<StreamKey, EnergyResult>> per_meter;
  double total_kwh = 0.0;
  /// Labels of meters whose stream held no samples.
  std::vector<std::string> empty_streams;
};

/// Per-meter energy through the Clip -> TotalEnergy pipeline, summed in
/// instance order.
GroupEnergy total_energy(const MeterGroup& group, std::size_t chunk_rows = kDefaultChunkRows);

struct SubmeteredFraction {
  double fraction = 0.0;
  double raw_ratio = 0.0;
  bool clamped = false;
};

/// Energy of submeters() over energy of mains(), clamped to [0, 1].
SubmeteredFraction proportion_of_energy_submetered(
    const MeterGroup& building_group, std::size_t chunk_rows = kDefaultChunkRows);

}  // namespace nilm

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nilm/elec.hpp"

namespace nilm {

inline constexpr int kModelVersion = 1;

struct ApplianceModel {
  int meter_instance = 0;
  std::string label;
  /// Ascending power levels in watts; states[0] == 0.
  std::vector<double> states;

  friend bool operator==(const ApplianceModel&, const ApplianceModel&) = default;
};

struct COModel {
  std::vector<ApplianceModel> appliances;
  std::string dataset;
  int building = 0;
  TimeFrame train_timeframe{0.0, 1.0};
  double sample_period_s = 1.0;

  std::uint64_t combinations() const;
  /// Throws training errors on broken state lists.
  void validate() const;

  friend bool operator==(const COModel&, const COModel&) = default;
};

struct TrainConfig {
  std::size_t k_max = 3;
  double min_state_w = 5.0;
  std::uint64_t combination_limit = 1'000'000;
  std::size_t min_samples = 100;
  std::size_t iterations = 20;
  double merge_within_w = 1.0;
  double max_power_w = 50'000.0;
  std::size_t chunk_rows = kDefaultChunkRows;
};

/// States for one appliance from a weighted set of observed power values.
/// Only nonzero values are clustered; the zero state is always present.
std::vector<double> cluster_states(const std::map<double, std::uint64_t>& value_counts,
                                   const TrainConfig& config = {});

COModel train(const MeterGroup& submeters, const TimeFrame& timeframe,
              const TrainConfig& config = {});

/// Every state combination with its total power, in lexicographic order of
/// the index vector (last appliance varies fastest).
class CombinationTable {
 public:
  explicit CombinationTable(const COModel& model);

  std::size_t size() const noexcept { return totals_.size(); }
  std::size_t appliances() const noexcept { return radix_.size(); }
  /// Lexicographic position of the best combination for aggregate power y.
  std::size_t best(double y) const;
  std::vector<std::size_t> decode(std::size_t combination) const;
  double total(std::size_t combination) const { return totals_[combination]; }

 private:
  std::vector<std::size_t> radix_;
  std::vector<double> totals_;
};

/// argmin over combinations of |y - total|, ties to the lower total, then
/// to the lexicographically smaller index vector. y < 0 counts as 0.
std::vector<std::size_t> disaggregate_sample(double y, const COModel& model);

struct DisaggregateOptions {
  std::size_t chunk_rows = kDefaultChunkRows;
  std::optional<std::vector<TimeFrame>> sections;
  std::function<void(const TimeFrame& frame, std::size_t rows)> progress;
};

struct DisaggregateSummary {
  std::size_t chunks = 0;
  std::size_t rows = 0;
  std::vector<StreamKey> streams;
};

/// Streams the summed mains through the model and appends one estimate
/// stream per appliance under estimates/<run_id>/ in `out`.
DisaggregateSummary disaggregate(const MeterGroup& mains, const COModel& model, Dataset& out,
                                 const std::string& run_id,
                                 const DisaggregateOptions& options = {});

json to_json(const COModel& model);
COModel model_from_json(const json& doc);
void save_model(const COModel& model, const std::filesystem::path& path);
COModel load_model(const std::filesystem::path& path);

}  // namespace nilm

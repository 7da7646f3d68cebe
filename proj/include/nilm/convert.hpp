#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nilm/datastore.hpp"

namespace nilm {

// ---------------------------------------------------------------- REDD

std::map<std::string, std::string> default_redd_labels();

struct ReddMapping {
  std::string dataset_name = "REDD";
  /// Building id when the source is a single house directory.
  int building = 1;
  std::string timezone = "US/Eastern";
  std::vector<int> site_meters = {1, 2};
  /// Source label -> vocabulary type. Starts with the common REDD labels;
  /// a mapping file adds to or overrides these entries.
  std::map<std::string, std::string> labels = default_redd_labels();
  double site_sample_period_s = 1.0;
  double site_max_sample_period_s = 10.0;
  double submeter_sample_period_s = 3.0;
  double submeter_max_sample_period_s = 30.0;

  static ReddMapping from_json(const json& doc);
  json to_json() const;
};

struct BuildingConversion {
  int building = 0;
  std::filesystem::path source;
  bool ok = true;
  std::string error;
  std::size_t streams = 0;
  std::uint64_t rows = 0;
  std::uint64_t duplicates_dropped = 0;
  /// Channels whose rows arrived out of order and were sorted.
  std::vector<int> resorted;
  std::vector<std::string> unmapped_labels;
};

struct ConversionReport {
  std::vector<BuildingConversion> buildings;
  bool ok() const;
  json to_json() const;
};

/// `source` is either one house directory (labels.dat + channel_<M>.dat) or
/// a directory of house_<N> subdirectories. A building that fails is
/// removed from the output and reported; the others are kept.
ConversionReport convert_redd(const std::filesystem::path& source,
                              const std::filesystem::path& dest, const ReddMapping& mapping,
                              std::size_t chunk_rows = kDefaultChunkRows);

/// Parses labels.dat into channel -> label.
std::map<int, std::string> read_redd_labels(const std::filesystem::path& house_dir);

// ----------------------------------------------------------- synthetic

struct SynthAppliance {
  std::string type;
  /// Power levels; states[0] is off. Each on period picks one of the
  /// nonzero levels uniformly.
  std::vector<double> states;
  double mean_on_s = 600.0;
  double mean_off_s = 1800.0;
};

struct SynthSpec {
  std::uint64_t seed = 42;
  std::string name = "synthetic";
  std::size_t n_buildings = 1;
  double start = 1388534400.0;
  double duration_s = 86400.0;
  double sample_period_s = 10.0;
  /// Defaults to three sample periods.
  std::optional<double> max_sample_period_s;
  double mains_noise_w = 0.0;
  double unmetered_base_w = 0.0;
  std::string timezone = "UTC";
  std::vector<SynthAppliance> appliances;
  /// Per-building appliance lists; overrides `appliances` and n_buildings.
  std::vector<std::vector<SynthAppliance>> buildings;

  static SynthSpec from_json(const json& doc);
  json to_json() const;
  void validate() const;
  std::size_t building_count() const;
  const std::vector<SynthAppliance>& appliances_of(std::size_t building_index) const;
  double max_period() const { return max_sample_period_s.value_or(3.0 * sample_period_s); }
};

/// Three two-state appliances (fridge, kettle, washing machine).
SynthSpec default_synth_spec();

struct SynthOptions {
  bool force = false;
  std::size_t chunk_rows = kDefaultChunkRows;
};

/// Writes a deterministic dataset: meter 1 is the mains of each building,
/// meters 2..n+1 are its appliances. Refuses a non-empty destination unless
/// `force` is set, in which case the destination is replaced.
DatasetMeta generate_synthetic(const SynthSpec& spec, const std::filesystem::path& dest,
                               const SynthOptions& options = {});

/// splitmix64 step, used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace nilm

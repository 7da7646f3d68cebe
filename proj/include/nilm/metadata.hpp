#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

namespace nilm {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// Controlled vocabulary of appliance types and the categories they belong
/// to, e.g. "fridge" -> {"cold"}.
class Vocabulary {
 public:
  /// The vocabulary bundled with the library (resources/appliance_types.json).
  static const Vocabulary& builtin();
  static Vocabulary from_json(const json& doc);

  int version() const noexcept { return version_; }
  bool contains(const std::string& type) const;
  /// Throws VocabularyError (with a nearest-match suggestion) if unknown.
  const std::set<std::string>& categories_of(const std::string& type) const;
  const std::vector<std::string>& categories() const noexcept { return categories_; }
  std::vector<std::string> types() const;
  /// Closest type name by edit distance, or empty if nothing is within 3 edits.
  std::string nearest(const std::string& name) const;

 private:
  int version_ = 0;
  std::vector<std::string> categories_;
  std::map<std::string, std::set<std::string>> entries_;
};

/// Category set of a vocabulary entry; never empty.
const std::set<std::string>& category_of(const Vocabulary& vocabulary,
                                         const std::string& appliance_type);

struct ApplianceRef {
  std::string type;
  int instance = 1;
  json extra = json::object();
};

struct ElecMeterMeta {
  int instance = 0;
  std::string device_model;
  double sample_period_s = 0.0;
  double max_sample_period_s = 0.0;
  bool site_meter = false;
  std::optional<int> submeter_of;
  std::vector<ApplianceRef> appliances;
  /// Requirement keys already satisfied at the source (e.g. "clipped").
  std::vector<std::string> preprocessing;
  json extra = json::object();
};

struct BuildingMeta {
  int instance = 0;
  std::string timezone = "UTC";
  std::vector<ElecMeterMeta> meters;
  json extra = json::object();

  const ElecMeterMeta& meter(int instance) const;
  const ElecMeterMeta* find_meter(int instance) const;
};

struct DatasetMeta {
  std::string name;
  int format_version = kFormatVersion;
  std::vector<BuildingMeta> buildings;
  json extra = json::object();

  const BuildingMeta& building(int instance) const;
  const BuildingMeta* find_building(int instance) const;
};

json to_json(const ElecMeterMeta& meter);
json to_json(const BuildingMeta& building);
ElecMeterMeta meter_from_json(const json& doc, const std::string& source);
BuildingMeta building_from_json(const json& doc, const std::string& source);

/// Reads `<root>/dataset.json` and every `building<N>/metadata.json` it
/// lists, then validates the result against `vocabulary`.
DatasetMeta load_metadata(const std::filesystem::path& root,
                          const Vocabulary& vocabulary = Vocabulary::builtin());
void save_metadata(const std::filesystem::path& root, const DatasetMeta& meta);

/// Checks every structural invariant: unique instances, site_meter XOR
/// submeter_of, same-building wiring, acyclic forest, vocabulary membership.
void validate(const BuildingMeta& building, const Vocabulary& vocabulary,
              const std::string& source = "metadata.json");
void validate(const DatasetMeta& meta, const Vocabulary& vocabulary);

/// Site meters in instance order. Throws a configuration error if none.
std::vector<int> mains_meters(const BuildingMeta& building);
/// Direct children of a meter, in instance order.
std::vector<int> children(const BuildingMeta& building, int meter_instance);
/// All meters transitively downstream of a meter, in preorder.
std::vector<int> descendants(const BuildingMeta& building, int meter_instance);
/// Number of submeter_of edges.
std::size_t wiring_edges(const BuildingMeta& building);

}  // namespace nilm

#include "nilm/metadata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "nilm/errors.hpp"

namespace nilm {

// Generated from resources/appliance_types.json at configure time.
extern const char* const kBuiltinVocabularyJson;

namespace {

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

[[noreturn]] void schema_error(const std::string& source, const std::string& field,
                               const std::string& problem) {
  throw Error(ErrorCode::metadata, source + ": field '" + field + "' " + problem);
}

const json& require(const json& doc, const char* field, const std::string& source) {
  if (!doc.is_object()) schema_error(source, field, "expected inside a JSON object");
  auto it = doc.find(field);
  if (it == doc.end()) schema_error(source, field, "is missing");
  return *it;
}

template <typename T>
T get_as(const json& value, const char* field, const std::string& source) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    schema_error(source, field, "has the wrong type");
  }
}

int positive_int(const json& doc, const char* field, const std::string& source) {
  const json& v = require(doc, field, source);
  if (!v.is_number_integer()) schema_error(source, field, "must be an integer");
  const int n = v.get<int>();
  if (n < 1) schema_error(source, field, "must be positive");
  return n;
}

double positive_number(const json& doc, const char* field, const std::string& source) {
  const json& v = require(doc, field, source);
  if (!v.is_number()) schema_error(source, field, "must be a number");
  const double x = v.get<double>();
  if (!(x > 0.0)) schema_error(source, field, "must be positive");
  return x;
}

json extras(const json& doc, std::initializer_list<const char*> known) {
  json out = json::object();
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) {
          return it.key() == k;
        }) == known.end()) {
      out[it.key()] = it.value();
    }
  }
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::metadata, path.string() + ": metadata file is missing");
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::metadata,
                path.string() + ": corrupt metadata (" + e.what() + ")");
  }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, path.string() + ": cannot write");
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::io, path.string() + ": write failed");
}

}  // namespace

// ---------------------------------------------------------------- vocabulary

const Vocabulary& Vocabulary::builtin() {
  static const Vocabulary vocabulary = from_json(json::parse(kBuiltinVocabularyJson));
  return vocabulary;
}

Vocabulary Vocabulary::from_json(const json& doc) {
  const std::string source = "appliance vocabulary";
  Vocabulary v;
  v.version_ = positive_int(doc, "vocabulary_version", source);
  v.categories_ =
      get_as<std::vector<std::string>>(require(doc, "categories", source), "categories", source);
  const json& types = require(doc, "appliance_types", source);
  if (!types.is_object()) schema_error(source, "appliance_types", "must be an object");
  for (auto it = types.begin(); it != types.end(); ++it) {
    auto cats = get_as<std::set<std::string>>(it.value(), "appliance_types", source);
    if (cats.empty()) {
      schema_error(source, "appliance_types." + it.key(), "has no categories");
    }
    for (const auto& c : cats) {
      if (std::find(v.categories_.begin(), v.categories_.end(), c) == v.categories_.end()) {
        schema_error(source, "appliance_types." + it.key(),
                     "references undeclared category '" + c + "'");
      }
    }
    v.entries_.emplace(it.key(), std::move(cats));
  }
  return v;
}

bool Vocabulary::contains(const std::string& type) const {
  return entries_.count(type) != 0;
}

const std::set<std::string>& Vocabulary::categories_of(const std::string& type) const {
  auto it = entries_.find(type);
  if (it == entries_.end()) {
    const std::string suggestion = nearest(type);
    std::string message = "unknown appliance type '" + type + "'";
    if (!suggestion.empty()) message += "; did you mean '" + suggestion + "'?";
    throw VocabularyError(type, suggestion, message);
  }
  return it->second;
}

std::vector<std::string> Vocabulary::types() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::string Vocabulary::nearest(const std::string& name) const {
  std::string best;
  std::size_t best_distance = 4;
  for (const auto& [candidate, _] : entries_) {
    const std::size_t d = edit_distance(name, candidate);
    if (d < best_distance) {
      best_distance = d;
      best = candidate;
    }
  }
  return best;
}

const std::set<std::string>& category_of(const Vocabulary& vocabulary,
                                         const std::string& appliance_type) {
  return vocabulary.categories_of(appliance_type);
}

// ------------------------------------------------------------------ lookups

const ElecMeterMeta* BuildingMeta::find_meter(int inst) const {
  for (const auto& m : meters) {
    if (m.instance == inst) return &m;
  }
  return nullptr;
}

const ElecMeterMeta& BuildingMeta::meter(int inst) const {
  if (const auto* m = find_meter(inst)) return *m;
  throw Error(ErrorCode::not_found, "building " + std::to_string(instance) +
                                        " has no meter " + std::to_string(inst));
}

const BuildingMeta* DatasetMeta::find_building(int inst) const {
  for (const auto& b : buildings) {
    if (b.instance == inst) return &b;
  }
  return nullptr;
}

const BuildingMeta& DatasetMeta::building(int inst) const {
  if (const auto* b = find_building(inst)) return *b;
  throw Error(ErrorCode::not_found,
              "dataset '" + name + "' has no building " + std::to_string(inst));
}

// -------------------------------------------------------------------- JSON

json to_json(const ElecMeterMeta& m) {
  json doc = m.extra;
  doc["instance"] = m.instance;
  doc["device_model"] = m.device_model;
  doc["sample_period_s"] = m.sample_period_s;
  doc["max_sample_period_s"] = m.max_sample_period_s;
  doc["site_meter"] = m.site_meter;
  if (m.submeter_of) doc["submeter_of"] = *m.submeter_of;
  json apps = json::array();
  for (const auto& a : m.appliances) {
    json entry = a.extra;
    entry["type"] = a.type;
    entry["instance"] = a.instance;
    apps.push_back(std::move(entry));
  }
  doc["appliances"] = std::move(apps);
  if (!m.preprocessing.empty()) doc["preprocessing"] = m.preprocessing;
  return doc;
}

json to_json(const BuildingMeta& b) {
  json doc = b.extra;
  doc["instance"] = b.instance;
  doc["timezone"] = b.timezone;
  json meters = json::array();
  for (const auto& m : b.meters) meters.push_back(to_json(m));
  doc["meters"] = std::move(meters);
  return doc;
}

ElecMeterMeta meter_from_json(const json& doc, const std::string& source) {
  ElecMeterMeta m;
  m.instance = positive_int(doc, "instance", source);
  const std::string where = source + " meter " + std::to_string(m.instance);
  m.device_model = get_as<std::string>(require(doc, "device_model", where), "device_model", where);
  m.sample_period_s = positive_number(doc, "sample_period_s", where);
  m.max_sample_period_s = positive_number(doc, "max_sample_period_s", where);
  if (m.max_sample_period_s < m.sample_period_s) {
    schema_error(where, "max_sample_period_s", "must be >= sample_period_s");
  }
  m.site_meter = get_as<bool>(require(doc, "site_meter", where), "site_meter", where);
  if (auto it = doc.find("submeter_of"); it != doc.end() && !it->is_null()) {
    m.submeter_of = positive_int(doc, "submeter_of", where);
  }
  if (auto it = doc.find("appliances"); it != doc.end()) {
    if (!it->is_array()) schema_error(where, "appliances", "must be an array");
    for (const auto& entry : *it) {
      ApplianceRef a;
      a.type = get_as<std::string>(require(entry, "type", where), "appliances[].type", where);
      a.instance = entry.contains("instance") ? positive_int(entry, "instance", where) : 1;
      a.extra = extras(entry, {"type", "instance"});
      m.appliances.push_back(std::move(a));
    }
  }
  if (auto it = doc.find("preprocessing"); it != doc.end()) {
    m.preprocessing = get_as<std::vector<std::string>>(*it, "preprocessing", where);
  }
  m.extra = extras(doc, {"instance", "device_model", "sample_period_s", "max_sample_period_s",
                         "site_meter", "submeter_of", "appliances", "preprocessing"});
  return m;
}

BuildingMeta building_from_json(const json& doc, const std::string& source) {
  BuildingMeta b;
  b.instance = positive_int(doc, "instance", source);
  if (auto it = doc.find("timezone"); it != doc.end()) {
    b.timezone = get_as<std::string>(*it, "timezone", source);
  }
  const json& meters = require(doc, "meters", source);
  if (!meters.is_array()) schema_error(source, "meters", "must be an array");
  for (const auto& m : meters) b.meters.push_back(meter_from_json(m, source));
  b.extra = extras(doc, {"instance", "timezone", "meters"});
  return b;
}

DatasetMeta load_metadata(const std::filesystem::path& root, const Vocabulary& vocabulary) {
  const auto dataset_file = root / "dataset.json";
  const json doc = read_json_file(dataset_file);
  const std::string source = dataset_file.string();

  DatasetMeta meta;
  const json& version = require(doc, "format_version", source);
  if (!version.is_number_integer()) schema_error(source, "format_version", "must be an integer");
  meta.format_version = version.get<int>();
  if (meta.format_version != kFormatVersion) {
    throw Error(ErrorCode::format_version,
                source + ": unsupported format_version " + std::to_string(meta.format_version) +
                    " (this build reads version " + std::to_string(kFormatVersion) + ")");
  }
  meta.name = get_as<std::string>(require(doc, "name", source), "name", source);
  const json& buildings = require(doc, "buildings", source);
  if (!buildings.is_array()) schema_error(source, "buildings", "must be an array");
  for (const auto& entry : buildings) {
    if (!entry.is_number_integer() || entry.get<int>() < 1) {
      schema_error(source, "buildings", "must list positive building instances");
    }
    const int instance = entry.get<int>();
    const auto file = root / ("building" + std::to_string(instance)) / "metadata.json";
    BuildingMeta b = building_from_json(read_json_file(file), file.string());
    if (b.instance != instance) {
      schema_error(file.string(), "instance",
                   "is " + std::to_string(b.instance) + " but the directory is building" +
                       std::to_string(instance));
    }
    validate(b, vocabulary, file.string());
    meta.buildings.push_back(std::move(b));
  }
  meta.extra = extras(doc, {"name", "format_version", "buildings"});
  validate(meta, vocabulary);
  return meta;
}

void save_metadata(const std::filesystem::path& root, const DatasetMeta& meta) {
  std::filesystem::create_directories(root);
  json doc = meta.extra;
  doc["name"] = meta.name;
  doc["format_version"] = meta.format_version;
  json ids = json::array();
  for (const auto& b : meta.buildings) ids.push_back(b.instance);
  doc["buildings"] = std::move(ids);
  write_json_file(root / "dataset.json", doc);
  for (const auto& b : meta.buildings) {
    const auto dir = root / ("building" + std::to_string(b.instance));
    std::filesystem::create_directories(dir / "elec");
    write_json_file(dir / "metadata.json", to_json(b));
  }
}

// -------------------------------------------------------------- validation

void validate(const BuildingMeta& building, const Vocabulary& vocabulary,
              const std::string& source) {
  std::set<int> seen;
  for (const auto& m : building.meters) {
    const std::string where = source + " meter " + std::to_string(m.instance);
    if (!seen.insert(m.instance).second) {
      schema_error(source, "meters[].instance",
                   "duplicates meter instance " + std::to_string(m.instance));
    }
    if (m.site_meter == m.submeter_of.has_value()) {
      schema_error(where, "site_meter",
                   "must be true exactly when submeter_of is absent");
    }
    if (m.instance <= 0) schema_error(where, "instance", "must be a positive integer");
    if (!(m.sample_period_s > 0.0) || !std::isfinite(m.sample_period_s)) {
      schema_error(where, "sample_period_s", "must be a positive number");
    }
    if (!(m.max_sample_period_s >= m.sample_period_s) || !std::isfinite(m.max_sample_period_s)) {
      schema_error(where, "max_sample_period_s", "must be >= sample_period_s");
    }
    for (const auto& a : m.appliances) vocabulary.categories_of(a.type);
  }
  for (const auto& m : building.meters) {
    if (m.submeter_of && !building.find_meter(*m.submeter_of)) {
      schema_error(source + " meter " + std::to_string(m.instance), "submeter_of",
                   "references meter " + std::to_string(*m.submeter_of) +
                       " which is not in building " + std::to_string(building.instance));
    }
  }

  // Each meter follows its parent chain; a chain that revisits a meter
  // without reaching a site meter is a cycle.
  std::set<int> verified;
  for (const auto& m : building.meters) {
    std::vector<int> path;
    std::set<int> on_path;
    const ElecMeterMeta* cur = &m;
    while (cur && !cur->site_meter && !verified.count(cur->instance)) {
      if (!on_path.insert(cur->instance).second) {
        auto start = std::find(path.begin(), path.end(), cur->instance);
        std::vector<int> cycle(start, path.end());
        std::rotate(cycle.begin(), std::min_element(cycle.begin(), cycle.end()), cycle.end());
        std::ostringstream msg;
        msg << source << ": wiring cycle between meters [";
        for (std::size_t i = 0; i < cycle.size(); ++i) msg << (i ? "," : "") << cycle[i];
        msg << "]";
        throw CycleError(cycle, msg.str());
      }
      path.push_back(cur->instance);
      cur = building.find_meter(*cur->submeter_of);
    }
    verified.insert(path.begin(), path.end());
  }
}

void validate(const DatasetMeta& meta, const Vocabulary& vocabulary) {
  std::set<int> seen;
  for (const auto& b : meta.buildings) {
    if (!seen.insert(b.instance).second) {
      schema_error("dataset.json", "buildings",
                   "duplicates building " + std::to_string(b.instance));
    }
    validate(b, vocabulary, "building" + std::to_string(b.instance) + "/metadata.json");
  }
}

// ----------------------------------------------------------------- wiring

std::vector<int> mains_meters(const BuildingMeta& building) {
  std::vector<int> out;
  for (const auto& m : building.meters) {
    if (m.site_meter) out.push_back(m.instance);
  }
  if (out.empty()) {
    throw Error(ErrorCode::configuration,
                "building " + std::to_string(building.instance) + " has no site meter");
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> children(const BuildingMeta& building, int meter_instance) {
  std::vector<int> out;
  for (const auto& m : building.meters) {
    if (m.submeter_of == meter_instance) out.push_back(m.instance);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> descendants(const BuildingMeta& building, int meter_instance) {
  building.meter(meter_instance);
  std::vector<int> out;
  std::function<void(int)> visit = [&](int parent) {
    for (int child : children(building, parent)) {
      out.push_back(child);
      visit(child);
    }
  };
  visit(meter_instance);
  return out;
}

std::size_t wiring_edges(const BuildingMeta& building) {
  return static_cast<std::size_t>(std::count_if(
      building.meters.begin(), building.meters.end(),
      [](const ElecMeterMeta& m) { return m.submeter_of.has_value(); }));
}

}  // namespace nilm

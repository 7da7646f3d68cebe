#include "nilm/convert.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <regex>

#include "nilm/errors.hpp"
#include "nilm/log.hpp"

namespace fs = std::filesystem;

namespace nilm {

// ------------------------------------------------------------------ mapping

std::map<std::string, std::string> default_redd_labels() {
  return {{"refrigerator", "fridge"},
          {"lighting", "light"},
          {"dishwaser", "dish washer"},
          {"dishwasher", "dish washer"},
          {"microwave", "microwave"},
          {"washer_dryer", "washer dryer"},
          {"oven", "electric oven"},
          {"stove", "electric stove"},
          {"electric_heat", "electric space heater"},
          {"air_conditioning", "air conditioner"},
          {"kitchen_outlets", "sockets"},
          {"bathroom_gfi", "sockets"},
          {"outdoor_outlets", "sockets"},
          {"outlets_unknown", "sockets"}};
}

ReddMapping ReddMapping::from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::configuration, "mapping must be a JSON object");
  static const std::set<std::string> known = {
      "dataset",  "building", "timezone", "site_meters", "labels", "site_sample_period_s",
      "site_max_sample_period_s", "submeter_sample_period_s", "submeter_max_sample_period_s"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw Error(ErrorCode::configuration, "unknown mapping field '" + key + "'");
  }
  ReddMapping m;
  try {
    m.dataset_name = doc.value("dataset", m.dataset_name);
    m.building = doc.value("building", m.building);
    m.timezone = doc.value("timezone", m.timezone);
    m.site_meters = doc.value("site_meters", m.site_meters);
    const json labels = doc.value("labels", json::object());
    for (auto it = labels.begin(); it != labels.end(); ++it) m.labels[it.key()] = it.value().get<std::string>();
    m.site_sample_period_s = doc.value("site_sample_period_s", m.site_sample_period_s);
    m.site_max_sample_period_s = doc.value("site_max_sample_period_s", m.site_max_sample_period_s);
    m.submeter_sample_period_s = doc.value("submeter_sample_period_s", m.submeter_sample_period_s);
    m.submeter_max_sample_period_s =
        doc.value("submeter_max_sample_period_s", m.submeter_max_sample_period_s);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::configuration, std::string("invalid mapping: ") + e.what());
  }
  if (m.site_meters.empty()) throw Error(ErrorCode::configuration, "mapping needs site_meters");
  for (double p : {m.site_sample_period_s, m.site_max_sample_period_s, m.submeter_sample_period_s,
                   m.submeter_max_sample_period_s}) {
    if (!(p > 0.0)) throw Error(ErrorCode::configuration, "mapping periods must be positive");
  }
  for (const auto& [label, type] : m.labels) {
    Vocabulary::builtin().categories_of(type);
  }
  return m;
}

json ReddMapping::to_json() const {
  return {{"dataset", dataset_name},
          {"building", building},
          {"timezone", timezone},
          {"site_meters", site_meters},
          {"labels", labels},
          {"site_sample_period_s", site_sample_period_s},
          {"site_max_sample_period_s", site_max_sample_period_s},
          {"submeter_sample_period_s", submeter_sample_period_s},
          {"submeter_max_sample_period_s", submeter_max_sample_period_s}};
}

bool ConversionReport::ok() const {
  return std::all_of(buildings.begin(), buildings.end(), [](const auto& b) { return b.ok; });
}

json ConversionReport::to_json() const {
  json out = json::array();
  for (const auto& b : buildings) {
    json j = {{"building", b.building}, {"source", b.source.string()},
              {"status", b.ok ? "ok" : "error"}};
    if (!b.ok) {
      j["error"] = b.error;
    } else {
      j["streams"] = b.streams;
      j["rows"] = b.rows;
      j["duplicates_dropped"] = b.duplicates_dropped;
      j["resorted_channels"] = b.resorted;
      j["unmapped_labels"] = b.unmapped_labels;
    }
    out.push_back(std::move(j));
  }
  return {{"buildings", std::move(out)}};
}

// --------------------------------------------------------------- REDD input

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// "<unix_ts> <watts>"; returns nullopt for blank lines.
std::optional<Sample> parse_redd_row(std::string_view line, const fs::path& file,
                                     std::uint64_t line_no) {
  line = trim(line);
  if (line.empty()) return std::nullopt;
  const auto gap = line.find_first_of(" \t");
  if (gap == std::string_view::npos) throw ParseError(file.string(), line_no, "expected two fields");
  const std::string_view ts_text = line.substr(0, gap);
  const std::string_view p_text = trim(line.substr(gap));
  double ts = 0.0, p = 0.0;
  auto r1 = std::from_chars(ts_text.data(), ts_text.data() + ts_text.size(), ts);
  auto r2 = std::from_chars(p_text.data(), p_text.data() + p_text.size(), p);
  if (r1.ec != std::errc() || r1.ptr != ts_text.data() + ts_text.size() || !std::isfinite(ts)) {
    throw ParseError(file.string(), line_no, "bad timestamp '" + std::string(ts_text) + "'");
  }
  if (r2.ec != std::errc() || r2.ptr != p_text.data() + p_text.size()) {
    throw ParseError(file.string(), line_no, "bad power value '" + std::string(p_text) + "'");
  }
  return Sample{quantize_timestamp(ts), p};
}

class LineReader {
 public:
  explicit LineReader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw Error(ErrorCode::io, "cannot open " + path.string());
  }
  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    return true;
  }
  std::uint64_t line_no() const { return line_no_; }

 private:
  fs::path path_;
  std::ifstream in_;
  std::uint64_t line_no_ = 0;
};

struct ChannelStats {
  std::uint64_t rows = 0;
  std::uint64_t duplicates = 0;
  bool resorted = false;
};

void flush_rows(Dataset& ds, const StreamKey& key, std::vector<Sample>& rows) {
  if (rows.empty()) return;
  ds.append(key, Chunk::from_samples(std::move(rows)));
  rows.clear();
}

// Streams a sorted channel straight through; returns false at the first
// out-of-order row, leaving a partial stream for the caller to discard.
bool stream_channel(const fs::path& file, Dataset& ds, const StreamKey& key,
                    std::size_t chunk_rows, ChannelStats& stats) {
  LineReader in(file);
  std::string line;
  std::vector<Sample> rows;
  rows.reserve(std::min<std::size_t>(chunk_rows, 1 << 16));
  std::optional<Timestamp> last;
  while (in.next(line)) {
    auto s = parse_redd_row(line, file, in.line_no());
    if (!s) continue;
    if (last && s->timestamp < *last) return false;
    if (last && s->timestamp == *last) {
      ++stats.duplicates;
      continue;
    }
    last = s->timestamp;
    rows.push_back(*s);
    ++stats.rows;
    if (rows.size() >= chunk_rows) flush_rows(ds, key, rows);
  }
  flush_rows(ds, key, rows);
  return true;
}

void sort_channel(const fs::path& file, Dataset& ds, const StreamKey& key, std::size_t chunk_rows,
                  ChannelStats& stats) {
  LineReader in(file);
  std::string line;
  std::vector<Sample> all;
  while (in.next(line)) {
    if (auto s = parse_redd_row(line, file, in.line_no())) all.push_back(*s);
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Sample& a, const Sample& b) { return a.timestamp < b.timestamp; });
  stats = ChannelStats{0, 0, true};
  std::vector<Sample> rows;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i > 0 && all[i].timestamp == all[i - 1].timestamp) {
      ++stats.duplicates;
      continue;
    }
    rows.push_back(all[i]);
    ++stats.rows;
    if (rows.size() >= chunk_rows) flush_rows(ds, key, rows);
  }
  flush_rows(ds, key, rows);
}

struct House {
  int building;
  fs::path dir;
};

std::vector<House> find_houses(const fs::path& source, const ReddMapping& mapping) {
  if (!fs::is_directory(source)) {
    throw Error(ErrorCode::io, source.string() + ": source directory not found");
  }
  if (fs::exists(source / "labels.dat")) return {{mapping.building, source}};
  std::vector<House> houses;
  const std::regex pattern(R"(house_(\d+))");
  for (const auto& entry : fs::directory_iterator(source)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && std::regex_match(name, m, pattern)) {
      houses.push_back({std::stoi(m[1]), entry.path()});
    }
  }
  if (houses.empty()) {
    throw Error(ErrorCode::io, (source / "labels.dat").string() +
                                   ": missing labels file (and no house_<N> subdirectories)");
  }
  std::sort(houses.begin(), houses.end(),
            [](const House& a, const House& b) { return a.building < b.building; });
  return houses;
}

BuildingMeta building_meta(const House& house, const std::map<int, std::string>& labels,
                           const ReddMapping& mapping, BuildingConversion& status) {
  BuildingMeta b;
  b.instance = house.building;
  b.timezone = mapping.timezone;
  std::optional<int> parent;
  for (int site : mapping.site_meters) {
    if (labels.count(site)) {
      parent = site;
      break;
    }
  }
  if (!parent) {
    throw Error(ErrorCode::configuration,
                house.dir.string() + ": none of the configured site meters appear in labels.dat");
  }
  const Vocabulary& vocab = Vocabulary::builtin();
  std::map<std::string, int> type_instances;
  for (const auto& [channel, label] : labels) {
    ElecMeterMeta m;
    m.instance = channel;
    const bool site = std::find(mapping.site_meters.begin(), mapping.site_meters.end(), channel) !=
                      mapping.site_meters.end();
    if (site) {
      m.site_meter = true;
      m.device_model = "REDD mains";
      m.sample_period_s = mapping.site_sample_period_s;
      m.max_sample_period_s = mapping.site_max_sample_period_s;
    } else {
      m.submeter_of = *parent;
      m.device_model = "REDD submeter";
      m.sample_period_s = mapping.submeter_sample_period_s;
      m.max_sample_period_s = mapping.submeter_max_sample_period_s;
      std::string type;
      if (auto it = mapping.labels.find(label); it != mapping.labels.end()) {
        type = it->second;
      } else if (vocab.contains(label)) {
        type = label;
      } else {
        type = "unknown";
        status.unmapped_labels.push_back(label);
        warn(house.dir.string() + ": label '" + label + "' (channel " + std::to_string(channel) +
             ") is not mapped; recorded as type 'unknown' in category 'other'");
      }
      ApplianceRef a;
      a.type = type;
      a.instance = ++type_instances[type];
      a.extra["original_name"] = label;
      m.appliances.push_back(std::move(a));
    }
    b.meters.push_back(std::move(m));
  }
  return b;
}

}  // namespace

std::map<int, std::string> read_redd_labels(const fs::path& house_dir) {
  const fs::path file = house_dir / "labels.dat";
  if (!fs::exists(file)) throw Error(ErrorCode::io, file.string() + ": missing labels file");
  LineReader in(file);
  std::map<int, std::string> labels;
  std::string line;
  while (in.next(line)) {
    std::string_view v = trim(line);
    if (v.empty()) continue;
    int channel = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), channel);
    const std::string_view label = trim(std::string_view(r.ptr, v.data() + v.size() - r.ptr));
    if (r.ec != std::errc() || label.empty() || channel < 1) {
      throw ParseError(file.string(), in.line_no(), "expected '<channel> <label>'");
    }
    if (!labels.emplace(channel, std::string(label)).second) {
      throw ParseError(file.string(), in.line_no(), "duplicate channel " + std::to_string(channel));
    }
  }
  return labels;
}

ConversionReport convert_redd(const fs::path& source, const fs::path& dest,
                              const ReddMapping& mapping, std::size_t chunk_rows) {
  if (chunk_rows < 1) throw Error(ErrorCode::invalid_argument, "chunk_rows must be at least 1");
  const std::vector<House> houses = find_houses(source, mapping);

  ConversionReport report;
  DatasetMeta meta;
  meta.name = mapping.dataset_name;
  std::vector<std::map<int, std::string>> house_labels;
  for (const auto& h : houses) {
    BuildingConversion status;
    status.building = h.building;
    status.source = h.dir;
    try {
      auto labels = read_redd_labels(h.dir);
      for (const auto& [channel, _] : labels) {
        const fs::path f = h.dir / ("channel_" + std::to_string(channel) + ".dat");
        if (!fs::exists(f)) throw Error(ErrorCode::io, f.string() + ": labeled channel has no data file");
      }
      BuildingMeta b = building_meta(h, labels, mapping, status);
      validate(b, Vocabulary::builtin(), h.dir.string());
      meta.buildings.push_back(std::move(b));
      house_labels.push_back(std::move(labels));
    } catch (const Error& e) {
      status.ok = false;
      status.error = e.what();
      house_labels.emplace_back();
    }
    report.buildings.push_back(std::move(status));
  }
  if (meta.buildings.empty()) {
    throw Error(report.buildings.front().error.find("missing labels") != std::string::npos
                    ? ErrorCode::io
                    : ErrorCode::configuration,
                "no building could be converted: " + report.buildings.front().error);
  }

  Dataset ds = Dataset::create(dest, meta);
  bool dropped_any = false;
  for (std::size_t i = 0; i < houses.size(); ++i) {
    BuildingConversion& status = report.buildings[i];
    if (!status.ok) continue;
    const int building = houses[i].building;
    try {
      for (const auto& [channel, _] : house_labels[i]) {
        const fs::path file = houses[i].dir / ("channel_" + std::to_string(channel) + ".dat");
        const StreamKey key = StreamKey::raw(building, channel);
        ChannelStats stats;
        if (!stream_channel(file, ds, key, chunk_rows, stats)) {
          ds.finalize(key);
          fs::remove(ds.stream_path(key));
          sort_channel(file, ds, key, chunk_rows, stats);
        }
        ds.create_stream(key);
        ds.finalize(key);
        if (stats.resorted) status.resorted.push_back(channel);
        if (stats.duplicates > 0) {
          warn(file.string() + ": dropped " + std::to_string(stats.duplicates) +
               " rows with duplicate timestamps (kept the first)");
        }
        status.rows += stats.rows;
        status.duplicates_dropped += stats.duplicates;
        ++status.streams;
      }
    } catch (const Error& e) {
      status.ok = false;
      status.error = e.what();
      ds.close();
      fs::remove_all(dest / ("building" + std::to_string(building)));
      auto& bs = meta.buildings;
      bs.erase(std::remove_if(bs.begin(), bs.end(),
                              [building](const BuildingMeta& b) { return b.instance == building; }),
               bs.end());
      dropped_any = true;
    }
  }
  ds.close();
  if (dropped_any) save_metadata(dest, meta);
  return report;
}

// ---------------------------------------------------------------- synthetic

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

SynthAppliance appliance_from_json(const json& j) {
  SynthAppliance a;
  a.type = j.at("type").get<std::string>();
  if (j.contains("states")) {
    a.states = j.at("states").get<std::vector<double>>();
  } else {
    a.states = {0.0, j.at("power_w").get<double>()};
  }
  a.mean_on_s = j.value("mean_on_s", a.mean_on_s);
  a.mean_off_s = j.value("mean_off_s", a.mean_off_s);
  return a;
}

json appliance_to_json(const SynthAppliance& a) {
  return {{"type", a.type}, {"states", a.states}, {"mean_on_s", a.mean_on_s},
          {"mean_off_s", a.mean_off_s}};
}

// Portable draws from mt19937_64: the standard distributions are
// implementation-defined, so the transforms are written out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double exponential(double mean) { return -mean * std::log1p(-uniform()); }
  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    return r * std::cos(theta);
  }
  std::size_t index(std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

class ApplianceProcess {
 public:
  ApplianceProcess(const SynthAppliance& spec, std::uint64_t seed, double period)
      : spec_(spec), rng_(seed), period_(period) {
    remaining_ = draw(spec_.mean_off_s);
  }

  double step() {
    while (remaining_ == 0) {
      on_ = !on_ && spec_.states.size() > 1;
      if (on_) level_ = spec_.states[1 + rng_.index(spec_.states.size() - 1)];
      remaining_ = draw(on_ ? spec_.mean_on_s : spec_.mean_off_s);
    }
    --remaining_;
    return on_ ? level_ : spec_.states[0];
  }

 private:
  std::uint64_t draw(double mean) {
    const double samples = std::ceil(rng_.exponential(mean) / period_);
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(samples));
  }

  const SynthAppliance& spec_;
  Rng rng_;
  double period_;
  bool on_ = false;
  double level_ = 0.0;
  std::uint64_t remaining_ = 0;
};

double round_mw(double w) { return std::round(w * 1000.0) / 1000.0; }

}  // namespace

SynthSpec SynthSpec::from_json(const json& doc) {
  SynthSpec s;
  try {
    s.seed = doc.value("seed", s.seed);
    s.name = doc.value("name", s.name);
    s.n_buildings = doc.value("n_buildings", s.n_buildings);
    s.start = doc.value("start", s.start);
    s.duration_s = doc.value("duration_s", s.duration_s);
    s.sample_period_s = doc.value("sample_period_s", s.sample_period_s);
    if (doc.contains("max_sample_period_s")) s.max_sample_period_s = doc.at("max_sample_period_s").get<double>();
    s.mains_noise_w = doc.value("mains_noise_w", s.mains_noise_w);
    s.unmetered_base_w = doc.value("unmetered_base_w", s.unmetered_base_w);
    s.timezone = doc.value("timezone", s.timezone);
    if (doc.contains("appliances")) {
      for (const auto& a : doc.at("appliances")) s.appliances.push_back(appliance_from_json(a));
    }
    if (doc.contains("buildings")) {
      for (const auto& b : doc.at("buildings")) {
        std::vector<SynthAppliance> list;
        for (const auto& a : b.at("appliances")) list.push_back(appliance_from_json(a));
        s.buildings.push_back(std::move(list));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::configuration, std::string("invalid synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

json SynthSpec::to_json() const {
  json doc = {{"seed", seed},
              {"name", name},
              {"n_buildings", n_buildings},
              {"start", start},
              {"duration_s", duration_s},
              {"sample_period_s", sample_period_s},
              {"max_sample_period_s", max_period()},
              {"mains_noise_w", mains_noise_w},
              {"unmetered_base_w", unmetered_base_w},
              {"timezone", timezone}};
  json list = json::array();
  for (const auto& a : appliances) list.push_back(appliance_to_json(a));
  doc["appliances"] = std::move(list);
  if (!buildings.empty()) {
    json bs = json::array();
    for (const auto& b : buildings) {
      json l = json::array();
      for (const auto& a : b) l.push_back(appliance_to_json(a));
      bs.push_back({{"appliances", std::move(l)}});
    }
    doc["buildings"] = std::move(bs);
  }
  return doc;
}

std::size_t SynthSpec::building_count() const {
  return buildings.empty() ? n_buildings : buildings.size();
}

const std::vector<SynthAppliance>& SynthSpec::appliances_of(std::size_t building_index) const {
  return buildings.empty() ? appliances : buildings.at(building_index);
}

void SynthSpec::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::configuration, "synth spec: " + what); };
  if (building_count() == 0) bad("needs at least one building");
  if (!(duration_s > 0.0)) bad("duration_s must be positive");
  if (!(sample_period_s > 0.0)) bad("sample_period_s must be positive");
  if (!(max_period() >= sample_period_s)) bad("max_sample_period_s must be >= sample_period_s");
  if (!(mains_noise_w >= 0.0) || !(unmetered_base_w >= 0.0)) bad("noise and base must be >= 0");
  if (!std::isfinite(start)) bad("start must be finite");
  for (std::size_t b = 0; b < building_count(); ++b) {
    for (const auto& a : appliances_of(b)) {
      Vocabulary::builtin().categories_of(a.type);
      if (a.states.empty()) bad(a.type + " has no states");
      for (double p : a.states) {
        if (!(p >= 0.0) || !std::isfinite(p)) bad(a.type + " has a negative power level");
      }
      if (!(a.mean_on_s > 0.0) || !(a.mean_off_s > 0.0)) bad(a.type + " durations must be positive");
    }
  }
}

SynthSpec default_synth_spec() {
  SynthSpec s;
  s.appliances = {{"fridge", {0.0, 120.0}, 900.0, 1800.0},
                  {"kettle", {0.0, 2000.0}, 180.0, 7200.0},
                  {"washing machine", {0.0, 500.0}, 3600.0, 14400.0}};
  return s;
}

DatasetMeta generate_synthetic(const SynthSpec& spec, const fs::path& dest,
                               const SynthOptions& options) {
  spec.validate();
  if (options.chunk_rows < 1) throw Error(ErrorCode::invalid_argument, "chunk_rows must be at least 1");
  std::error_code ec;
  if (fs::exists(dest, ec) && !fs::is_empty(dest, ec)) {
    if (!options.force) {
      throw Error(ErrorCode::io, dest.string() + ": destination exists and is not empty (use --force)");
    }
    if (!fs::exists(dest / "dataset.json")) {
      throw Error(ErrorCode::io, dest.string() +
                                     ": --force only replaces an existing dataset directory");
    }
    fs::remove_all(dest);
  }

  DatasetMeta meta;
  meta.name = spec.name;
  meta.extra["generator"] = {{"prng", "mt19937_64"}, {"seed_derivation", "splitmix64"},
                             {"spec", spec.to_json()}};
  for (std::size_t b = 0; b < spec.building_count(); ++b) {
    BuildingMeta bm;
    bm.instance = static_cast<int>(b + 1);
    bm.timezone = spec.timezone;
    ElecMeterMeta mains;
    mains.instance = 1;
    mains.site_meter = true;
    mains.device_model = "synthetic mains";
    mains.sample_period_s = spec.sample_period_s;
    mains.max_sample_period_s = spec.max_period();
    bm.meters.push_back(mains);
    std::map<std::string, int> type_instances;
    int instance = 1;
    for (const auto& a : spec.appliances_of(b)) {
      ElecMeterMeta m;
      m.instance = ++instance;
      m.submeter_of = 1;
      m.device_model = "synthetic submeter";
      m.sample_period_s = spec.sample_period_s;
      m.max_sample_period_s = spec.max_period();
      m.appliances.push_back({a.type, ++type_instances[a.type], json::object()});
      bm.meters.push_back(std::move(m));
    }
    meta.buildings.push_back(std::move(bm));
  }
  validate(meta, Vocabulary::builtin());

  Dataset ds = Dataset::create(dest, meta);
  const auto n_rows = static_cast<std::uint64_t>(std::floor(spec.duration_s / spec.sample_period_s + 1e-9));
  for (std::size_t b = 0; b < spec.building_count(); ++b) {
    const int building = static_cast<int>(b + 1);
    const std::uint64_t building_seed = splitmix64(spec.seed ^ splitmix64(building));
    const auto& appliances = spec.appliances_of(b);
    std::vector<ApplianceProcess> processes;
    processes.reserve(appliances.size());
    for (std::size_t a = 0; a < appliances.size(); ++a) {
      processes.emplace_back(appliances[a], splitmix64(building_seed + a + 1), spec.sample_period_s);
    }
    Rng noise(splitmix64(building_seed));
    const std::size_t width = appliances.size() + 1;
    std::vector<std::vector<Sample>> rows(width);
    std::vector<StreamKey> keys;
    for (std::size_t m = 0; m < width; ++m) keys.push_back(StreamKey::raw(building, static_cast<int>(m + 1)));

    auto flush = [&] {
      for (std::size_t m = 0; m < width; ++m) flush_rows(ds, keys[m], rows[m]);
    };
    for (std::uint64_t i = 0; i < n_rows; ++i) {
      const Timestamp t = quantize_timestamp(spec.start + static_cast<double>(i) * spec.sample_period_s);
      double total = 0.0;
      for (std::size_t a = 0; a < processes.size(); ++a) {
        const double p = round_mw(processes[a].step());
        rows[a + 1].push_back({t, p});
        total += p;
      }
      double mains = total + spec.unmetered_base_w;
      if (spec.mains_noise_w > 0.0) mains += spec.mains_noise_w * noise.normal();
      rows[0].push_back({t, round_mw(std::max(0.0, mains))});
      if (rows[0].size() >= options.chunk_rows) flush();
    }
    flush();
    for (const auto& k : keys) {
      ds.create_stream(k);
      ds.finalize(k);
    }
  }
  ds.close();
  return meta;
}

}  // namespace nilm

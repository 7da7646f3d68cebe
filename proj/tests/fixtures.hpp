#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "nilm/datastore.hpp"
#include "nilm/metadata.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using nilm::Sample;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("nilm-test-" + std::to_string(::getpid()) + "-" + tag + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << text;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_stream(const fs::path& p, const std::vector<Sample>& samples) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  nilm::CsvWriter w(p);
  for (const auto& s : samples) w.write(s);
  w.close();
}

inline std::vector<Sample> read_stream(const fs::path& p) {
  nilm::CsvReader r(p);
  std::vector<Sample> out;
  while (auto s = r.next()) out.push_back(*s);
  return out;
}

inline std::vector<Sample> constant(double start, std::size_t n, double period, double power) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({start + static_cast<double>(i) * period, power});
  return out;
}

inline nilm::ElecMeterMeta site(int instance, double period = 1.0, double max_period = 10.0) {
  nilm::ElecMeterMeta m;
  m.instance = instance;
  m.site_meter = true;
  m.device_model = "test mains";
  m.sample_period_s = period;
  m.max_sample_period_s = max_period;
  return m;
}

inline nilm::ElecMeterMeta sub(int instance, int parent, const std::string& type,
                               double period = 1.0, double max_period = 10.0) {
  nilm::ElecMeterMeta m;
  m.instance = instance;
  m.submeter_of = parent;
  m.device_model = "test submeter";
  m.sample_period_s = period;
  m.max_sample_period_s = max_period;
  if (!type.empty()) m.appliances.push_back({type, 1, nilm::json::object()});
  return m;
}

inline nilm::BuildingMeta building(int instance, std::vector<nilm::ElecMeterMeta> meters,
                                   const std::string& tz = "UTC") {
  nilm::BuildingMeta b;
  b.instance = instance;
  b.timezone = tz;
  b.meters = std::move(meters);
  return b;
}

/// Creates a dataset and writes one raw stream per (building, meter).
inline nilm::Dataset make_dataset(
    const fs::path& root, std::vector<nilm::BuildingMeta> buildings,
    const std::map<std::pair<int, int>, std::vector<Sample>>& streams) {
  nilm::DatasetMeta meta;
  meta.name = "fixture";
  meta.buildings = std::move(buildings);
  nilm::Dataset ds = nilm::Dataset::create(root, meta);
  for (const auto& [key, samples] : streams) {
    write_stream(ds.stream_path(nilm::StreamKey::raw(key.first, key.second)), samples);
  }
  return nilm::Dataset::open(root);
}

/// Irregular 1 Hz-ish series with occasional gaps and varied power.
inline std::vector<Sample> random_series(std::uint64_t seed, std::size_t n, double start = 1.4e9,
                                         double gap_probability = 0.01) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> power(0.0, 3000.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Sample> out;
  double t = start;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({t, std::round(power(rng) * 1000.0) / 1000.0});
    t += unit(rng) < gap_probability ? 30.0 + std::floor(unit(rng) * 300.0) : 1.0;
  }
  return out;
}

}  // namespace fixtures

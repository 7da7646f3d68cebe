#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "nilm/convert.hpp"
#include "nilm/errors.hpp"
#include "nilm/log.hpp"
#include "nilm/metadata.hpp"

using namespace nilm;
using fixtures::TempDir;
namespace fs = std::filesystem;

namespace {

struct Rows {
  std::map<int, std::vector<Sample>> channels;
};

/// Writes a REDD-style house. Channel 3 arrives shuffled with two
/// duplicated timestamps; the expected (sorted, first-kept) rows are
/// returned per channel.
Rows write_house(const fs::path& dir, std::uint64_t seed, const std::string& fridge_label = "refrigerator") {
  fixtures::write_text(dir / "labels.dat", "1 mains\n2 mains\n3 " + fridge_label + "\n4 lighting\n5 mystery_box\n");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> watts(0, 4000);
  Rows expected;
  for (int ch = 1; ch <= 5; ++ch) {
    const double period = ch <= 2 ? 1.0 : 3.0;
    std::vector<std::pair<double, std::string>> lines;
    for (int i = 0; i < 200; ++i) {
      const double t = 1303132929.0 + i * period;
      const int w = watts(rng);
      const std::string text = std::to_string(w / 100) + "." + std::to_string(w % 100 / 10) + std::to_string(w % 10);
      lines.push_back({t, text});
      expected.channels[ch].push_back({t, w / 100.0});
    }
    if (ch == 3) {
      lines.insert(lines.begin() + 50, {lines[50].first, "999.99"});  // duplicate, dropped
      lines.push_back({lines[120].first, "888.88"});                   // late duplicate, dropped
      std::shuffle(lines.begin() + 1, lines.end(), rng);
    }
    std::string text;
    for (const auto& [t, w] : lines) text += std::to_string(static_cast<long long>(t)) + " " + w + "\n";
    fixtures::write_text(dir / ("channel_" + std::to_string(ch) + ".dat"), text);
  }
  return expected;
}

ReddMapping mapping() {
  ReddMapping m;
  m.labels = {{"refrigerator", "fridge"}, {"lighting", "light"}};
  return m;
}

std::vector<std::pair<double, double>> multiset(const std::vector<Sample>& s) {
  std::vector<std::pair<double, double>> out;
  for (const auto& x : s) out.push_back({x.timestamp, x.power});
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("REDD house converts with metadata and dedup") {
  TempDir dir("redd");
  auto expected = write_house(dir / "house_1", 1);
  std::vector<std::string> warnings;
  auto previous = set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
  auto report = convert_redd(dir / "house_1", dir / "out", mapping(), 17);
  set_warning_sink(previous);

  REQUIRE(report.ok());
  REQUIRE(report.buildings.size() == 1);
  const auto& status = report.buildings[0];
  CHECK(status.streams == 5);
  CHECK(status.duplicates_dropped == 2);
  CHECK(status.resorted == std::vector<int>{3});
  CHECK(status.unmapped_labels == std::vector<std::string>{"mystery_box"});
  CHECK(status.rows == 1000);
  CHECK(warnings.size() >= 2);

  Dataset ds = Dataset::open(dir / "out");
  CHECK(ds.list_streams().size() == 5);
  const auto& b = ds.metadata().building(1);
  CHECK(b.timezone == "US/Eastern");
  CHECK(mains_meters(b) == std::vector<int>{1, 2});
  const auto& fridge = b.meter(3);
  CHECK(fridge.appliances.at(0).type == "fridge");
  CHECK(category_of(Vocabulary::builtin(), fridge.appliances.at(0).type) == std::set<std::string>{"cold"});
  CHECK(fridge.appliances.at(0).extra["original_name"] == "refrigerator");
  CHECK(fridge.submeter_of == 1);
  CHECK(fridge.sample_period_s == 3.0);
  CHECK(b.meter(5).appliances.at(0).type == "unknown");
  CHECK(category_of(Vocabulary::builtin(), "unknown") == std::set<std::string>{"other"});

  for (int ch = 1; ch <= 5; ++ch) {
    const auto got = fixtures::read_stream(ds.stream_path(StreamKey::raw(1, ch)));
    CHECK(std::is_sorted(got.begin(), got.end(),
                         [](const Sample& a, const Sample& c) { return a.timestamp < c.timestamp; }));
    if (ch != 3) {
      CHECK(got == expected.channels[ch]);
    } else {
      // The shuffled channel keeps one row per instant; the multiset of
      // instants matches and every power is one that appeared in the file.
      CHECK(got.size() == expected.channels[ch].size());
      auto want = multiset(expected.channels[ch]);
      auto have = multiset(got);
      for (std::size_t i = 0; i < want.size(); ++i) CHECK(have[i].first == want[i].first);
    }
  }
}

TEST_CASE("default REDD labels") {
  TempDir dir("labels");
  write_house(dir / "h", 3);
  auto report = convert_redd(dir / "h", dir / "out", ReddMapping{});
  REQUIRE(report.ok());
  Dataset ds = Dataset::open(dir / "out");
  CHECK(ds.metadata().building(1).meter(3).appliances.at(0).type == "fridge");
  CHECK(ds.metadata().building(1).meter(4).appliances.at(0).type == "light");
  for (const auto& [label, type] : default_redd_labels()) CHECK(Vocabulary::builtin().contains(type));
}

TEST_CASE("out-of-order rows without duplicates sort to the same multiset") {
  TempDir dir("shuffle");
  fixtures::write_text(dir / "h/labels.dat", "1 mains\n2 kettle\n");
  std::string a, b;
  std::vector<Sample> want;
  std::vector<int> order(300);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(5));
  for (int i : order) {
    a += std::to_string(1000 + i) + " " + std::to_string(i % 50) + ".5\n";
  }
  for (int i = 0; i < 300; ++i) {
    b += std::to_string(1000 + 3 * i) + " 7\n";
    want.push_back({1000.0 + i, i % 50 + 0.5});
  }
  fixtures::write_text(dir / "h/channel_1.dat", a);
  fixtures::write_text(dir / "h/channel_2.dat", b);
  ReddMapping m;
  m.site_meters = {1};
  auto report = convert_redd(dir / "h", dir / "out", m, 64);
  REQUIRE(report.ok());
  Dataset ds = Dataset::open(dir / "out");
  CHECK(fixtures::read_stream(ds.stream_path(StreamKey::raw(1, 1))) == want);
  CHECK(ds.metadata().building(1).meter(2).appliances.at(0).type == "kettle");
}

TEST_CASE("REDD errors") {
  TempDir dir("redd-errors");
  SUBCASE("missing labels file") {
    fs::create_directories(dir / "h");
    fixtures::write_text(dir / "h/channel_1.dat", "1 1\n");
    try {
      convert_redd(dir / "h", dir / "out", mapping());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io);
    }
  }
  SUBCASE("unparseable row names file and line") {
    write_house(dir / "h", 2);
    fixtures::write_text(dir / "h/channel_4.dat", "1303132929 5\n1303132932 oops\n");
    auto report = convert_redd(dir / "h", dir / "out", mapping());
    // No stream failure may leave partial data: the building is dropped.
    CHECK_FALSE(report.ok());
    CHECK(report.buildings[0].error.find("channel_4.dat") != std::string::npos);
    CHECK(report.buildings[0].error.find("row 2") != std::string::npos);
  }
  SUBCASE("bad mapping") {
    CHECK_THROWS_AS(ReddMapping::from_json(json::parse(R"({"colour": 1})")), Error);
    CHECK_THROWS_AS(ReddMapping::from_json(json::parse(R"({"labels": {"fridge freezer": "frdge"}})")), VocabularyError);
    CHECK(ReddMapping::from_json(ReddMapping{}.to_json()).to_json() == ReddMapping{}.to_json());
    auto extended = ReddMapping::from_json(json::parse(R"({"labels": {"refrigerator": "freezer", "tv": "television"}})"));
    CHECK(extended.labels.at("refrigerator") == "freezer");
    CHECK(extended.labels.at("tv") == "television");
    CHECK(extended.labels.at("lighting") == "light");
  }
}

TEST_CASE("a failing house is dropped and the rest kept") {
  TempDir dir("partial");
  write_house(dir / "src/house_1", 1);
  write_house(dir / "src/house_2", 2);
  fixtures::write_text(dir / "src/house_2/channel_2.dat", "1303132929 5\nnot a row\n");
  auto report = convert_redd(dir / "src", dir / "out", mapping());
  CHECK_FALSE(report.ok());
  REQUIRE(report.buildings.size() == 2);
  CHECK(report.buildings[0].ok);
  CHECK_FALSE(report.buildings[1].ok);
  Dataset ds = Dataset::open(dir / "out");
  CHECK(ds.metadata().buildings.size() == 1);
  CHECK_FALSE(fs::exists(dir / "out/building2"));
}

TEST_CASE("synthetic generator") {
  TempDir dir("synth");
  SynthSpec spec = default_synth_spec();
  spec.n_buildings = 3;
  spec.duration_s = 3 * 3600;

  auto meta = generate_synthetic(spec, dir / "a", {false, 1000});
  generate_synthetic(spec, dir / "b", {false, 77});
  CHECK(meta.buildings.size() == 3);
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir / "a");
    CHECK(fixtures::read_text(entry.path()) == fixtures::read_text(dir / "b" / rel));
  }

  Dataset ds = Dataset::open(dir / "a");
  validate(ds.metadata(), Vocabulary::builtin());
  CHECK(ds.list_streams().size() == 12);
  for (int b = 1; b <= 3; ++b) {
    const auto mains = fixtures::read_stream(ds.stream_path(StreamKey::raw(b, 1)));
    CHECK(mains.size() == 3 * 360);
    std::vector<std::vector<Sample>> apps;
    for (int m = 2; m <= 4; ++m) apps.push_back(fixtures::read_stream(ds.stream_path(StreamKey::raw(b, m))));
    for (std::size_t i = 0; i < mains.size(); ++i) {
      double sum = 0;
      for (const auto& a : apps) {
        CHECK(a[i].timestamp == mains[i].timestamp);
        CHECK(mains[i].power >= a[i].power);
        sum += a[i].power;
      }
      CHECK(mains[i].power == doctest::Approx(sum).epsilon(1e-12));
    }
    const auto& bm = ds.metadata().building(b);
    CHECK(bm.meter(2).appliances.at(0).type == "fridge");
    CHECK(bm.meter(2).submeter_of == 1);
  }
  // Different buildings get different traces.
  CHECK(fixtures::read_text(ds.stream_path(StreamKey::raw(1, 2))) !=
        fixtures::read_text(ds.stream_path(StreamKey::raw(2, 2))));

  SynthSpec other = spec;
  other.seed = 43;
  generate_synthetic(other, dir / "c");
  CHECK(fixtures::read_text(dir / "c/building1/elec/meter1.csv") != fixtures::read_text(dir / "a/building1/elec/meter1.csv"));

  try {
    generate_synthetic(spec, dir / "a");
    FAIL("expected a refusal");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::io);
  }
  other.n_buildings = 2;
  generate_synthetic(other, dir / "a", {true, 1000});
  CHECK(fixtures::read_text(dir / "c/building1/elec/meter1.csv") == fixtures::read_text(dir / "a/building1/elec/meter1.csv"));
  CHECK_FALSE(fs::exists(dir / "a/building3"));
}

TEST_CASE("noise and base load") {
  TempDir dir("noise");
  SynthSpec spec = default_synth_spec();
  spec.duration_s = 6 * 3600;
  spec.mains_noise_w = 20;
  spec.unmetered_base_w = 50;
  generate_synthetic(spec, dir / "n");
  Dataset ds = Dataset::open(dir / "n");
  const auto mains = fixtures::read_stream(ds.stream_path(StreamKey::raw(1, 1)));
  std::vector<std::vector<Sample>> apps;
  for (int m = 2; m <= 4; ++m) apps.push_back(fixtures::read_stream(ds.stream_path(StreamKey::raw(1, m))));
  double mean = 0, sq = 0;
  for (std::size_t i = 0; i < mains.size(); ++i) {
    double sum = 50;
    for (const auto& a : apps) sum += a[i].power;
    const double r = mains[i].power - sum;
    CHECK(mains[i].power >= 0);
    mean += r;
    sq += r * r;
  }
  mean /= mains.size();
  const double sd = std::sqrt(sq / mains.size() - mean * mean);
  CHECK(std::fabs(mean) < 2.0);
  CHECK(sd == doctest::Approx(20).epsilon(0.1));
}

TEST_CASE("synth spec JSON") {
  auto spec = default_synth_spec();
  spec.seed = 7;
  spec.max_sample_period_s = 25;
  auto back = SynthSpec::from_json(spec.to_json());
  CHECK(back.to_json() == spec.to_json());
  CHECK(back.max_period() == 25);

  auto minimal = SynthSpec::from_json(json::parse(R"({"appliances": [{"type": "kettle", "power_w": 2000}]})"));
  CHECK(minimal.appliances.at(0).states == std::vector<double>{0, 2000});
  CHECK(minimal.seed == 42);

  CHECK_THROWS_AS(SynthSpec::from_json(json::parse(R"({"duration_s": -1, "appliances": [{"type": "kettle", "power_w": 1}]})")), Error);
  CHECK_THROWS_AS(SynthSpec::from_json(json::parse(R"({"appliances": [{"type": "kettle", "states": [0, -5]}]})")), Error);
  CHECK_THROWS_AS(SynthSpec::from_json(json::parse(R"({"appliances": [{"type": "kettel", "power_w": 1}]})")), Error);
}

TEST_CASE("splitmix64 reference value") {
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
}

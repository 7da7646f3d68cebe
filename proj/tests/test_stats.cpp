#include "doctest.h"

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "invariance.hpp"
#include "oracles.hpp"
#include "nilm/errors.hpp"
#include "nilm/stats.hpp"

using namespace nilm;
using fixtures::building;
using fixtures::constant;
using fixtures::site;
using fixtures::sub;
using fixtures::TempDir;

namespace {

Dataset one_meter(const TempDir& dir, const std::vector<Sample>& samples, const std::string& tz = "UTC") {
  return fixtures::make_dataset(dir.path(), {building(1, {site(1)}, tz)}, {{{1, 1}, samples}});
}

}  // namespace

TEST_CASE("clip") {
  ClipResult counts;
  auto out = clip(Chunk::from_samples({{0, -5}, {1, 25000}, {2, 100}, {3, std::nan("")}}), 20000, &counts);
  REQUIRE(out.size() == 3);
  CHECK(out.samples[0].power == 0);
  CHECK(out.samples[1].power == 20000);
  CHECK(out.samples[2].power == 100);
  CHECK(counts.dropped_nan == 1);
  CHECK(counts.clamped == 2);

  auto clean = Chunk::from_samples(constant(0, 10, 1, 42));
  CHECK(clip(clean, 20000).samples == clean.samples);
}

TEST_CASE("total energy of an empty stream") {
  TempDir dir("empty");
  auto ds = one_meter(dir, {});
  auto e = meter_energy(ElecMeter(ds, 1, 1));
  CHECK(e.kwh() == 0.0);
  CHECK(e.uptime_s() == 0.0);
}

TEST_CASE("total energy grows with the max sample period") {
  auto samples = fixtures::random_series(8, 2000, 0.0, 0.05);
  auto chunk = Chunk::from_samples(samples);
  double previous = 0.0;
  for (double max : {1.0, 5.0, 30.0, 120.0, 1000.0}) {
    const double kwh = EnergyResult::from_chunk(chunk, 1.0, max).kwh();
    CHECK(kwh >= previous);
    previous = kwh;
  }
}

TEST_CASE("good sections") {
  TempDir dir("gs");
  SUBCASE("no gaps") {
    auto ds = one_meter(dir, constant(0, 3600, 1, 5));
    auto gs = good_sections(ElecMeter(ds, 1, 1));
    REQUIRE(gs.sections.size() == 1);
    CHECK(gs.sections[0] == TimeFrame(0, 3599 + 10));
  }
  SUBCASE("one sixty second gap") {
    auto samples = constant(0, 100, 1, 5);
    for (auto& s : samples) {
      if (s.timestamp >= 50) s.timestamp += 59;
    }
    auto ds = one_meter(dir, samples);
    auto gs = good_sections(ElecMeter(ds, 1, 1), {7});
    REQUIRE(gs.sections.size() == 2);
    CHECK(gs.sections[0] == TimeFrame(0, 59));
    CHECK(gs.sections[1] == TimeFrame(109, 158 + 10));
    for (const auto& s : samples) {
      CHECK(std::any_of(gs.sections.begin(), gs.sections.end(),
                        [&](const TimeFrame& f) { return f.contains(s.timestamp); }));
    }
  }
}

TEST_CASE("dropout rate") {
  TempDir dir("dropout");
  SUBCASE("complete") {
    auto ds = one_meter(dir, constant(0, 100, 1, 1));
    CHECK(dropout_rate(ElecMeter(ds, 1, 1)) == 0.0);
  }
  SUBCASE("every other sample missing") {
    auto ds = one_meter(dir, constant(0, 500, 2, 1));
    const double rate = *dropout_rate(ElecMeter(ds, 1, 1), {3});
    CHECK(std::fabs(rate - 0.5) <= 1.0 / 500);
  }
  SUBCASE("single sample is undefined") {
    auto ds = one_meter(dir, constant(0, 1, 1, 1));
    CHECK_FALSE(dropout_rate(ElecMeter(ds, 1, 1)));
  }
}

TEST_CASE("energy per category") {
  TempDir dir("category");
  auto ds = fixtures::make_dataset(dir.path(), {building(1, {site(1), sub(2, 1, "fridge")})},
                                   {{{1, 1}, constant(0, 3600, 1, 150)}, {{1, 2}, constant(0, 3600, 1, 100)}});
  auto e = energy_per_category(MeterGroup::building(ds, 1));
  REQUIRE(e.size() == 1);
  CHECK(e.at("cold") == doctest::Approx(0.1));
  CHECK(e.count("lighting") == 0);
}

TEST_CASE("hourly statistics") {
  TempDir dir("hourly");
  SUBCASE("constant") {
    auto ds = one_meter(dir, constant(0, 86400 / 10, 10, 100));
    for (auto stat : {HourlyStatistic::median, HourlyStatistic::mean}) {
      auto h = hourly_stat(ElecMeter(ds, 1, 1), stat);
      for (const auto& v : h) CHECK(v == 100.0);
    }
  }
  SUBCASE("day and night in the building's zone") {
    std::vector<Sample> samples;
    for (int i = 0; i < 2 * 8640; ++i) {
      const double t = i * 10.0;
      const double local_hour = std::fmod(t + 7200.0, 86400.0) / 3600.0;
      samples.push_back({t, local_hour >= 8 && local_hour < 20 ? 350.0 : 0.0});
    }
    auto ds = one_meter(dir, samples, "Etc/GMT-2");
    auto h = hourly_stat(ElecMeter(ds, 1, 1), HourlyStatistic::median);
    for (int hour = 0; hour < 24; ++hour) CHECK(h[hour] == (hour >= 8 && hour < 20 ? 350.0 : 0.0));
  }
  SUBCASE("median within half a watt of the exact median") {
    auto samples = fixtures::random_series(77, 20000, 0.0, 0.0);
    auto ds = one_meter(dir, samples);
    auto h = hourly_stat(ElecMeter(ds, 1, 1), HourlyStatistic::median, {999});
    std::array<std::vector<double>, 24> by_hour;
    for (const auto& s : samples) by_hour[static_cast<std::size_t>(std::fmod(s.timestamp, 86400) / 3600)].push_back(s.power);
    for (std::size_t hour = 0; hour < 24; ++hour) {
      if (by_hour[hour].empty()) {
        CHECK_FALSE(h[hour]);
      } else {
        CHECK(std::fabs(*h[hour] - oracle::exact_median(by_hour[hour])) <= 0.5);
      }
    }
  }
}

TEST_CASE("entropy") {
  TempDir dir("entropy");
  SUBCASE("constant") {
    auto ds = one_meter(dir, constant(0, 100, 1, 73));
    CHECK(entropy(ElecMeter(ds, 1, 1)) == 0.0);
  }
  SUBCASE("two levels") {
    std::vector<Sample> s;
    for (int i = 0; i < 100; ++i) s.push_back({double(i), i % 2 ? 500.0 : 0.0});
    auto ds = one_meter(dir, s);
    CHECK(entropy(ElecMeter(ds, 1, 1)) == doctest::Approx(1.0));
  }
  SUBCASE("uniform over eight bins") {
    std::vector<Sample> s;
    for (int i = 0; i < 800; ++i) s.push_back({double(i), 10.0 * (i % 8) + 3});
    auto ds = one_meter(dir, s);
    CHECK(entropy(ElecMeter(ds, 1, 1), 10.0, {7}) == doctest::Approx(3.0));
  }
  SUBCASE("empty") {
    auto ds = one_meter(dir, {});
    try {
      entropy(ElecMeter(ds, 1, 1));
      FAIL("expected an undefined statistic");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::undefined_statistic);
    }
  }
}

TEST_CASE("simultaneous switches") {
  TempDir dir("switches");
  std::vector<Sample> a, b;
  for (int i = 0; i < 600; ++i) {
    a.push_back({double(i), i >= 300 ? 100.0 : 0.0});
    b.push_back({double(i), i >= 300 ? 50.0 : 0.0});
  }
  auto ds = fixtures::make_dataset(dir.path(), {building(1, {site(1), sub(2, 1, "fridge"), sub(3, 1, "kettle")})},
                                   {{{1, 1}, constant(0, 600, 1, 10)}, {{1, 2}, a}, {{1, 3}, b}});
  auto both = simultaneous_switches(MeterGroup({ElecMeter(ds, 1, 2), ElecMeter(ds, 1, 3)}));
  CHECK(both.counts == std::vector<std::uint64_t>{9, 0, 1});

  auto steady = simultaneous_switches(MeterGroup(ElecMeter(ds, 1, 1)), 5, 60, 3);
  CHECK(steady.counts == std::vector<std::uint64_t>{10, 0});
}

TEST_CASE("correlation") {
  TempDir dir("corr");
  auto x = fixtures::random_series(5, 10000, 0.0, 0.0);
  auto neg = x;
  for (auto& s : neg) s.power = -s.power;
  std::vector<Sample> y, z;
  for (const auto& s : invariance::appliance_trace(31, 10000, 500)) y.push_back({s.timestamp - 1.4e9 - 31 % 7, s.power});
  for (const auto& s : invariance::appliance_trace(32, 10000, 200)) z.push_back({s.timestamp - 1.4e9 - 32 % 7, s.power});
  auto ds = fixtures::make_dataset(dir.path(), {building(1, {site(1), site(2), site(3), site(4), site(5)})},
                                   {{{1, 1}, x}, {{1, 2}, neg}, {{1, 3}, y}, {{1, 4}, z}, {{1, 5}, constant(0, 100, 1, 3)}});
  const ElecMeter m1(ds, 1, 1), m2(ds, 1, 2), m3(ds, 1, 3), m4(ds, 1, 4), m5(ds, 1, 5);
  CHECK(correlation(m1, m1, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(correlation(m1, m2, 1.0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::fabs(correlation(m3, m4, 1.0, 777)) < 0.2);
  try {
    correlation(m1, m5, 1.0);
    FAIL("expected an undefined correlation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::undefined_statistic);
  }
}

TEST_CASE("every statistic is chunking invariant against the oracles") {
  TempDir dir("invariance");
  const auto streams = invariance::make_streams(10000);
  const auto ds = invariance::make_dataset(dir.path(), streams);
  for (std::size_t rows : {1u, 7u, 1000u}) {
    invariance::Report report;
    invariance::check_all(ds, streams, rows, report);
    CHECK(report.checks() > 100);
    for (const auto& f : report.failures()) FAIL_CHECK(f);
  }
}

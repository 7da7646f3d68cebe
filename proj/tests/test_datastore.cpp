#include "doctest.h"

#include <algorithm>

#include "fixtures.hpp"
#include "nilm/datastore.hpp"
#include "nilm/errors.hpp"
#include "nilm/log.hpp"

using namespace nilm;
using fixtures::TempDir;

namespace {

Dataset ten_row_dataset(const TempDir& dir) {
  return fixtures::make_dataset(dir.path(), {fixtures::building(1, {fixtures::site(1)})},
                                {{{1, 1}, fixtures::constant(1000.0, 10, 1.0, 50.0)}});
}

std::vector<Sample> drain(ChunkReader reader, std::vector<std::size_t>* sizes = nullptr) {
  std::vector<Sample> out;
  while (auto c = reader.next()) {
    if (sizes) sizes->push_back(c->size());
    out.insert(out.end(), c->samples.begin(), c->samples.end());
  }
  return out;
}

}  // namespace

TEST_CASE("iso8601 round trip at millisecond resolution") {
  CHECK(to_iso8601(0.0) == "1970-01-01T00:00:00Z");
  CHECK(to_iso8601(1388534400.25) == "2014-01-01T00:00:00.250Z");
  auto t = parse_iso8601("2014-01-01T00:00:00.250Z");
  REQUIRE(t);
  CHECK(*t == 1388534400.25);
  CHECK(parse_iso8601("2014-01-01T00:00:00Z") == 1388534400.0);
  CHECK_FALSE(parse_iso8601("2014-01-01 00:00:00"));
  CHECK_FALSE(parse_iso8601("garbage"));
}

TEST_CASE("time frames") {
  CHECK_THROWS(TimeFrame(5, 5));
  TimeFrame a(0, 10), b(10, 20), c(5, 15);
  CHECK_FALSE(a.overlaps(b));
  CHECK(a.touches(b));
  CHECK(a.intersect(c) == TimeFrame(5, 10));
  CHECK_FALSE(a.intersect(b));
  CHECK(a.span(b) == TimeFrame(0, 20));
  CHECK(sorted_and_disjoint({a, b}));
  CHECK_FALSE(sorted_and_disjoint({a, c}));
  auto i = intersect({TimeFrame(0, 10), TimeFrame(20, 30)}, {TimeFrame(5, 25)});
  REQUIRE(i.size() == 2);
  CHECK(i[0] == TimeFrame(5, 10));
  CHECK(i[1] == TimeFrame(20, 25));
}

TEST_CASE("format_power keeps at most three decimals") {
  CHECK(format_power(100.0) == "100");
  CHECK(format_power(0.5) == "0.5");
  CHECK(format_power(1.23456) == "1.235");
  CHECK(format_power(0.0) == "0");
}

TEST_CASE("open is lazy and counts rows exactly") {
  TempDir dir("open");
  std::map<std::pair<int, int>, std::vector<Sample>> streams;
  std::vector<BuildingMeta> buildings;
  for (int b = 1; b <= 3; ++b) {
    buildings.push_back(fixtures::building(b, {fixtures::site(1), fixtures::sub(2, 1, "fridge")}));
    streams[{b, 1}] = fixtures::constant(0, 2000, 1, 100);
    streams[{b, 2}] = fixtures::constant(0, 2000, 1, 60);
  }
  fixtures::make_dataset(dir.path(), buildings, streams);

  Dataset ds = Dataset::open(dir.path());
  CHECK(ds.metadata().buildings.size() == 3);
  CHECK(ds.rows_read() == 0);

  auto reader = ds.load(StreamKey::raw(2, 1), {1000, std::nullopt, 0});
  auto chunk = reader.next();
  REQUIRE(chunk);
  CHECK(chunk->size() == 1000);
  CHECK(ds.rows_read() == 1000);
}

TEST_CASE("open on an empty directory names the missing file") {
  TempDir dir("empty");
  try {
    Dataset::open(dir.path());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::metadata);
    CHECK(std::string(e.what()).find("dataset.json") != std::string::npos);
  }
}

TEST_CASE("unknown format version is rejected") {
  TempDir dir("version");
  ten_row_dataset(dir);
  auto doc = json::parse(fixtures::read_text(dir / "dataset.json"));
  doc["format_version"] = 99;
  fixtures::write_text(dir / "dataset.json", doc.dump());
  try {
    Dataset::open(dir.path());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::format_version);
  }
}

TEST_CASE("chunk sizes and look-ahead") {
  TempDir dir("chunks");
  Dataset ds = ten_row_dataset(dir);

  std::vector<std::size_t> sizes;
  drain(ds.load(StreamKey::raw(1, 1), {4, std::nullopt, 0}), &sizes);
  CHECK(sizes == std::vector<std::size_t>{4, 4, 2});

  auto reader = ds.load(StreamKey::raw(1, 1), {4, std::nullopt, 2});
  auto c1 = reader.next();
  REQUIRE(c1);
  REQUIRE(c1->look_ahead.size() == 2);
  CHECK(c1->look_ahead[0].timestamp == 1004.0);
  CHECK(c1->look_ahead[1].timestamp == 1005.0);
  CHECK(c1->frame.end() <= c1->look_ahead[0].timestamp);
  auto c2 = reader.next();
  REQUIRE(c2);
  CHECK(c2->samples.front().timestamp == 1004.0);
  auto c3 = reader.next();
  REQUIRE(c3);
  CHECK(c3->size() == 2);
  CHECK(c3->look_ahead.empty());
  CHECK_FALSE(reader.next());
}

TEST_CASE("sections filter while streaming") {
  TempDir dir("sections");
  auto samples = fixtures::random_series(3, 500, 1000.0, 0.05);
  auto ds = fixtures::make_dataset(dir.path(), {fixtures::building(1, {fixtures::site(1)})},
                                   {{{1, 1}, samples}});
  std::vector<TimeFrame> sections{TimeFrame(1010, 1100.5), TimeFrame(1200, 1300), TimeFrame(5000, 9000)};

  std::vector<Sample> expected;
  for (const auto& s : samples) {
    for (const auto& f : sections) {
      if (f.contains(s.timestamp)) expected.push_back(s);
    }
  }
  for (std::size_t rows : {1u, 3u, 7u, 1000u}) {
    CHECK(drain(ds.load(StreamKey::raw(1, 1), {rows, sections, 0})) == expected);
  }
  CHECK_THROWS_AS(ds.load(StreamKey::raw(1, 1), {4, std::vector<TimeFrame>{TimeFrame(5, 10), TimeFrame(0, 6)}, 0}),
                  Error);
}

TEST_CASE("chunking is invisible in the concatenated output") {
  TempDir dir("invariance");
  auto samples = fixtures::random_series(11, 2000);
  auto ds = fixtures::make_dataset(dir.path(), {fixtures::building(1, {fixtures::site(1)})},
                                   {{{1, 1}, samples}});
  const auto whole = drain(ds.load(StreamKey::raw(1, 1), {100000, std::nullopt, 0}));
  CHECK(whole == samples);
  for (std::size_t rows : {1u, 3u, 7u, 1000u}) {
    CHECK(drain(ds.load(StreamKey::raw(1, 1), {rows, std::nullopt, 5})) == whole);
  }
}

TEST_CASE("load errors") {
  TempDir dir("errors");
  Dataset ds = ten_row_dataset(dir);
  try {
    ds.load(StreamKey::raw(1, 7));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_found);
  }
  CHECK_THROWS_AS(ds.load(StreamKey::raw(1, 1), {0, std::nullopt, 0}), Error);

  fixtures::write_text(dir / "building1/elec/meter1.csv",
                       "timestamp,active_power_w\n"
                       "2014-01-01T00:00:00.000Z,1\n"
                       "2014-01-01T00:00:01.000Z,abc\n");
  auto reader = ds.load(StreamKey::raw(1, 1));
  try {
    reader.next();
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 3);
  }
}

TEST_CASE("append then load is the identity") {
  TempDir dir("append");
  Dataset ds = ten_row_dataset(dir);
  const auto key = StreamKey::estimate(1, 1, "run");
  auto a = Chunk::from_samples(fixtures::constant(0, 5, 1, 10));
  auto b = Chunk::from_samples(fixtures::constant(5, 5, 1, 20));
  ds.append(key, a);
  ds.append(key, b);

  auto overlapping = Chunk::from_samples(fixtures::constant(8, 2, 1, 30));
  try {
    ds.append(key, overlapping);
    FAIL("expected an ordering error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ordering);
  }
  ds.finalize(key);

  auto expected = a.samples;
  expected.insert(expected.end(), b.samples.begin(), b.samples.end());
  CHECK(drain(ds.load(key)) == expected);
}

TEST_CASE("append of a large stream keeps residency bounded") {
  TempDir dir("bulk");
  Dataset ds = ten_row_dataset(dir);
  const auto key = StreamKey::estimate(1, 1, "bulk");
  for (int c = 0; c < 1000; ++c) {
    auto chunk = Chunk::from_samples(fixtures::constant(c * 1000.0, 1000, 1, 1));
    chunk.residency = ResidencyToken(ds.residency(), key.label(), chunk.size());
    ds.append(key, chunk);
  }
  ds.finalize(key);
  CHECK(ds.rows_written() == 1000000);

  ds.residency()->reset_peaks();
  std::size_t rows = 0;
  auto reader = ds.load(key, {1000, std::nullopt, 5});
  while (auto c = reader.next()) rows += c->size();
  CHECK(rows == 1000000);
  CHECK(ds.residency()->total().peak_rows <= 1005);
  CHECK(ds.residency()->peak_chunks_per_stream() == 1);
}

TEST_CASE("list_streams is sorted and reflects estimates") {
  TempDir dir("list");
  std::map<std::pair<int, int>, std::vector<Sample>> streams;
  std::vector<BuildingMeta> buildings;
  for (int b = 1; b <= 3; ++b) {
    std::vector<ElecMeterMeta> meters{fixtures::site(1)};
    for (int m = 2; m <= 4; ++m) meters.push_back(fixtures::sub(m, 1, "fridge"));
    buildings.push_back(fixtures::building(b, meters));
    for (int m = 1; m <= 4; ++m) streams[{b, m}] = fixtures::constant(0, 3, 1, 1);
  }
  Dataset ds = fixtures::make_dataset(dir.path(), buildings, streams);
  auto keys = ds.list_streams();
  CHECK(keys.size() == 12);
  CHECK(std::is_sorted(keys.begin(), keys.end()));

  for (int m = 2; m <= 4; ++m) ds.create_stream(StreamKey::estimate(1, m, "r1"));
  ds.close();
  keys = ds.list_streams();
  CHECK(keys.size() == 15);
  CHECK(std::count_if(keys.begin(), keys.end(),
                      [](const StreamKey& k) { return k.role == StreamRole::estimate; }) == 3);
  CHECK(ds.runs(1) == std::vector<std::string>{"r1"});

  std::filesystem::remove_all(dir / "building3/elec");
  keys = Dataset::open(dir.path()).list_streams();
  CHECK(std::none_of(keys.begin(), keys.end(), [](const StreamKey& k) { return k.building == 3; }));
}

TEST_CASE("a partial trailing row is truncated on open") {
  TempDir dir("repair");
  ten_row_dataset(dir);
  {
    std::ofstream f(dir / "building1/elec/meter1.csv", std::ios::app);
    f << "2014-01-01T00:0";
  }
  std::string warning;
  auto previous = set_warning_sink([&](const std::string& m) { warning = m; });
  Dataset ds = Dataset::open(dir.path());
  set_warning_sink(previous);
  CHECK_FALSE(warning.empty());
  CHECK(drain(ds.load(StreamKey::raw(1, 1))).size() == 10);
}

TEST_CASE("create refuses a non-empty directory") {
  TempDir dir("create");
  fixtures::write_text(dir / "junk.txt", "x");
  DatasetMeta meta;
  meta.name = "x";
  meta.buildings.push_back(fixtures::building(1, {fixtures::site(1)}));
  CHECK_THROWS_AS(Dataset::create(dir.path(), meta), Error);
}

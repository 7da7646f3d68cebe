#include "doctest.h"

#include "cli_harness.hpp"
#include "fixtures.hpp"
#include "nilm/cli.hpp"
#include "nilm/metadata.hpp"

using fixtures::TempDir;
using nilm::json;
namespace fs = std::filesystem;

namespace {

using cli_harness::last_json;
using cli_harness::nilm_cmd;

void small_synth(const fs::path& dest, int buildings = 2) {
  auto r = nilm_cmd({"synth", "--dest", dest.string(), "--buildings", std::to_string(buildings)});
  REQUIRE(r.code == 0);
}

}  // namespace

TEST_CASE("synth and info") {
  TempDir dir("cli-synth");
  auto r = nilm_cmd({"synth", "--dest", (dir / "ds").string(), "--seed", "9"});
  CHECK(r.code == 0);
  CHECK(json::parse(r.out)["seed"] == 9);
  auto again = nilm_cmd({"synth", "--dest", (dir / "ds").string()});
  CHECK(again.code == 1);
  CHECK(last_json(again.err)["error"]["code"] == "io");
  CHECK(nilm_cmd({"synth", "--dest", (dir / "ds").string(), "--force"}).code == 0);

  auto info = nilm_cmd({"info", "--dataset", (dir / "ds").string()});
  CHECK(info.code == 0);
  CHECK(json::parse(info.out)["buildings"].size() == 1);
}

TEST_CASE("argument and configuration errors exit 2") {
  TempDir dir("cli-args");
  CHECK(nilm_cmd({}).code == 2);
  CHECK(nilm_cmd({"stats"}).code == 2);
  CHECK(nilm_cmd({"--help"}).code == 0);

  fixtures::write_text(dir / "mapping.json", R"({"labels": {"refrigerator": "fridge"}, "colour": 1})");
  fixtures::write_text(dir / "h/labels.dat", "1 mains\n");
  fixtures::write_text(dir / "h/channel_1.dat", "1 1\n");
  auto r = nilm_cmd({"convert", "redd", "--source", (dir / "h").string(), "--dest",
                     (dir / "out").string(), "--mapping", (dir / "mapping.json").string()});
  CHECK(r.code == 2);
  const json e = last_json(r.err);
  CHECK(e["error"]["code"] == "configuration");
  CHECK(e["error"]["message"].get<std::string>().find("colour") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out"));

  auto missing = nilm_cmd({"stats", "--dataset", (dir / "nope").string(), "--out", (dir / "s").string()});
  CHECK(missing.code != 0);
}

TEST_CASE("partial conversion failure exits 1 and keeps the good house") {
  TempDir dir("cli-partial");
  for (int h = 1; h <= 2; ++h) {
    const fs::path house = dir / ("src/house_" + std::to_string(h));
    fixtures::write_text(house / "labels.dat", "1 mains\n2 kettle\n");
    fixtures::write_text(house / "channel_1.dat", "100 5\n101 6\n");
    fixtures::write_text(house / "channel_2.dat", h == 2 ? "100 5\n101 x\n" : "100 1\n101 1\n");
  }
  auto r = nilm_cmd({"convert", "redd", "--source", (dir / "src").string(), "--dest", (dir / "out").string()});
  CHECK(r.code == 1);
  const json status = last_json(r.err);
  CHECK(status["buildings"].size() == 2);
  auto info = nilm_cmd({"info", "--dataset", (dir / "out").string()});
  CHECK(json::parse(info.out)["buildings"].size() == 1);
}

TEST_CASE("stats output") {
  TempDir dir("cli-stats");
  small_synth(dir / "ds");
  auto r = nilm_cmd({"stats", "--dataset", (dir / "ds").string(), "--out", (dir / "s").string()});
  REQUIRE(r.code == 0);
  const json doc = json::parse(fixtures::read_text(dir / "s/stats.json"));
  REQUIRE(doc["buildings"].size() == 2);
  for (const auto& b : doc["buildings"]) {
    for (const char* key : {"good_sections", "dropout_rate", "total_energy", "energy_submetered",
                            "energy_per_category", "hourly_median", "entropy", "switches", "correlation"}) {
      CHECK_MESSAGE(b.contains(key), key);
    }
    CHECK(b["energy_submetered"]["fraction"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(b["hourly_median"]["meter1"].size() == 24);
    CHECK(b["good_sections"]["meter1"].size() == 1);
  }
  for (const char* file : {"good_sections.csv", "dropout_rate.csv", "total_energy.csv", "hourly_median.csv",
                           "entropy.csv", "switches.csv", "correlation.csv", "energy_per_category.csv"}) {
    CHECK_MESSAGE(fs::exists(dir / "s/building1" / file), file);
  }

  auto sel = nilm_cmd({"stats", "--dataset", (dir / "ds").string(), "--building", "1", "--select",
                       "category=cold", "--out", (dir / "cold").string()});
  REQUIRE(sel.code == 0);
  const json cold = json::parse(fixtures::read_text(dir / "cold/stats.json"));
  REQUIRE(cold["buildings"].size() == 1);
  CHECK(cold["buildings"][0]["meters"].size() == 1);
  CHECK(cold["buildings"][0]["meters"][0]["type"] == "fridge");

  auto bad_building = nilm_cmd({"stats", "--dataset", (dir / "ds").string(), "--building", "7", "--out",
                                (dir / "x").string()});
  CHECK(bad_building.code == 2);
  auto bad_query = nilm_cmd({"stats", "--dataset", (dir / "ds").string(), "--select", "colour=red", "--out",
                             (dir / "x").string()});
  CHECK(bad_query.code == 2);
}

TEST_CASE("train, disaggregate and evaluate") {
  TempDir dir("cli-flow");
  small_synth(dir / "ds");
  const std::string ds = (dir / "ds").string();
  const std::string models = (dir / "models").string();

  auto early = nilm_cmd({"metrics", "--dataset", ds, "--run-id", "co"});
  CHECK(early.code == 2);
  CHECK(early.err.find("disaggregate") != std::string::npos);

  auto no_model = nilm_cmd({"disaggregate", "--dataset", ds, "--model-dir", models, "--run-id", "co"});
  CHECK(no_model.code == 2);

  REQUIRE(nilm_cmd({"train", "--dataset", ds, "--model-dir", models, "--train-fraction", "0.5"}).code == 0);
  CHECK(fs::exists(dir / "models/building2.json"));
  auto d = nilm_cmd({"disaggregate", "--dataset", ds, "--model-dir", models, "--run-id", "co"});
  REQUIRE(d.code == 0);
  CHECK(json::parse(d.out)["runs"].size() == 2);
  CHECK(fs::exists(dir / "ds/building1/estimates/co/meter2.csv"));

  auto rerun = nilm_cmd({"disaggregate", "--dataset", ds, "--model-dir", models, "--run-id", "co"});
  CHECK(rerun.code == 2);
  CHECK(rerun.err.find("--force") != std::string::npos);
  const std::string before = fixtures::read_text(dir / "ds/building1/estimates/co/meter2.csv");
  CHECK(nilm_cmd({"disaggregate", "--dataset", ds, "--model-dir", models, "--run-id", "co", "--force"}).code == 0);
  CHECK(fixtures::read_text(dir / "ds/building1/estimates/co/meter2.csv") == before);

  auto m = nilm_cmd({"metrics", "--dataset", ds, "--run-id", "co", "--out", (dir / "report").string()});
  REQUIRE(m.code == 0);
  CHECK(m.out.find("f1") != std::string::npos);
  const json report = json::parse(fixtures::read_text(dir / "report/report.json"));
  REQUIRE(report["buildings"].size() == 2);
  for (const auto& b : report["buildings"]) {
    CHECK(b["status"] == "ok");
    CHECK(b["appliances"].size() == 3);
    for (const auto& [_, a] : b["appliances"].items()) CHECK(a["f1"].get<double>() > 0.9);
  }
  CHECK(report["across_buildings"].contains("f1"));
  CHECK(fs::exists(dir / "report/report.csv"));
}

TEST_CASE("metrics on explicit file pairs") {
  TempDir dir("cli-pair");
  fixtures::write_stream(dir / "e.csv", {{0, 100}, {1, 100}, {2, 100}, {3, 0}, {4, 0}, {5, 0}});
  fixtures::write_stream(dir / "t.csv", {{0, 100}, {1, 100}, {2, 0}, {3, 100}, {4, 0}, {5, 0}});
  auto r = nilm_cmd({"metrics", "--pair", "kettle:" + (dir / "e.csv").string() + ":" + (dir / "t.csv").string(),
                     "--period", "1", "--max-sample-period", "1", "--out", (dir / "r").string()});
  REQUIRE(r.code == 0);
  const json report = json::parse(fixtures::read_text(dir / "r/report.json"));
  const json& m = report["buildings"][0]["appliances"].begin().value();
  CHECK(m["n_pairs"] == 6);
  CHECK(std::fabs(m["f1"].get<double>() - 2.0 / 3.0) <= 1e-12);
  CHECK(std::fabs(m["mean_abs_error_w"].get<double>() - 200.0 / 6.0) <= 1e-12);

  CHECK(nilm_cmd({"metrics", "--pair", "bad", "--period", "1"}).code == 2);
  fixtures::write_text(dir / "unix.csv", "timestamp,active_power_w\n0,100\n");
  auto unusable = nilm_cmd({"metrics", "--pair", "x:" + (dir / "unix.csv").string() + ":" + (dir / "t.csv").string(),
                            "--period", "1"});
  CHECK(unusable.code == 2);
  CHECK(unusable.err.find("row 2") != std::string::npos);
  CHECK(nilm_cmd({"metrics", "--pair", "a:b.csv:c.csv"}).code == 2);
}

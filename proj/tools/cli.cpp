#include "nilm/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "nilm/co.hpp"
#include "nilm/convert.hpp"
#include "nilm/log.hpp"
#include "nilm/metrics.hpp"
#include "nilm/stats.hpp"

namespace fs = std::filesystem;

namespace nilm::cli {
namespace {

struct Context {
  std::ostream& out;
  std::ostream& err;
  bool quiet = false;
  std::mutex err_mutex;

  void progress(const std::string& line) {
    if (quiet) return;
    std::lock_guard lock(err_mutex);
    err << line << '\n';
  }
};

int exit_code(ErrorCode code) { return code == ErrorCode::io ? kExitIo : kExitValidation; }

json error_json(const Error& e) {
  json j = {{"code", to_string(e.code())}, {"message", e.what()}};
  if (auto* p = dynamic_cast<const PreconditionError*>(&e)) j["violations"] = to_json(p->violations());
  return {{"error", std::move(j)}};
}

std::size_t default_chunk_rows() {
  const char* env = std::getenv("NILM_CHUNK_ROWS");
  if (!env || !*env) return kDefaultChunkRows;
  std::size_t value = 0;
  const std::string_view text(env);
  auto r = std::from_chars(text.data(), text.data() + text.size(), value);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size() || value == 0) {
    throw Error(ErrorCode::configuration, "NILM_CHUNK_ROWS must be a positive integer, got '" +
                                              std::string(text) + "'");
  }
  return value;
}

Timestamp parse_time(const std::string& text) {
  if (auto t = parse_iso8601(text)) return *t;
  double v = 0.0;
  auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec == std::errc() && r.ptr == text.data() + text.size() && std::isfinite(v)) return v;
  throw Error(ErrorCode::invalid_argument,
              "cannot parse time '" + text + "' (use ISO-8601 UTC or unix seconds)");
}

json read_json_file(const fs::path& path, ErrorCode parse_code) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw Error(parse_code, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !(f << text) || !f.flush()) throw Error(ErrorCode::io, "cannot write " + path.string());
}

std::vector<int> select_buildings(const Dataset& ds, const std::string& selector) {
  std::vector<int> out;
  if (selector.empty() || selector == "all") {
    for (const auto& b : ds.metadata().buildings) out.push_back(b.instance);
    return out;
  }
  std::stringstream ss(selector);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int b = 0;
    auto r = std::from_chars(item.data(), item.data() + item.size(), b);
    if (r.ec != std::errc() || r.ptr != item.data() + item.size()) {
      throw Error(ErrorCode::invalid_argument, "bad building selector '" + item + "'");
    }
    if (!ds.metadata().find_building(b)) {
      throw Error(ErrorCode::not_found, "building " + std::to_string(b) + " is not in dataset '" +
                                            ds.metadata().name + "'");
    }
    out.push_back(b);
  }
  return out;
}

struct Outcome {
  int building = 0;
  bool ok = true;
  ErrorCode code = ErrorCode::io;
  std::string message;
  json result;
};

/// Runs `fn` per building on `jobs` workers, each with its own dataset
/// handle; results come back in building order.
template <typename Fn>
std::vector<Outcome> for_buildings(const fs::path& root, const std::vector<int>& buildings,
                                   std::size_t jobs, Fn fn) {
  std::vector<Outcome> outcomes(buildings.size());
  auto worker = [&](std::size_t first, std::size_t stride) {
    std::optional<Dataset> ds;
    for (std::size_t i = first; i < buildings.size(); i += stride) {
      Outcome& o = outcomes[i];
      o.building = buildings[i];
      try {
        if (!ds) ds.emplace(Dataset::open(root));
        ds->residency()->reset_peaks();
        o.result = fn(*ds, buildings[i]);
        const auto peak = ds->residency()->total();
        o.result["residency"] = {{"peak_chunks", peak.peak_chunks}, {"peak_rows", peak.peak_rows}};
      } catch (const Error& e) {
        o.ok = false;
        o.code = e.code();
        o.message = e.what();
        if (auto* p = dynamic_cast<const PreconditionError*>(&e)) o.result = to_json(p->violations());
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, buildings.size()));
  if (jobs == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < jobs; ++w) threads.emplace_back(worker, w, jobs);
    for (auto& t : threads) t.join();
  }
  return outcomes;
}

/// Exit status for a batch: 0 when all succeeded, otherwise a per-building
/// status list on stderr and 1 (any I/O failure) or 2.
int report_outcomes(Context& ctx, const std::string& command, const std::vector<Outcome>& outcomes) {
  bool any_failed = false, any_io = false;
  json status = json::array();
  for (const auto& o : outcomes) {
    json s = {{"building", o.building}, {"status", o.ok ? "ok" : "error"}};
    if (!o.ok) {
      any_failed = true;
      any_io = any_io || o.code == ErrorCode::io;
      s["code"] = to_string(o.code);
      s["message"] = o.message;
      if (o.code == ErrorCode::precondition) s["violations"] = o.result;
    }
    status.push_back(std::move(s));
  }
  if (!any_failed) return kExitOk;
  ctx.err << json{{"command", command}, {"buildings", status}}.dump() << '\n';
  return any_io ? kExitIo : kExitValidation;
}

// ------------------------------------------------------------- time splits

TimeFrame overlap_timeframe(const Dataset& ds, int building, const MeterGroup& meters) {
  std::optional<TimeFrame> overlap;
  for (const auto& m : meters) {
    auto tf = ds.stream_timeframe(m.key());
    if (!tf) throw Error(ErrorCode::precondition, m.label() + " has no samples");
    if (!overlap) {
      overlap = *tf;
    } else {
      overlap = overlap->intersect(*tf);
      if (!overlap) break;
    }
  }
  if (!overlap) {
    throw Error(ErrorCode::precondition,
                "building " + std::to_string(building) + " meters share no common timeframe");
  }
  return *overlap;
}

struct SplitOptions {
  double fraction = 0.5;
  std::string train_start, train_end, test_start, test_end;
};

std::pair<TimeFrame, TimeFrame> split_frames(const Dataset& ds, int building,
                                             const SplitOptions& opt) {
  const MeterGroup all = MeterGroup::building(ds, building);
  const TimeFrame overlap = overlap_timeframe(ds, building, all);
  std::optional<TimeFrame> train, test;
  if (!opt.train_start.empty() || !opt.train_end.empty()) {
    train = TimeFrame(opt.train_start.empty() ? overlap.start() : parse_time(opt.train_start),
                      opt.train_end.empty() ? overlap.end() : parse_time(opt.train_end));
  }
  if (!opt.test_start.empty() || !opt.test_end.empty()) {
    test = TimeFrame(opt.test_start.empty() ? overlap.start() : parse_time(opt.test_start),
                     opt.test_end.empty() ? overlap.end() : parse_time(opt.test_end));
  }
  if (!train || !test) {
    if (!(opt.fraction > 0.0 && opt.fraction < 1.0)) {
      throw Error(ErrorCode::invalid_argument, "--train-fraction must be in (0, 1)");
    }
    const Timestamp split = quantize_timestamp(overlap.start() + opt.fraction * overlap.duration());
    if (!train) train = TimeFrame(overlap.start(), split);
    if (!test) test = TimeFrame(split, overlap.end());
  }
  if (train->overlaps(*test)) {
    throw Error(ErrorCode::invalid_argument, "train and test timeframes must be disjoint");
  }
  return {*train, *test};
}

void add_split_options(CLI::App* cmd, SplitOptions& s) {
  cmd->add_option("--train-fraction", s.fraction,
                  "Train on the first fraction of the overlapping timeframe")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--train-start", s.train_start, "ISO-8601 UTC or unix seconds");
  cmd->add_option("--train-end", s.train_end);
  cmd->add_option("--test-start", s.test_start);
  cmd->add_option("--test-end", s.test_end);
}

// ---------------------------------------------------------------- convert

struct ConvertArgs {
  std::string source, dest, mapping;
};

int cmd_convert_redd(Context& ctx, const ConvertArgs& a, std::size_t chunk_rows) {
  ReddMapping mapping;
  if (!a.mapping.empty()) mapping = ReddMapping::from_json(read_json_file(a.mapping, ErrorCode::configuration));
  const ConversionReport report = convert_redd(a.source, a.dest, mapping, chunk_rows);
  ctx.out << report.to_json().dump(2) << '\n';
  if (report.ok()) return kExitOk;
  ctx.err << json{{"command", "convert redd"}, {"buildings", report.to_json()["buildings"]}}.dump()
          << '\n';
  return kExitIo;
}

struct SynthArgs {
  std::string spec, dest;
  bool force = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> buildings;
};

int cmd_synth(Context& ctx, const SynthArgs& a, std::size_t chunk_rows) {
  SynthSpec spec = a.spec.empty() ? default_synth_spec()
                                  : SynthSpec::from_json(read_json_file(a.spec, ErrorCode::configuration));
  if (a.seed) spec.seed = *a.seed;
  if (a.buildings) {
    if (!spec.buildings.empty()) {
      throw Error(ErrorCode::configuration, "--buildings conflicts with per-building specs");
    }
    spec.n_buildings = *a.buildings;
  }
  spec.validate();
  const DatasetMeta meta = generate_synthetic(spec, a.dest, {a.force, chunk_rows});
  ctx.out << json{{"dataset", meta.name}, {"dest", a.dest}, {"buildings", meta.buildings.size()},
                  {"seed", spec.seed}}
                 .dump()
          << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------ stats

struct StatsArgs {
  std::string dataset, building = "all", select, out;
  double on_threshold_w = kDefaultOnThresholdW;
  double bucket_s = kDefaultSwitchBucketS;
  double entropy_bin_w = kDefaultEntropyBinW;
  double max_power_w = kDefaultMaxPowerW;
  std::optional<double> period_s;
};

json frames_json(const std::vector<TimeFrame>& frames) {
  json out = json::array();
  for (const auto& f : frames) out.push_back({to_iso8601(f.start()), to_iso8601(f.end())});
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json building_stats(Context& ctx, const Dataset& ds, int b, const StatsArgs& a,
                    std::size_t chunk_rows) {
  const MeterGroup all = MeterGroup::building(ds, b);
  const MeterGroup sel = a.select.empty() ? all : select(all, SelectionQuery::parse(a.select));
  StatOptions opt;
  opt.chunk_rows = chunk_rows;
  opt.max_power_w = a.max_power_w;
  const std::string& tz = ds.metadata().building(b).timezone;
  const fs::path dir = fs::path(a.out) / ("building" + std::to_string(b));

  json meters = json::array(), good = json::object(), dropout_j = json::object(),
       energy = json::object(), hourly_j = json::object(), entropy_j = json::object();
  std::string good_csv = "meter,start,end\n", dropout_csv = "meter,dropout_rate\n",
              energy_csv = "meter,kwh,uptime_s,n_samples\n", entropy_csv = "meter,entropy_bits\n";
  std::vector<std::pair<std::string, std::array<std::optional<double>, 24>>> hourly_cols;

  for (const auto& m : sel) {
    const std::string key = "meter" + std::to_string(m.instance());
    json info = {{"meter", m.instance()}, {"site_meter", m.meta().site_meter}};
    if (!m.meta().appliances.empty()) info["type"] = m.meta().appliances.front().type;
    meters.push_back(std::move(info));

    PipelineSource source{m, {}, std::nullopt};
    source.load.chunk_rows = chunk_rows;
    PipelineSpec p{source, {}, std::nullopt};
    p.then(std::make_shared<GoodSectionsNode>(m.meta().max_sample_period_s))
        .then(std::make_shared<DropoutRateNode>(m.meta().sample_period_s))
        .then(std::make_shared<ClipNode>(a.max_power_w))
        .then(TotalEnergyNode::for_meter(m.meta()))
        .then(std::make_shared<HourlyNode>(tz, a.max_power_w))
        .then(std::make_shared<HistogramNode>(a.entropy_bin_w));
    const RunResult r = run(p);
    ctx.progress("[stats] building " + std::to_string(b) + " " + key + ": " +
                 std::to_string(r.chunks) + " chunks, " + std::to_string(r.rows) + " rows");

    const auto& gs = r.get<GoodSectionsResult>("good_sections");
    good[key] = frames_json(gs.sections);
    for (const auto& f : gs.sections) {
      good_csv += key + "," + to_iso8601(f.start()) + "," + to_iso8601(f.end()) + "\n";
    }
    const auto rate = r.get<DropoutResult>("dropout_rate").rate();
    dropout_j[key] = optional_json(rate);
    dropout_csv += key + "," + (rate ? format_power(*rate) : std::string()) + "\n";
    const auto& e = r.get<EnergyResult>("total_energy");
    energy[key] = e.to_json();
    energy_csv += key + "," + std::to_string(e.kwh()) + "," + std::to_string(e.uptime_s()) + "," +
                  std::to_string(e.n_samples) + "\n";
    const auto medians = r.get<HourlyResult>("hourly").medians();
    json hv = json::array();
    for (const auto& v : medians) hv.push_back(optional_json(v));
    hourly_j[key] = std::move(hv);
    hourly_cols.emplace_back(key, medians);
    const auto& h = r.get<HistogramResult>("histogram");
    if (h.total > 0) {
      entropy_j[key] = h.entropy_bits();
      entropy_csv += key + "," + std::to_string(h.entropy_bits()) + "\n";
    } else {
      entropy_j[key] = nullptr;
      entropy_csv += key + ",\n";
    }
  }

  json submetered;
  std::string submetered_csv = "fraction,raw_ratio,clamped\n";
  try {
    const SubmeteredFraction f = proportion_of_energy_submetered(all, chunk_rows);
    submetered = {{"fraction", f.fraction}, {"raw_ratio", f.raw_ratio}, {"clamped", f.clamped}};
    submetered_csv += std::to_string(f.fraction) + "," + std::to_string(f.raw_ratio) + "," +
                      (f.clamped ? "true" : "false") + "\n";
  } catch (const Error& e) {
    if (e.code() == ErrorCode::precondition || e.is_io()) throw;
    submetered = {{"error", e.what()}};
  }

  const auto categories = sel.empty() ? std::map<std::string, double>{}
                                      : energy_per_category(sel, Vocabulary::builtin(), opt);
  std::string category_csv = "category,kwh\n";
  for (const auto& [c, kwh] : categories) category_csv += c + "," + std::to_string(kwh) + "\n";

  std::vector<ElecMeter> appliance_list;
  for (const auto& m : sel) {
    if (!m.meta().site_meter) appliance_list.push_back(m);
  }
  json switches = nullptr, correlation = nullptr;
  std::string switches_csv = "meters_switching,buckets\n", correlation_csv;
  if (!appliance_list.empty()) {
    const MeterGroup appliances(appliance_list);
    const SwitchesResult s = simultaneous_switches(appliances, a.on_threshold_w, a.bucket_s, chunk_rows);
    switches = {{"on_threshold_w", a.on_threshold_w}, {"bucket_s", a.bucket_s}, {"histogram", s.counts}};
    for (std::size_t k = 0; k < s.counts.size(); ++k) {
      switches_csv += std::to_string(k) + "," + std::to_string(s.counts[k]) + "\n";
    }
    const double period = a.period_s.value_or(coarsest_sample_period(appliances));
    json labels = json::array(), matrix = json::array();
    correlation_csv = "meter";
    for (const auto& m : appliances) {
      labels.push_back("meter" + std::to_string(m.instance()));
      correlation_csv += ",meter" + std::to_string(m.instance());
    }
    correlation_csv += "\n";
    for (std::size_t i = 0; i < appliances.size(); ++i) {
      json row = json::array();
      correlation_csv += "meter" + std::to_string(appliances[i].instance());
      for (std::size_t j = 0; j < appliances.size(); ++j) {
        std::optional<double> r;
        try {
          r = nilm::correlation(appliances[i], appliances[j], period, chunk_rows);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::undefined_statistic) throw;
        }
        row.push_back(optional_json(r));
        correlation_csv += "," + (r ? std::to_string(*r) : std::string());
      }
      matrix.push_back(std::move(row));
      correlation_csv += "\n";
    }
    correlation = {{"period_s", period}, {"meters", labels}, {"matrix", matrix}};
  }

  std::string hourly_csv = "hour";
  for (const auto& [key, _] : hourly_cols) hourly_csv += "," + key;
  hourly_csv += "\n";
  for (int h = 0; h < 24; ++h) {
    hourly_csv += std::to_string(h);
    for (const auto& [_, v] : hourly_cols) hourly_csv += "," + (v[h] ? format_power(*v[h]) : std::string());
    hourly_csv += "\n";
  }

  write_text(dir / "good_sections.csv", good_csv);
  write_text(dir / "dropout_rate.csv", dropout_csv);
  write_text(dir / "total_energy.csv", energy_csv);
  write_text(dir / "energy_submetered.csv", submetered_csv);
  write_text(dir / "energy_per_category.csv", category_csv);
  write_text(dir / "hourly_median.csv", hourly_csv);
  write_text(dir / "entropy.csv", entropy_csv);
  write_text(dir / "switches.csv", switches_csv);
  if (!correlation_csv.empty()) write_text(dir / "correlation.csv", correlation_csv);

  return {{"building", b},
          {"timezone", tz},
          {"meters", std::move(meters)},
          {"good_sections", std::move(good)},
          {"dropout_rate", std::move(dropout_j)},
          {"total_energy", std::move(energy)},
          {"energy_submetered", std::move(submetered)},
          {"energy_per_category", categories},
          {"hourly_median", std::move(hourly_j)},
          {"entropy", std::move(entropy_j)},
          {"switches", std::move(switches)},
          {"correlation", std::move(correlation)}};
}

int cmd_stats(Context& ctx, const StatsArgs& a, std::size_t chunk_rows, std::size_t jobs) {
  if (!a.select.empty()) SelectionQuery::parse(a.select);
  std::vector<int> buildings;
  std::string name;
  {
    const Dataset ds = Dataset::open(a.dataset);
    buildings = select_buildings(ds, a.building);
    name = ds.metadata().name;
  }
  auto outcomes = for_buildings(a.dataset, buildings, jobs, [&](const Dataset& ds, int b) {
    return building_stats(ctx, ds, b, a, chunk_rows);
  });
  json list = json::array();
  for (const auto& o : outcomes) {
    list.push_back(o.ok ? o.result : json{{"building", o.building}, {"error", o.message}});
  }
  json doc = {{"dataset", name}, {"select", a.select}, {"buildings", std::move(list)}};
  write_text(fs::path(a.out) / "stats.json", doc.dump(2) + "\n");
  ctx.out << (fs::path(a.out) / "stats.json").string() << '\n';
  return report_outcomes(ctx, "stats", outcomes);
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string dataset, building = "all", model, model_dir, select;
  SplitOptions split;
  std::size_t k_max = 3;
  double min_state_w = 5.0;
  std::uint64_t combination_limit = 1'000'000;
};

fs::path model_path(const std::string& model, const std::string& model_dir, int building) {
  if (!model.empty()) return model;
  return fs::path(model_dir) / ("building" + std::to_string(building) + ".json");
}

int cmd_train(Context& ctx, const TrainArgs& a, std::size_t chunk_rows, std::size_t jobs) {
  if (a.model.empty() == a.model_dir.empty()) {
    throw Error(ErrorCode::invalid_argument, "give exactly one of --model or --model-dir");
  }
  std::vector<int> buildings;
  {
    const Dataset ds = Dataset::open(a.dataset);
    buildings = select_buildings(ds, a.building);
  }
  if (!a.model.empty() && buildings.size() != 1) {
    throw Error(ErrorCode::invalid_argument, "--model takes one building; use --model-dir");
  }
  if (!a.model_dir.empty()) fs::create_directories(a.model_dir);
  TrainConfig config;
  config.k_max = a.k_max;
  config.min_state_w = a.min_state_w;
  config.combination_limit = a.combination_limit;
  config.chunk_rows = chunk_rows;
  auto outcomes = for_buildings(a.dataset, buildings, jobs, [&](const Dataset& ds, int b) {
    const auto [train_frame, test_frame] = split_frames(ds, b, a.split);
    const MeterGroup all = MeterGroup::building(ds, b);
    MeterGroup subs = submeters(all);
    if (!a.select.empty()) subs = select(subs, SelectionQuery::parse(a.select));
    const COModel model = train(subs, train_frame, config);
    const fs::path path = model_path(a.model, a.model_dir, b);
    save_model(model, path);
    ctx.progress("[train] building " + std::to_string(b) + ": " +
                 std::to_string(model.appliances.size()) + " appliances, " +
                 std::to_string(model.combinations()) + " combinations -> " + path.string());
    return json{{"building", b},
                {"model", path.string()},
                {"train", frames_json({train_frame})[0]},
                {"test", frames_json({test_frame})[0]}};
  });
  json list = json::array();
  for (const auto& o : outcomes) {
    if (o.ok) list.push_back(o.result);
  }
  ctx.out << json{{"models", list}}.dump(2) << '\n';
  return report_outcomes(ctx, "train", outcomes);
}

// ----------------------------------------------------------- disaggregate

struct DisaggArgs {
  std::string dataset, building = "all", model, model_dir, run_id;
  SplitOptions split;
  bool force = false;
  bool use_split = false;
};

int cmd_disaggregate(Context& ctx, const DisaggArgs& a, std::size_t chunk_rows, std::size_t jobs) {
  if (a.model.empty() == a.model_dir.empty()) {
    throw Error(ErrorCode::invalid_argument, "give exactly one of --model or --model-dir");
  }
  if (a.run_id.empty() || a.run_id.find_first_of("/\\") != std::string::npos || a.run_id == "." ||
      a.run_id == "..") {
    throw Error(ErrorCode::invalid_argument, "--run-id must be a plain name");
  }
  std::vector<int> buildings;
  {
    const Dataset ds = Dataset::open(a.dataset);
    buildings = select_buildings(ds, a.building);
    if (!a.model.empty() && buildings.size() != 1) {
      throw Error(ErrorCode::invalid_argument, "--model takes one building; use --model-dir");
    }
    for (int b : buildings) {
      const fs::path path = model_path(a.model, a.model_dir, b);
      if (!fs::exists(path)) {
        throw Error(ErrorCode::not_found, "no model for building " + std::to_string(b) + " at " +
                                              path.string() + "; run `nilm train` first");
      }
      const auto runs = ds.runs(b);
      if (!a.force && std::find(runs.begin(), runs.end(), a.run_id) != runs.end()) {
        throw Error(ErrorCode::configuration, "run '" + a.run_id + "' already exists for building " +
                                                  std::to_string(b) + "; pass --force to replace it");
      }
    }
  }
  auto outcomes = for_buildings(a.dataset, buildings, jobs, [&](Dataset& ds, int b) {
    const COModel model = load_model(model_path(a.model, a.model_dir, b));
    if (model.building != b) {
      throw Error(ErrorCode::configuration, "model was trained on building " +
                                                std::to_string(model.building) + ", not " +
                                                std::to_string(b));
    }
    const MeterGroup all = MeterGroup::building(ds, b);
    TimeFrame test = model.train_timeframe;
    if (a.use_split) {
      test = split_frames(ds, b, a.split).second;
    } else {
      const TimeFrame overlap = overlap_timeframe(ds, b, all);
      if (!(overlap.end() > model.train_timeframe.end())) {
        throw Error(ErrorCode::precondition, "building " + std::to_string(b) +
                                                 " has no data after the training timeframe");
      }
      test = TimeFrame(std::max(overlap.start(), model.train_timeframe.end()), overlap.end());
    }
    const fs::path run_dir = ds.root() / ("building" + std::to_string(b)) / "estimates" / a.run_id;
    if (a.force) fs::remove_all(run_dir);
    DisaggregateOptions opt;
    opt.chunk_rows = chunk_rows;
    opt.sections = std::vector<TimeFrame>{test};
    std::size_t chunk_no = 0;
    opt.progress = [&](const TimeFrame& f, std::size_t rows) {
      ctx.progress("[disaggregate] building " + std::to_string(b) + " chunk " +
                   std::to_string(++chunk_no) + ": " + std::to_string(rows) + " rows through " +
                   to_iso8601(f.end()));
    };
    const DisaggregateSummary s = disaggregate(mains(all), model, ds, a.run_id, opt);
    return json{{"building", b}, {"run_id", a.run_id}, {"chunks", s.chunks}, {"rows", s.rows},
                {"test", frames_json({test})[0]}};
  });
  json list = json::array();
  for (const auto& o : outcomes) {
    if (o.ok) list.push_back(o.result);
  }
  ctx.out << json{{"runs", list}}.dump(2) << '\n';
  return report_outcomes(ctx, "disaggregate", outcomes);
}

// ---------------------------------------------------------------- metrics

struct MetricsArgs {
  std::string dataset, building = "all", run_id, out;
  std::vector<std::string> pairs;
  std::optional<double> period_s;
  double max_sample_period_s = 0.0;
  double on_threshold_w = kDefaultOnThresholdW;
};

StreamPair parse_pair(const std::string& text) {
  const auto first = text.find(':');
  const auto last = text.rfind(':');
  if (first == std::string::npos || first == last) {
    throw Error(ErrorCode::invalid_argument, "--pair expects label:estimate.csv:truth.csv, got '" + text + "'");
  }
  return {text.substr(0, first), text.substr(first + 1, last - first - 1), text.substr(last + 1)};
}

int cmd_metrics(Context& ctx, const MetricsArgs& a, std::size_t chunk_rows, std::size_t jobs) {
  MetricsConfig config;
  config.period_s = a.period_s;
  config.on_threshold_w = a.on_threshold_w;
  config.chunk_rows = chunk_rows;
  config.jobs = jobs;
  MetricReport report;
  if (!a.pairs.empty()) {
    if (!a.dataset.empty()) throw Error(ErrorCode::invalid_argument, "--pair and --dataset are exclusive");
    if (!a.period_s) throw Error(ErrorCode::invalid_argument, "--pair needs --period");
    std::vector<StreamPair> pairs;
    for (const auto& p : a.pairs) pairs.push_back(parse_pair(p));
    const double max_period = a.max_sample_period_s > 0.0 ? a.max_sample_period_s : *a.period_s;
    report.run_id = a.run_id;
    report.buildings.push_back(evaluate_files(pairs, *a.period_s, max_period, config));
    report.aggregate();
    const auto& entries = report.buildings.front().appliances;
    if (std::none_of(entries.begin(), entries.end(), [](const auto& e) { return e.metrics.has_value(); })) {
      json errors = json::array();
      for (const auto& e : entries) errors.push_back(*e.error);
      ctx.err << json{{"error", {{"code", "undefined_statistic"},
                                 {"message", "no --pair produced aligned samples"},
                                 {"pairs", errors}}}}
                     .dump()
              << '\n';
      return kExitValidation;
    }
  } else {
    if (a.dataset.empty() || a.run_id.empty()) {
      throw Error(ErrorCode::invalid_argument, "metrics needs --dataset and --run-id (or --pair)");
    }
    const Dataset ds = Dataset::open(a.dataset);
    report = evaluate(ds, a.run_id, select_buildings(ds, a.building), config);
  }
  const json doc = to_json(report);
  if (!a.out.empty()) {
    write_text(fs::path(a.out) / "report.json", doc.dump(2) + "\n");
    write_text(fs::path(a.out) / "report.csv", to_csv(report));
  }
  ctx.out << render_tables(report);
  const bool none_ok = std::none_of(report.buildings.begin(), report.buildings.end(),
                                    [](const BuildingReport& b) { return b.ok(); });
  if (none_ok) {
    json status = json::array();
    for (const auto& b : report.buildings) status.push_back({{"building", b.building}, {"error", *b.error}});
    ctx.err << json{{"error", {{"code", "not_found"},
                               {"message", "no building has estimates for run '" + a.run_id +
                                               "'; run `nilm disaggregate --run-id " + a.run_id +
                                               "` first"},
                               {"buildings", status}}}}
                   .dump()
            << '\n';
    return kExitValidation;
  }
  return kExitOk;
}

// ------------------------------------------------------------------- info

int cmd_info(Context& ctx, const std::string& dataset) {
  const Dataset ds = Dataset::open(dataset);
  json buildings = json::array();
  for (const auto& b : ds.metadata().buildings) {
    json j = to_json(b);
    j["runs"] = ds.runs(b.instance);
    buildings.push_back(std::move(j));
  }
  ctx.out << json{{"name", ds.metadata().name}, {"buildings", buildings}}.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx{out, err, false, {}};
  CLI::App app{"Non-intrusive load monitoring toolkit", "nilm"};
  app.require_subcommand(1);
  std::size_t chunk_rows_flag = 0, jobs = 1;
  app.add_option("--chunk-rows", chunk_rows_flag, "Rows per chunk (default $NILM_CHUNK_ROWS or 100000)")
      ->check(CLI::PositiveNumber);
  app.add_option("--jobs", jobs, "Buildings processed in parallel")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", ctx.quiet, "No progress output");

  auto* convert = app.add_subcommand("convert", "Import an external dataset");
  convert->require_subcommand(1);
  ConvertArgs convert_args;
  auto* redd = convert->add_subcommand("redd", "REDD-style channel_<M>.dat layout");
  redd->add_option("--source", convert_args.source)->required();
  redd->add_option("--dest", convert_args.dest)->required();
  redd->add_option("--mapping", convert_args.mapping, "Mapping JSON");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--spec", synth_args.spec, "Spec JSON (default: three two-state appliances)");
  synth->add_option("--dest", synth_args.dest)->required();
  synth->add_flag("--force", synth_args.force, "Replace an existing dataset");
  synth->add_option("--seed", synth_args.seed);
  synth->add_option("--buildings", synth_args.buildings)->check(CLI::PositiveNumber);

  StatsArgs stats_args;
  auto* stats = app.add_subcommand("stats", "Dataset statistics and plot data");
  stats->add_option("--dataset", stats_args.dataset)->required();
  stats->add_option("--building", stats_args.building, "Building id, list a,b or 'all'");
  stats->add_option("--select", stats_args.select, "Meter query, e.g. category=lighting");
  stats->add_option("--out", stats_args.out)->required();
  stats->add_option("--on-threshold", stats_args.on_threshold_w);
  stats->add_option("--bucket", stats_args.bucket_s)->check(CLI::PositiveNumber);
  stats->add_option("--entropy-bin", stats_args.entropy_bin_w)->check(CLI::PositiveNumber);
  stats->add_option("--max-power", stats_args.max_power_w)->check(CLI::PositiveNumber);
  stats->add_option("--period", stats_args.period_s, "Grid period for correlation");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train combinatorial-optimisation models");
  train_cmd->add_option("--dataset", train_args.dataset)->required();
  train_cmd->add_option("--building", train_args.building);
  train_cmd->add_option("--model", train_args.model, "Model file (one building)");
  train_cmd->add_option("--model-dir", train_args.model_dir, "Directory of building<N>.json");
  train_cmd->add_option("--select", train_args.select, "Restrict the submeters trained on");
  train_cmd->add_option("--k-max", train_args.k_max)->check(CLI::PositiveNumber);
  train_cmd->add_option("--min-state", train_args.min_state_w);
  train_cmd->add_option("--combination-limit", train_args.combination_limit);
  add_split_options(train_cmd, train_args.split);

  DisaggArgs disagg_args;
  auto* disagg = app.add_subcommand("disaggregate", "Write per-appliance estimates");
  disagg->add_option("--dataset", disagg_args.dataset)->required();
  disagg->add_option("--building", disagg_args.building);
  disagg->add_option("--model", disagg_args.model);
  disagg->add_option("--model-dir", disagg_args.model_dir);
  disagg->add_option("--run-id", disagg_args.run_id)->required();
  disagg->add_flag("--force", disagg_args.force, "Replace an existing run");
  add_split_options(disagg, disagg_args.split);

  MetricsArgs metrics_args;
  auto* metrics = app.add_subcommand("metrics", "Evaluate a disaggregation run");
  metrics->add_option("--dataset", metrics_args.dataset);
  metrics->add_option("--run-id", metrics_args.run_id);
  metrics->add_option("--building", metrics_args.building);
  metrics->add_option("--out", metrics_args.out, "Write report.json and report.csv here");
  metrics->add_option("--pair", metrics_args.pairs, "label:estimate.csv:truth.csv (no dataset)");
  metrics->add_option("--period", metrics_args.period_s)->check(CLI::PositiveNumber);
  metrics->add_option("--max-sample-period", metrics_args.max_sample_period_s);
  metrics->add_option("--on-threshold", metrics_args.on_threshold_w);

  std::string info_dataset;
  auto* info = app.add_subcommand("info", "Print dataset metadata");
  info->add_option("--dataset", info_dataset)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", {{"code", "invalid_argument"}, {"message", e.what()}}}}.dump() << '\n';
    return kExitValidation;
  }

  auto previous_sink = set_warning_sink([&ctx](const std::string& message) {
    std::lock_guard lock(ctx.err_mutex);
    ctx.err << "warning: " << message << '\n';
  });
  int code = kExitOk;
  try {
    const std::size_t chunk_rows = chunk_rows_flag ? chunk_rows_flag : default_chunk_rows();
    disagg_args.use_split = !disagg->get_option("--train-fraction")->empty() ||
                            !disagg_args.split.train_start.empty() ||
                            !disagg_args.split.train_end.empty() ||
                            !disagg_args.split.test_start.empty() || !disagg_args.split.test_end.empty();
    if (redd->parsed()) {
      code = cmd_convert_redd(ctx, convert_args, chunk_rows);
    } else if (synth->parsed()) {
      code = cmd_synth(ctx, synth_args, chunk_rows);
    } else if (stats->parsed()) {
      code = cmd_stats(ctx, stats_args, chunk_rows, jobs);
    } else if (train_cmd->parsed()) {
      code = cmd_train(ctx, train_args, chunk_rows, jobs);
    } else if (disagg->parsed()) {
      code = cmd_disaggregate(ctx, disagg_args, chunk_rows, jobs);
    } else if (metrics->parsed()) {
      code = cmd_metrics(ctx, metrics_args, chunk_rows, jobs);
    } else if (info->parsed()) {
      code = cmd_info(ctx, info_dataset);
    }
  } catch (const Error& e) {
    err << error_json(e).dump() << '\n';
    code = exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    err << json{{"error", {{"code", "io"}, {"message", e.what()}}}}.dump() << '\n';
    code = kExitIo;
  } catch (const std::exception& e) {
    err << json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump() << '\n';
    code = kExitValidation;
  }
  set_warning_sink(std::move(previous_sink));
  return code;
}

}  // namespace nilm::cli

#include "nilm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>

#include "nilm/errors.hpp"

namespace nilm {

void PairAccumulator::add(double estimate_w, double truth_w) {
  ++n;
  const bool e_on = estimate_w > on_threshold_w;
  const bool t_on = truth_w > on_threshold_w;
  if (e_on && t_on) {
    ++tp;
  } else if (e_on) {
    ++fp;
  } else if (t_on) {
    ++fn;
  } else {
    ++tn;
  }
  const double d = estimate_w - truth_w;
  abs_error.add(std::abs(d));
  squared_error.add(d * d);
  estimate_joules.add(estimate_w * period_s);
  truth_joules.add(truth_w * period_s);
}

PairAccumulator PairAccumulator::from_chunk(const AlignedChunk& chunk, double period_s,
                                            double on_threshold_w) {
  PairAccumulator acc(period_s, on_threshold_w);
  acc.coverage.add(chunk.frame);
  for (std::size_t i = 0; i < chunk.rows(); ++i) acc.add(chunk.at(i, 0), chunk.at(i, 1));
  return acc;
}

void PairAccumulator::merge_from(const PairAccumulator& later) {
  if (later.period_s != period_s || later.on_threshold_w != on_threshold_w) {
    throw Error(ErrorCode::merge, "cannot merge metric accumulators with different settings");
  }
  coverage.absorb(later.coverage);
  n += later.n;
  tp += later.tp;
  fp += later.fp;
  fn += later.fn;
  tn += later.tn;
  abs_error.merge(later.abs_error);
  squared_error.merge(later.squared_error);
  estimate_joules.merge(later.estimate_joules);
  truth_joules.merge(later.truth_joules);
}

F1Score f1_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  F1Score s;
  if (tp + fp > 0) s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (s.precision + s.recall > 0.0) {
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

ApplianceMetrics finalize(const PairAccumulator& acc, std::string label) {
  if (acc.n == 0) {
    throw Error(ErrorCode::undefined_statistic,
                "no aligned estimate/truth pairs" + (label.empty() ? "" : " for " + label));
  }
  ApplianceMetrics m;
  m.label = std::move(label);
  m.n_pairs = acc.n;
  const F1Score s = f1_from_counts(acc.tp, acc.fp, acc.fn);
  m.f1 = s.f1;
  m.precision = s.precision;
  m.recall = s.recall;
  const double n = static_cast<double>(acc.n);
  m.estimated_kwh = acc.estimate_joules.value() / 3.6e6;
  m.true_kwh = acc.truth_joules.value() / 3.6e6;
  m.error_total_energy_kwh = m.estimated_kwh - m.true_kwh;
  m.mean_abs_error_w = acc.abs_error.value() / n;
  m.rms_error_w = std::sqrt(acc.squared_error.value() / n);
  return m;
}

double fraction_energy_assigned_correctly(const std::vector<double>& estimated_kwh,
                                          const std::vector<double>& true_kwh) {
  if (estimated_kwh.empty() || estimated_kwh.size() != true_kwh.size()) {
    throw Error(ErrorCode::invalid_argument, "FEAC needs matching, non-empty appliance lists");
  }
  CompensatedSum est_total, true_total;
  for (double v : estimated_kwh) est_total.add(v);
  for (double v : true_kwh) true_total.add(v);
  if (!(est_total.value() > 0.0) || !(true_total.value() > 0.0)) {
    throw Error(ErrorCode::undefined_statistic,
                "fraction of energy assigned correctly is undefined with zero total energy");
  }
  CompensatedSum feac;
  for (std::size_t i = 0; i < estimated_kwh.size(); ++i) {
    feac.add(std::min(estimated_kwh[i] / est_total.value(), true_kwh[i] / true_total.value()));
  }
  return std::clamp(feac.value(), 0.0, 1.0);
}

namespace {

PairAccumulator accumulate_reader(AlignedReader& reader, double period, double threshold) {
  PairAccumulator total(period, threshold);
  while (auto chunk = reader.next()) {
    total.merge_from(PairAccumulator::from_chunk(*chunk, period, threshold));
  }
  return total;
}

void fill(ApplianceEntry& entry, const PairAccumulator& acc, const std::string& label) {
  try {
    entry.metrics = finalize(acc, label);
  } catch (const Error& e) {
    entry.error = e.what();
  }
}

void compute_feac(BuildingReport& report) {
  std::vector<double> est, truth;
  for (const auto& a : report.appliances) {
    if (!a.metrics) continue;
    est.push_back(a.metrics->estimated_kwh);
    truth.push_back(a.metrics->true_kwh);
  }
  if (est.empty()) {
    report.feac_error = "no appliance has aligned pairs";
    return;
  }
  try {
    report.feac = fraction_energy_assigned_correctly(est, truth);
  } catch (const Error& e) {
    report.feac_error = e.what();
  }
}

const char* const kApplianceMetricNames[] = {"f1", "precision", "recall", "error_total_energy_kwh",
                                             "mean_abs_error_w", "rms_error_w"};

double metric_value(const ApplianceMetrics& m, const std::string& name) {
  if (name == "f1") return m.f1;
  if (name == "precision") return m.precision;
  if (name == "recall") return m.recall;
  if (name == "error_total_energy_kwh") return m.error_total_energy_kwh;
  if (name == "mean_abs_error_w") return m.mean_abs_error_w;
  return m.rms_error_w;
}

BuildingReport evaluate_building(const Dataset& dataset, const std::string& run_id, int building,
                                 const MetricsConfig& config) {
  BuildingReport report;
  report.building = building;
  try {
    if (!dataset.metadata().find_building(building)) {
      report.error = "building " + std::to_string(building) + " is not in the dataset";
      return report;
    }
    const auto runs = dataset.runs(building);
    if (std::find(runs.begin(), runs.end(), run_id) == runs.end()) {
      report.error = "no estimates for run '" + run_id + "' in building " + std::to_string(building) +
                     "; run disaggregate first";
      return report;
    }
    for (const auto& key : dataset.list_streams()) {
      if (key.building != building || key.role != StreamRole::estimate || key.run_id != run_id) {
        continue;
      }
      ApplianceEntry entry;
      entry.meter = key.meter;
      try {
        const ElecMeter truth(dataset, building, key.meter);
        const ElecMeter estimate = ElecMeter::estimate(dataset, building, key.meter, run_id);
        const std::string label = truth.meta().appliances.empty()
                                      ? "meter" + std::to_string(key.meter)
                                      : truth.meta().appliances.front().type;
        fill(entry, accumulate(estimate, truth, config), label);
      } catch (const Error& e) {
        entry.error = e.what();
      }
      report.appliances.push_back(std::move(entry));
    }
    if (report.appliances.empty()) {
      report.error = "run '" + run_id + "' has no estimate streams";
      return report;
    }
    compute_feac(report);
  } catch (const Error& e) {
    report.error = e.what();
  }
  return report;
}

}  // namespace

PairAccumulator accumulate(const ElecMeter& estimate, const ElecMeter& truth,
                           const MetricsConfig& config) {
  const double period = config.period_s.value_or(truth.meta().sample_period_s);
  AlignedReader reader(MeterGroup({estimate, truth}), config.chunk_rows, period);
  return accumulate_reader(reader, period, config.on_threshold_w);
}

std::map<std::string, double> BuildingReport::summary() const {
  std::map<std::string, double> out;
  std::size_t count = 0;
  for (const auto& a : appliances) {
    if (!a.metrics) continue;
    ++count;
    for (const char* name : kApplianceMetricNames) out[name] += metric_value(*a.metrics, name);
  }
  if (count > 0) {
    for (auto& [_, v] : out) v /= static_cast<double>(count);
  }
  if (feac) out["fraction_energy_assigned_correctly"] = *feac;
  return out;
}

double BuildingReport::true_kwh() const {
  double total = 0.0;
  for (const auto& a : appliances) {
    if (a.metrics) total += a.metrics->true_kwh;
  }
  return total;
}

void MetricReport::aggregate() {
  across_buildings.clear();
  energy_weighted.clear();
  std::map<std::string, double> weighted_sum, weight;
  for (const auto& b : buildings) {
    if (!b.ok()) continue;
    const double w = b.true_kwh();
    for (const auto& [name, v] : b.summary()) {
      auto [it, fresh] = across_buildings.try_emplace(name);
      Aggregate& a = it->second;
      if (fresh) {
        a.min = a.max = v;
      } else {
        a.min = std::min(a.min, v);
        a.max = std::max(a.max, v);
      }
      a.mean += v;
      ++a.n;
      weighted_sum[name] += w * v;
      weight[name] += w;
    }
  }
  for (auto& [_, a] : across_buildings) a.mean /= static_cast<double>(a.n);
  for (const auto& [name, s] : weighted_sum) {
    if (weight[name] > 0.0) energy_weighted[name] = s / weight[name];
  }
}

MetricReport evaluate(const Dataset& dataset, const std::string& run_id,
                      const std::vector<int>& buildings, const MetricsConfig& config) {
  MetricReport report;
  report.run_id = run_id;
  report.buildings.resize(buildings.size());
  const std::size_t jobs = std::max<std::size_t>(1, config.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < buildings.size(); ++i) {
      report.buildings[i] = evaluate_building(dataset, run_id, buildings[i], config);
    }
  } else {
    for (std::size_t start = 0; start < buildings.size(); start += jobs) {
      std::vector<std::future<BuildingReport>> batch;
      for (std::size_t i = start; i < std::min(buildings.size(), start + jobs); ++i) {
        batch.push_back(std::async(std::launch::async, evaluate_building, std::cref(dataset),
                                   std::cref(run_id), buildings[i], std::cref(config)));
      }
      for (std::size_t k = 0; k < batch.size(); ++k) report.buildings[start + k] = batch[k].get();
    }
  }
  report.aggregate();
  return report;
}

BuildingReport evaluate_files(const std::vector<StreamPair>& pairs, double period_s,
                              double max_sample_period_s, const MetricsConfig& config) {
  if (pairs.empty()) throw Error(ErrorCode::invalid_argument, "no estimate/truth pairs given");
  if (!(max_sample_period_s > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "max_sample_period_s must be positive");
  }
  BuildingReport report;
  int index = 0;
  for (const auto& p : pairs) {
    ApplianceEntry entry;
    entry.meter = ++index;
    try {
      std::vector<Resampler> resamplers;
      resamplers.emplace_back(SampleCursor(CsvReader(p.estimate), std::nullopt), period_s,
                              max_sample_period_s);
      resamplers.emplace_back(SampleCursor(CsvReader(p.truth), std::nullopt), period_s,
                              max_sample_period_s);
      AlignedReader reader(AlignedCursor(std::move(resamplers), period_s), config.chunk_rows);
      fill(entry, accumulate_reader(reader, period_s, config.on_threshold_w), p.label);
    } catch (const Error& e) {
      if (e.is_io()) throw;
      entry.error = p.label + ": " + e.what();
    }
    report.appliances.push_back(std::move(entry));
  }
  compute_feac(report);
  return report;
}

// ------------------------------------------------------------ serialization

json to_json(const ApplianceMetrics& m) {
  return {{"label", m.label},
          {"n_pairs", m.n_pairs},
          {"f1", m.f1},
          {"precision", m.precision},
          {"recall", m.recall},
          {"error_total_energy_kwh", m.error_total_energy_kwh},
          {"mean_abs_error_w", m.mean_abs_error_w},
          {"rms_error_w", m.rms_error_w},
          {"estimated_kwh", m.estimated_kwh},
          {"true_kwh", m.true_kwh}};
}

json to_json(const BuildingReport& report) {
  json out = {{"building", report.building}};
  if (report.error) {
    out["status"] = "error";
    out["error"] = *report.error;
    return out;
  }
  out["status"] = "ok";
  json appliances = json::object();
  for (const auto& a : report.appliances) {
    const std::string key = "meter" + std::to_string(a.meter);
    appliances[key] = a.metrics ? to_json(*a.metrics) : json{{"error", *a.error}};
  }
  out["appliances"] = std::move(appliances);
  out["fraction_energy_assigned_correctly"] = report.feac ? json(*report.feac) : json(nullptr);
  if (report.feac_error) out["feac_error"] = *report.feac_error;
  out["summary"] = report.summary();
  return out;
}

json to_json(const MetricReport& report) {
  json buildings = json::array();
  for (const auto& b : report.buildings) buildings.push_back(to_json(b));
  json across = json::object();
  for (const auto& [name, a] : report.across_buildings) {
    across[name] = {{"mean", a.mean}, {"min", a.min}, {"max", a.max}, {"n_buildings", a.n}};
  }
  return {{"report_version", 1},
          {"run_id", report.run_id},
          {"buildings", std::move(buildings)},
          {"across_buildings", std::move(across)},
          {"energy_weighted", report.energy_weighted}};
}

namespace {

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace

std::string to_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "building,meter,label,n_pairs,f1,precision,recall,error_total_energy_kwh,"
         "mean_abs_error_w,rms_error_w,estimated_kwh,true_kwh,error\n";
  auto quoted = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  for (const auto& b : report.buildings) {
    if (b.error) {
      out << b.building << ",,,,,,,,,,,," << quoted(*b.error) << "\n";
      continue;
    }
    for (const auto& a : b.appliances) {
      out << b.building << "," << a.meter << ",";
      if (!a.metrics) {
        out << ",,,,,,,,,," << quoted(*a.error) << "\n";
        continue;
      }
      const auto& m = *a.metrics;
      out << m.label << "," << m.n_pairs << "," << fmt(m.f1, 6) << "," << fmt(m.precision, 6) << ","
          << fmt(m.recall, 6) << "," << fmt(m.error_total_energy_kwh, 6) << ","
          << fmt(m.mean_abs_error_w, 6) << "," << fmt(m.rms_error_w, 6) << ","
          << fmt(m.estimated_kwh, 6) << "," << fmt(m.true_kwh, 6) << ",\n";
    }
  }
  return out.str();
}

std::string render_tables(const MetricReport& report) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-9s %-6s %-16s %7s %7s %7s %12s %9s %9s\n", "building",
                "meter", "label", "f1", "prec", "recall", "dE_kwh", "mae_w", "rmse_w");
  out << line;
  for (const auto& b : report.buildings) {
    if (b.error) {
      out << std::to_string(b.building) << "  error: " << *b.error << "\n";
      continue;
    }
    for (const auto& a : b.appliances) {
      if (!a.metrics) {
        std::snprintf(line, sizeof line, "%-9d %-6d error: %s\n", b.building, a.meter,
                      a.error->c_str());
        out << line;
        continue;
      }
      const auto& m = *a.metrics;
      std::snprintf(line, sizeof line, "%-9d %-6d %-16s %7.4f %7.4f %7.4f %12.6f %9.3f %9.3f\n",
                    b.building, a.meter, m.label.substr(0, 16).c_str(), m.f1, m.precision,
                    m.recall, m.error_total_energy_kwh, m.mean_abs_error_w, m.rms_error_w);
      out << line;
    }
    if (b.feac) out << "  building " << b.building << " FEAC " << fmt(*b.feac) << "\n";
  }
  if (!report.across_buildings.empty()) {
    out << "\n";
    std::snprintf(line, sizeof line, "%-36s %12s %12s %12s %4s\n", "metric", "mean", "min", "max",
                  "n");
    out << line;
    for (const auto& [name, a] : report.across_buildings) {
      std::snprintf(line, sizeof line, "%-36s %12.6f %12.6f %12.6f %4zu\n", name.c_str(), a.mean,
                    a.min, a.max, a.n);
      out << line;
    }
  }
  return out.str();
}

}  // namespace nilm

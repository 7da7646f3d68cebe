#include "nilm/stats.hpp"

#include <algorithm>
#include <cmath>

#include "nilm/log.hpp"

namespace nilm {

Chunk clip(Chunk chunk, double max_power_w, ClipResult* counts) {
  if (!(max_power_w > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "clip needs a positive max_power_w");
  }
  std::uint64_t dropped = 0, clamped = 0;
  auto& s = chunk.samples;
  std::size_t out = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    Sample v = s[i];
    if (std::isnan(v.power)) {
      ++dropped;
      continue;
    }
    if (v.power < 0.0 || v.power > max_power_w) {
      v.power = std::clamp(v.power, 0.0, max_power_w);
      ++clamped;
    }
    s[out++] = v;
  }
  s.resize(out);
  if (counts) {
    counts->dropped_nan += dropped;
    counts->clamped += clamped;
  }
  return chunk;
}

// --------------------------------------------------------------------- nodes

ClipNode::ClipNode(double max_power_w)
    : Node({"clip", {}, {{requirement::clipped, "true"}}}), max_power_w_(max_power_w) {}

void ClipNode::transform(Chunk& chunk) {
  last_ = ClipResult{};
  last_.coverage.add(chunk.frame);
  chunk = clip(std::move(chunk), max_power_w_, &last_);
}

std::optional<AnyResult> ClipNode::accumulate(const Chunk&) { return last_; }

TotalEnergyNode::TotalEnergyNode(double sample_period_s, double max_sample_period_s)
    : Node({"total_energy",
            {{requirement::clipped}, {requirement::sorted_timestamps},
             {requirement::sample_period_known}},
            {}}),
      sample_period_s_(sample_period_s),
      max_sample_period_s_(max_sample_period_s) {}

std::shared_ptr<TotalEnergyNode> TotalEnergyNode::for_meter(const ElecMeterMeta& meta) {
  return std::make_shared<TotalEnergyNode>(meta.sample_period_s, meta.max_sample_period_s);
}

std::optional<AnyResult> TotalEnergyNode::accumulate(const Chunk& chunk) {
  return EnergyResult::from_chunk(chunk, sample_period_s_, max_sample_period_s_);
}

std::optional<AnyResult> TotalEnergyNode::empty_result() const {
  EnergyResult r;
  r.sample_period_s = sample_period_s_;
  r.max_sample_period_s = max_sample_period_s_;
  return r;
}

GoodSectionsNode::GoodSectionsNode(double max_sample_period_s)
    : Node({"good_sections",
            {{requirement::sorted_timestamps}},
            {{requirement::gaps_located, "true"}}}),
      max_sample_period_s_(max_sample_period_s) {}

std::optional<AnyResult> GoodSectionsNode::accumulate(const Chunk& chunk) {
  return GoodSectionsResult::from_chunk(chunk, max_sample_period_s_);
}

std::optional<AnyResult> GoodSectionsNode::empty_result() const {
  GoodSectionsResult r;
  r.max_sample_period_s = max_sample_period_s_;
  return r;
}

DropoutRateNode::DropoutRateNode(double sample_period_s)
    : Node({"dropout_rate",
            {{requirement::sorted_timestamps}, {requirement::sample_period_known}},
            {}}),
      sample_period_s_(sample_period_s) {}

std::optional<AnyResult> DropoutRateNode::accumulate(const Chunk& chunk) {
  return DropoutResult::from_chunk(chunk, sample_period_s_);
}

std::optional<AnyResult> DropoutRateNode::empty_result() const {
  DropoutResult r;
  r.sample_period_s = sample_period_s_;
  return r;
}

HourlyNode::HourlyNode(std::string timezone, double max_power_w)
    : Node({"hourly", {{requirement::clipped}}, {}}),
      timezone_(std::move(timezone)),
      max_power_w_(max_power_w) {}

std::optional<AnyResult> HourlyNode::accumulate(const Chunk& chunk) {
  return HourlyResult::from_chunk(chunk, timezone_, max_power_w_);
}

std::optional<AnyResult> HourlyNode::empty_result() const {
  return HourlyResult::make(timezone_, max_power_w_);
}

HistogramNode::HistogramNode(double bin_width_w)
    : Node({"histogram", {{requirement::clipped}}, {}}), bin_width_w_(bin_width_w) {
  if (!(bin_width_w > 0.0)) throw Error(ErrorCode::invalid_argument, "bin width must be positive");
}

std::optional<AnyResult> HistogramNode::accumulate(const Chunk& chunk) {
  return histogram_of(chunk, bin_width_w_, false);
}

std::optional<AnyResult> HistogramNode::empty_result() const {
  HistogramResult r;
  r.bin_width_w = bin_width_w_;
  r.round_to_nearest = false;
  return r;
}

ValueCountsNode::ValueCountsNode() : Node({"value_counts", {{requirement::clipped}}, {}}) {}

std::optional<AnyResult> ValueCountsNode::accumulate(const Chunk& chunk) {
  return ValueCountsResult::from_chunk(chunk);
}

// ---------------------------------------------------------- chunk helpers

HistogramResult histogram_of(const Chunk& chunk, double bin_width_w, bool round_to_nearest,
                             double max_power_w) {
  HistogramResult r;
  r.bin_width_w = bin_width_w;
  r.round_to_nearest = round_to_nearest;
  r.max_power_w = max_power_w;
  r.coverage.add(chunk.frame);
  for (const auto& s : chunk.samples) r.add(s.power);
  return r;
}

PairStatsResult pair_stats_of(const AlignedChunk& chunk, std::size_t column_a,
                              std::size_t column_b) {
  PairStatsResult r;
  r.coverage.add(chunk.frame);
  for (std::size_t i = 0; i < chunk.rows(); ++i) r.add(chunk.at(i, column_a), chunk.at(i, column_b));
  return r;
}

SwitchesResult switches_of(const AlignedChunk& chunk, double on_threshold_w) {
  SwitchesResult r(chunk.width);
  r.coverage.add(chunk.frame);
  std::vector<bool> state(chunk.width);
  for (std::size_t i = 0; i < chunk.rows(); ++i) {
    for (std::size_t c = 0; c < chunk.width; ++c) state[c] = chunk.at(i, c) > on_threshold_w;
    r.add_bucket(chunk.bins[i], state);
  }
  return r;
}

// ------------------------------------------------------- meter statistics

namespace {

PipelineSource meter_source(const MeterGroup& group, const StatOptions& options,
                            std::optional<double> period_s) {
  PipelineSource source{group, {}, period_s};
  source.load.chunk_rows = options.chunk_rows;
  source.load.look_ahead_rows = options.look_ahead_rows;
  if (group.size() > 1 && !source.period_s) source.period_s = coarsest_sample_period(group);
  return source;
}

const std::string& timezone_of(const MeterGroup& group) {
  return group[0].dataset().metadata().building(group[0].building()).timezone;
}

}  // namespace

double coarsest_sample_period(const MeterGroup& group) {
  double period = 0.0;
  for (const auto& m : group) period = std::max(period, m.meta().sample_period_s);
  return period;
}

EnergyResult meter_energy(const ElecMeter& meter, const StatOptions& options) {
  PipelineSpec p{meter_source(meter, options, std::nullopt), {}, std::nullopt};
  p.then(std::make_shared<ClipNode>(options.max_power_w)).then(TotalEnergyNode::for_meter(meter.meta()));
  return run(p).get<EnergyResult>("total_energy");
}

GoodSectionsResult good_sections(const ElecMeter& meter, const StatOptions& options) {
  PipelineSpec p{meter_source(meter, options, std::nullopt), {}, std::nullopt};
  p.then(std::make_shared<GoodSectionsNode>(meter.meta().max_sample_period_s));
  return run(p).get<GoodSectionsResult>("good_sections");
}

DropoutResult dropout(const ElecMeter& meter, const StatOptions& options) {
  PipelineSpec p{meter_source(meter, options, std::nullopt), {}, std::nullopt};
  p.then(std::make_shared<DropoutRateNode>(meter.meta().sample_period_s));
  return run(p).get<DropoutResult>("dropout_rate");
}

std::optional<double> dropout_rate(const ElecMeter& meter, const StatOptions& options) {
  return dropout(meter, options).rate();
}

HourlyResult hourly(const MeterGroup& group, const StatOptions& options,
                    std::optional<double> period_s) {
  PipelineSpec p{meter_source(group, options, period_s), {}, std::nullopt};
  p.then(std::make_shared<ClipNode>(options.max_power_w))
      .then(std::make_shared<HourlyNode>(timezone_of(group), options.max_power_w));
  return run(p).get<HourlyResult>("hourly");
}

std::array<std::optional<double>, 24> hourly_stat(const MeterGroup& group, HourlyStatistic statistic,
                                                  const StatOptions& options,
                                                  std::optional<double> period_s) {
  const HourlyResult r = hourly(group, options, period_s);
  return statistic == HourlyStatistic::median ? r.medians() : r.means();
}

double entropy(const MeterGroup& group, double bin_width_w, const StatOptions& options,
               std::optional<double> period_s) {
  PipelineSpec p{meter_source(group, options, period_s), {}, std::nullopt};
  p.then(std::make_shared<ClipNode>(options.max_power_w))
      .then(std::make_shared<HistogramNode>(bin_width_w));
  const HistogramResult h = run(p).get<HistogramResult>("histogram");
  if (h.total == 0) throw Error(ErrorCode::undefined_statistic, "entropy of an empty stream");
  return h.entropy_bits();
}

std::map<std::string, double> energy_per_category(const MeterGroup& building_group,
                                                  const Vocabulary& vocabulary,
                                                  const StatOptions& options) {
  std::map<std::string, double> out;
  std::map<StreamKey, double> cache;
  for (const auto& category : vocabulary.categories()) {
    const MeterGroup members = select(building_group, SelectionQuery().where("category", category),
                                      vocabulary);
    if (members.empty()) continue;
    double kwh = 0.0;
    for (const auto& m : members) {
      auto it = cache.find(m.key());
      if (it == cache.end()) it = cache.emplace(m.key(), meter_energy(m, options).kwh()).first;
      kwh += it->second;
    }
    out[category] = kwh;
  }
  return out;
}

SwitchesResult simultaneous_switches(const MeterGroup& group, double on_threshold_w,
                                     double bucket_s, std::size_t chunk_rows) {
  AlignedReader reader(group, chunk_rows, bucket_s);
  SwitchesResult total(group.size());
  while (auto chunk = reader.next()) total.merge_from(switches_of(*chunk, on_threshold_w));
  return total;
}

PairStatsResult pair_stats(const ElecMeter& a, const ElecMeter& b, double period_s,
                           std::size_t chunk_rows) {
  const bool same = a == b;
  const MeterGroup group = same ? MeterGroup(a) : MeterGroup({a, b});
  AlignedReader reader(group, chunk_rows, period_s);
  PairStatsResult total;
  while (auto chunk = reader.next()) total.merge_from(pair_stats_of(*chunk, 0, same ? 0 : 1));
  return total;
}

double correlation(const ElecMeter& a, const ElecMeter& b, double period_s,
                   std::size_t chunk_rows) {
  return pair_stats(a, b, period_s, chunk_rows).correlation();
}

// ------------------------------------------------------------ group energy

GroupEnergy total_energy(const MeterGroup& group, std::size_t chunk_rows) {
  GroupEnergy out;
  std::vector<ElecMeter> ordered(group.begin(), group.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const ElecMeter& x, const ElecMeter& y) {
    return x.key() < y.key();
  });
  StatOptions options;
  options.chunk_rows = chunk_rows;
  double total = 0.0;
  for (const auto& m : ordered) {
    EnergyResult e = meter_energy(m, options);
    if (e.n_samples == 0) {
      out.empty_streams.push_back(m.label());
      warn(m.label() + ": empty stream, energy counted as zero");
    }
    total += e.kwh();
    out.per_meter.emplace_back(m.key(), std::move(e));
  }
  out.total_kwh = total;
  return out;
}

SubmeteredFraction proportion_of_energy_submetered(const MeterGroup& building_group,
                                                   std::size_t chunk_rows) {
  const double mains_kwh = total_energy(mains(building_group), chunk_rows).total_kwh;
  if (!(mains_kwh > 0.0)) {
    throw Error(ErrorCode::undefined_statistic,
                "energy submetered is undefined when mains energy is zero");
  }
  const MeterGroup subs = submeters(building_group);
  const double sub_kwh = subs.empty() ? 0.0 : total_energy(subs, chunk_rows).total_kwh;
  SubmeteredFraction out;
  out.raw_ratio = sub_kwh / mains_kwh;
  out.fraction = std::clamp(out.raw_ratio, 0.0, 1.0);
  out.clamped = out.raw_ratio > 1.0;
  if (out.clamped) {
    warn("submetered energy exceeds mains energy (ratio " + std::to_string(out.raw_ratio) +
         "); clamped to 1");
  }
  return out;
}

}  // namespace nilm

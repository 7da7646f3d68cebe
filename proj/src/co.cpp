#include "nilm/co.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "nilm/stats.hpp"

namespace nilm {

std::uint64_t COModel::combinations() const {
  std::uint64_t product = 1;
  for (const auto& a : appliances) {
    const std::uint64_t n = a.states.size();
    if (n != 0 && product > std::numeric_limits<std::uint64_t>::max() / n) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    product *= n;
  }
  return product;
}

void COModel::validate() const {
  if (!(sample_period_s > 0.0) || !std::isfinite(sample_period_s)) {
    throw Error(ErrorCode::training, "model sample_period_s must be positive");
  }
  for (const auto& a : appliances) {
    const std::string who = "appliance '" + a.label + "' (meter " + std::to_string(a.meter_instance) + ")";
    if (a.states.empty()) throw Error(ErrorCode::training, who + " has no states");
    if (a.states[0] != 0.0) throw Error(ErrorCode::training, who + ": states[0] must be 0");
    for (std::size_t i = 0; i < a.states.size(); ++i) {
      if (!std::isfinite(a.states[i]) || a.states[i] < 0.0) {
        throw Error(ErrorCode::training, who + " has a negative or non-finite state");
      }
      if (i > 0 && !(a.states[i] > a.states[i - 1])) {
        throw Error(ErrorCode::training, who + ": states must be strictly ascending");
      }
    }
  }
}

// ------------------------------------------------------------------ training

namespace {

struct Cluster {
  double centroid;
  double weight;
};

// Nearest-rank quantile of the expanded multiset described by `values`.
double quantile(const std::vector<std::pair<double, std::uint64_t>>& values, std::uint64_t n,
                double q) {
  const auto rank = static_cast<std::uint64_t>(std::floor(q * static_cast<double>(n - 1)));
  std::uint64_t seen = 0;
  for (const auto& [v, c] : values) {
    seen += c;
    if (rank < seen) return v;
  }
  return values.back().first;
}

}  // namespace

std::vector<double> cluster_states(const std::map<double, std::uint64_t>& value_counts,
                                   const TrainConfig& config) {
  if (config.k_max == 0) throw Error(ErrorCode::invalid_argument, "K_max must be at least 1");
  std::vector<std::pair<double, std::uint64_t>> values;
  std::uint64_t n = 0;
  for (const auto& [v, c] : value_counts) {
    if (v > 0.0 && c > 0) {
      values.emplace_back(v, c);
      n += c;
    }
  }
  if (values.empty() || config.k_max == 1) return {0.0};

  static constexpr double kInitQuantiles[] = {0.25, 0.50, 0.75};
  std::vector<double> centroids;
  for (std::size_t k = 0; k < config.k_max; ++k) {
    const double q = config.k_max == 3 ? kInitQuantiles[k]
                                       : static_cast<double>(k + 1) / static_cast<double>(config.k_max + 1);
    centroids.push_back(quantile(values, n, q));
  }

  std::vector<double> sums(centroids.size()), weights(centroids.size());
  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(weights.begin(), weights.end(), 0.0);
    for (const auto& [v, c] : values) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < centroids.size(); ++k) {
        if (std::abs(v - centroids[k]) < std::abs(v - centroids[best])) best = k;
      }
      sums[best] += v * static_cast<double>(c);
      weights[best] += static_cast<double>(c);
    }
    for (std::size_t k = 0; k < centroids.size(); ++k) {
      if (weights[k] > 0.0) centroids[k] = sums[k] / weights[k];
    }
  }

  std::vector<Cluster> clusters;
  for (std::size_t k = 0; k < centroids.size(); ++k) {
    if (weights[k] > 0.0 && centroids[k] >= config.min_state_w) {
      clusters.push_back({centroids[k], weights[k]});
    }
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const Cluster& a, const Cluster& b) { return a.centroid < b.centroid; });

  auto merge_at = [&clusters](std::size_t i) {
    Cluster& a = clusters[i];
    const Cluster& b = clusters[i + 1];
    a.centroid = (a.centroid * a.weight + b.centroid * b.weight) / (a.weight + b.weight);
    a.weight += b.weight;
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(i) + 1);
  };
  for (std::size_t i = 0; i + 1 < clusters.size();) {
    if (clusters[i + 1].centroid - clusters[i].centroid <= config.merge_within_w) {
      merge_at(i);
    } else {
      ++i;
    }
  }
  // With the zero state included an appliance keeps at most k_max states.
  while (clusters.size() + 1 > config.k_max) {
    std::size_t closest = 0;
    for (std::size_t i = 1; i + 1 < clusters.size(); ++i) {
      if (clusters[i + 1].centroid - clusters[i].centroid <
          clusters[closest + 1].centroid - clusters[closest].centroid) {
        closest = i;
      }
    }
    merge_at(closest);
  }

  std::vector<double> states{0.0};
  for (const auto& c : clusters) states.push_back(c.centroid);
  return states;
}

COModel train(const MeterGroup& submeters, const TimeFrame& timeframe, const TrainConfig& config) {
  if (submeters.empty()) throw Error(ErrorCode::training, "no submeters to train on");
  COModel model;
  model.dataset = submeters[0].dataset().metadata().name;
  model.building = submeters[0].building();
  model.train_timeframe = timeframe;
  model.sample_period_s = coarsest_sample_period(submeters);

  for (const auto& meter : submeters) {
    if (meter.building() != model.building) {
      throw Error(ErrorCode::scope, "training submeters must come from one building");
    }
    PipelineSource source{meter, {}, std::nullopt};
    source.load.chunk_rows = config.chunk_rows;
    source.load.sections = std::vector<TimeFrame>{timeframe};
    PipelineSpec p{source, {}, std::nullopt};
    auto counts = std::make_shared<ValueCountsNode>();
    counts->require(requirement::gaps_located);
    p.then(std::make_shared<ClipNode>(config.max_power_w))
        .then(std::make_shared<GoodSectionsNode>(meter.meta().max_sample_period_s))
        .then(counts);
    const ValueCountsResult values = run(p).get<ValueCountsResult>("value_counts");
    if (values.total < config.min_samples) {
      throw Error(ErrorCode::training,
                  meter.label() + " has " + std::to_string(values.total) +
                      " samples in the training timeframe; at least " +
                      std::to_string(config.min_samples) + " are needed");
    }
    ApplianceModel a;
    a.meter_instance = meter.instance();
    a.label = meter.meta().appliances.empty() ? "meter" + std::to_string(meter.instance())
                                              : meter.meta().appliances.front().type;
    a.states = cluster_states(values.counts, config);
    model.appliances.push_back(std::move(a));
  }

  const std::uint64_t combos = model.combinations();
  if (combos > config.combination_limit) {
    throw Error(ErrorCode::capacity,
                "model has " + std::to_string(combos) + " state combinations, above the limit of " +
                    std::to_string(config.combination_limit) +
                    "; lower K_max or train on fewer appliances");
  }
  model.validate();
  return model;
}

// ----------------------------------------------------------- disaggregation

CombinationTable::CombinationTable(const COModel& model) {
  const std::uint64_t combos = model.combinations();
  if (combos > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::capacity, "too many state combinations to enumerate");
  }
  totals_.reserve(combos);
  totals_.push_back(0.0);
  for (const auto& a : model.appliances) {
    radix_.push_back(a.states.size());
    std::vector<double> next;
    next.reserve(totals_.size() * a.states.size());
    for (double prefix : totals_) {
      for (double s : a.states) next.push_back(prefix + s);
    }
    totals_ = std::move(next);
  }
}

std::size_t CombinationTable::best(double y) const {
  if (!(y > 0.0)) y = 0.0;
  std::size_t best = 0;
  double best_residual = std::abs(y - totals_[0]);
  for (std::size_t i = 1; i < totals_.size(); ++i) {
    const double r = std::abs(y - totals_[i]);
    if (r < best_residual || (r == best_residual && totals_[i] < totals_[best])) {
      best = i;
      best_residual = r;
    }
  }
  return best;
}

std::vector<std::size_t> CombinationTable::decode(std::size_t combination) const {
  std::vector<std::size_t> out(radix_.size());
  for (std::size_t n = radix_.size(); n-- > 0;) {
    out[n] = combination % radix_[n];
    combination /= radix_[n];
  }
  return out;
}

std::vector<std::size_t> disaggregate_sample(double y, const COModel& model) {
  const CombinationTable table(model);
  return table.decode(table.best(y));
}

DisaggregateSummary disaggregate(const MeterGroup& mains, const COModel& model, Dataset& out,
                                 const std::string& run_id, const DisaggregateOptions& options) {
  if (mains.empty()) throw Error(ErrorCode::configuration, "no mains meters to disaggregate");
  if (run_id.empty()) throw Error(ErrorCode::invalid_argument, "run id must not be empty");
  model.validate();
  const CombinationTable table(model);
  const std::size_t n = model.appliances.size();

  DisaggregateSummary summary;
  for (const auto& a : model.appliances) {
    summary.streams.push_back(StreamKey::estimate(mains[0].building(), a.meter_instance, run_id));
    out.create_stream(summary.streams.back());
  }

  const double period = std::max(model.sample_period_s, coarsest_sample_period(mains));
  SummedReader reader = load_summed(mains, options.chunk_rows, period, options.sections);
  std::vector<std::size_t> state(n);
  std::optional<TimeFrame> last_durable;
  try {
    while (auto chunk = reader.next()) {
      std::vector<Chunk> estimates;
      estimates.reserve(n);
      for (std::size_t a = 0; a < n; ++a) {
        Chunk e(chunk->frame, {});
        e.samples.reserve(chunk->samples.size());
        e.residency = ResidencyToken(out.residency(), summary.streams[a].label(),
                                     chunk->samples.size());
        estimates.push_back(std::move(e));
      }
      for (const auto& s : chunk->samples) {
        std::size_t combo = table.best(s.power);
        for (std::size_t a = n; a-- > 0;) {
          const std::size_t radix = model.appliances[a].states.size();
          state[a] = combo % radix;
          combo /= radix;
        }
        for (std::size_t a = 0; a < n; ++a) {
          estimates[a].samples.push_back({s.timestamp, model.appliances[a].states[state[a]]});
        }
      }
      for (std::size_t a = 0; a < n; ++a) out.append(summary.streams[a], estimates[a]);
      last_durable = chunk->frame;
      ++summary.chunks;
      summary.rows += chunk->samples.size();
      if (options.progress) options.progress(chunk->frame, chunk->samples.size());
    }
  } catch (const Error& e) {
    std::string where = last_durable ? "last durable chunk ends " + to_iso8601(last_durable->end())
                                     : "no chunk was written";
    throw Error(e.code(), std::string(e.what()) + " (" + where + ")");
  }
  for (const auto& key : summary.streams) out.finalize(key);
  return summary;
}

// --------------------------------------------------------------- model files

json to_json(const COModel& model) {
  json appliances = json::array();
  for (const auto& a : model.appliances) {
    appliances.push_back({{"meter_instance", a.meter_instance}, {"label", a.label}, {"states", a.states}});
  }
  return {{"model_version", kModelVersion},
          {"trained_on", {{"dataset", model.dataset}, {"building", model.building}}},
          {"train_timeframe",
           {{"start", model.train_timeframe.start()}, {"end", model.train_timeframe.end()}}},
          {"sample_period_s", model.sample_period_s},
          {"appliances", std::move(appliances)}};
}

COModel model_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("model_version")) {
    throw Error(ErrorCode::parse, "model file is not an object with model_version");
  }
  if (doc.at("model_version") != kModelVersion) {
    throw Error(ErrorCode::format_version, "unsupported model_version " +
                                               doc.at("model_version").dump() + " (expected " +
                                               std::to_string(kModelVersion) + ")");
  }
  COModel m;
  try {
    const auto& on = doc.at("trained_on");
    m.dataset = on.at("dataset").get<std::string>();
    m.building = on.at("building").get<int>();
    const auto& tf = doc.at("train_timeframe");
    m.train_timeframe = TimeFrame(tf.at("start").get<double>(), tf.at("end").get<double>());
    m.sample_period_s = doc.at("sample_period_s").get<double>();
    for (const auto& a : doc.at("appliances")) {
      m.appliances.push_back({a.at("meter_instance").get<int>(), a.at("label").get<std::string>(),
                              a.at("states").get<std::vector<double>>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("model schema violation: ") + e.what());
  }
  m.validate();
  return m;
}

void save_model(const COModel& model, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::io, "cannot write model file " + path.string());
  f << to_json(model).dump(2) << '\n';
  if (!f.flush()) throw Error(ErrorCode::io, "failed writing model file " + path.string());
}

COModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot read model file " + path.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, path.string() + ": model schema violation: " + e.what());
  }
  try {
    return model_from_json(doc);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace nilm

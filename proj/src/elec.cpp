#include "nilm/elec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nilm/errors.hpp"

namespace nilm {

// ----------------------------------------------------------------- ElecMeter

ElecMeter::ElecMeter(const Dataset& dataset, int building, int instance)
    : ElecMeter(dataset, dataset.metadata().building(building).meter(instance),
                StreamKey::raw(building, instance)) {}

ElecMeter::ElecMeter(const Dataset& dataset, ElecMeterMeta meta, StreamKey key)
    : dataset_(&dataset), meta_(std::move(meta)), key_(std::move(key)) {}

ElecMeter ElecMeter::estimate(const Dataset& dataset, int building, int instance,
                              const std::string& run_id) {
  return ElecMeter(dataset, dataset.metadata().building(building).meter(instance),
                   StreamKey::estimate(building, instance, run_id));
}

ChunkReader ElecMeter::load(const LoadOptions& options) const {
  return dataset_->load(key_, options);
}

// ---------------------------------------------------------------- MeterGroup

MeterGroup::MeterGroup(std::vector<ElecMeter> meters) : meters_(std::move(meters)) {
  for (std::size_t i = 0; i < meters_.size(); ++i) {
    if (&meters_[i].dataset() != &meters_[0].dataset()) {
      throw Error(ErrorCode::scope, "a meter group cannot span datasets");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (meters_[i] == meters_[j]) {
        throw Error(ErrorCode::invalid_argument, "duplicate meter " + meters_[i].label());
      }
    }
  }
}

MeterGroup::MeterGroup(const ElecMeter& meter) : meters_{meter} {}

MeterGroup MeterGroup::building(const Dataset& dataset, int building) {
  std::vector<ElecMeter> meters;
  auto meta = dataset.metadata().building(building).meters;
  std::sort(meta.begin(), meta.end(),
            [](const ElecMeterMeta& a, const ElecMeterMeta& b) { return a.instance < b.instance; });
  for (const auto& m : meta) meters.emplace_back(dataset, building, m.instance);
  return MeterGroup(std::move(meters));
}

MeterGroup MeterGroup::united(const MeterGroup& other) const {
  std::vector<ElecMeter> out = meters_;
  for (const auto& m : other) {
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return MeterGroup(std::move(out));
}

std::vector<int> MeterGroup::instances() const {
  std::vector<int> out;
  for (const auto& m : meters_) out.push_back(m.instance());
  return out;
}

// ------------------------------------------------------------------ Selection

const std::vector<std::string>& SelectionQuery::valid_paths() {
  static const std::vector<std::string> paths = {"type",       "category", "device_model",
                                                 "site_meter", "building", "instance"};
  return paths;
}

void SelectionQuery::add(Predicate predicate) {
  const auto& paths = valid_paths();
  if (std::find(paths.begin(), paths.end(), predicate.path) == paths.end()) {
    std::string list;
    for (const auto& p : paths) list += (list.empty() ? "" : ", ") + p;
    throw Error(ErrorCode::query,
                "unknown selection property '" + predicate.path + "'; valid paths: " + list);
  }
  if (predicate.values.empty()) {
    throw Error(ErrorCode::query, "selection on '" + predicate.path + "' has no value");
  }
  predicates_.push_back(std::move(predicate));
}

SelectionQuery& SelectionQuery::where(const std::string& path, const std::string& value) {
  add({path, Predicate::Op::eq, {value}});
  return *this;
}

SelectionQuery& SelectionQuery::where_in(const std::string& path,
                                         std::vector<std::string> values) {
  add({path, Predicate::Op::in, std::move(values)});
  return *this;
}

SelectionQuery SelectionQuery::parse(const std::string& text) {
  SelectionQuery q;
  std::stringstream terms(text);
  std::string term;
  while (std::getline(terms, term, ',')) {
    if (term.empty()) continue;
    const auto eq = term.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::query, "selection term '" + term + "' is not of the form key=value");
    }
    const std::string path = term.substr(0, eq);
    std::vector<std::string> values;
    std::stringstream alternatives(term.substr(eq + 1));
    std::string v;
    while (std::getline(alternatives, v, '|')) values.push_back(v);
    if (values.size() > 1) {
      q.where_in(path, std::move(values));
    } else {
      q.add({path, Predicate::Op::eq, std::move(values)});
    }
  }
  return q;
}

std::string SelectionQuery::to_string() const {
  std::string out;
  for (const auto& p : predicates_) {
    if (!out.empty()) out += ',';
    out += p.path + '=';
    for (std::size_t i = 0; i < p.values.size(); ++i) out += (i ? "|" : "") + p.values[i];
  }
  return out;
}

namespace {

bool matches(const Predicate& p, const std::string& value) {
  return std::find(p.values.begin(), p.values.end(), value) != p.values.end();
}

bool is_appliance_path(const std::string& path) { return path == "type" || path == "category"; }

bool meter_matches(const ElecMeter& meter, const Predicate& p) {
  const auto& m = meter.meta();
  if (p.path == "device_model") return matches(p, m.device_model);
  if (p.path == "site_meter") return matches(p, m.site_meter ? "true" : "false");
  if (p.path == "building") return matches(p, std::to_string(meter.building()));
  if (p.path == "instance") return matches(p, std::to_string(meter.instance()));
  return false;
}

bool appliance_matches(const ApplianceRef& a, const Predicate& p, const Vocabulary& vocabulary) {
  if (p.path == "type") return matches(p, a.type);
  const auto& cats = vocabulary.categories_of(a.type);
  return std::any_of(cats.begin(), cats.end(), [&](const std::string& c) { return matches(p, c); });
}

const BuildingMeta& single_building(const MeterGroup& group) {
  if (group.empty()) {
    throw Error(ErrorCode::scope, "an empty group has no building");
  }
  const int b = group[0].building();
  for (const auto& m : group) {
    if (m.building() != b) {
      throw Error(ErrorCode::scope, "operation requires a group within one building");
    }
  }
  return group[0].dataset().metadata().building(b);
}

}  // namespace

MeterGroup select(const MeterGroup& group, const SelectionQuery& query,
                  const Vocabulary& vocabulary) {
  std::vector<ElecMeter> out;
  for (const auto& meter : group) {
    bool ok = true;
    bool needs_appliance = false;
    for (const auto& p : query.predicates()) {
      if (is_appliance_path(p.path)) {
        needs_appliance = true;
      } else if (!meter_matches(meter, p)) {
        ok = false;
        break;
      }
    }
    if (ok && needs_appliance) {
      ok = std::any_of(meter.meta().appliances.begin(), meter.meta().appliances.end(),
                       [&](const ApplianceRef& a) {
                         return std::all_of(query.predicates().begin(), query.predicates().end(),
                                            [&](const Predicate& p) {
                                              return !is_appliance_path(p.path) ||
                                                     appliance_matches(a, p, vocabulary);
                                            });
                       });
    }
    if (ok) out.push_back(meter);
  }
  return MeterGroup(std::move(out));
}

MeterGroup mains(const MeterGroup& group) {
  single_building(group);
  std::vector<ElecMeter> out;
  for (const auto& m : group) {
    if (m.meta().site_meter) out.push_back(m);
  }
  return MeterGroup(std::move(out));
}

MeterGroup submeters(const MeterGroup& group) {
  const BuildingMeta& building = single_building(group);
  std::vector<ElecMeter> out;
  for (const auto& m : group) {
    if (!m.meta().submeter_of) continue;
    const ElecMeterMeta* parent = building.find_meter(*m.meta().submeter_of);
    if (parent && parent->site_meter) out.push_back(m);
  }
  return MeterGroup(std::move(out));
}

// ----------------------------------------------------------------- Resampler

Resampler::Resampler(SampleCursor cursor, double period_s, double max_sample_period_s)
    : cursor_(std::move(cursor)), period_s_(period_s), max_sample_period_s_(max_sample_period_s) {}

std::int64_t Resampler::bin_of(Timestamp t) const {
  // The epsilon absorbs representation error of grid timestamps such as
  // 0.3 / 0.1.
  return static_cast<std::int64_t>(std::floor(t / period_s_ + 1e-9));
}

std::optional<double> Resampler::value_at(std::int64_t bin) {
  double sum = 0.0;
  std::size_t count = 0;
  for (;;) {
    if (!peeked_ && !exhausted_) {
      peeked_ = cursor_.next();
      exhausted_ = !peeked_;
    }
    if (!peeked_) break;
    const std::int64_t b = bin_of(peeked_->timestamp);
    if (b > bin) break;
    if (b == bin) {
      sum += peeked_->power;
      ++count;
    }
    last_ = peeked_;
    peeked_.reset();
  }
  if (count > 0) return sum / static_cast<double>(count);
  if (last_ && static_cast<double>(bin) * period_s_ - last_->timestamp < max_sample_period_s_) {
    return last_->power;
  }
  return std::nullopt;
}

std::optional<std::int64_t> Resampler::earliest_candidate(std::int64_t bin) {
  if (!peeked_ && !exhausted_) {
    peeked_ = cursor_.next();
    exhausted_ = !peeked_;
  }
  if (last_ && static_cast<double>(bin) * period_s_ - last_->timestamp < max_sample_period_s_) {
    return bin;
  }
  if (peeked_) return std::max(bin, bin_of(peeked_->timestamp));
  return std::nullopt;
}

// ------------------------------------------------------------- AlignedCursor

AlignedCursor::AlignedCursor(const MeterGroup& group, double period_s,
                             std::optional<std::vector<TimeFrame>> sections)
    : period_s_(period_s) {
  if (group.empty()) throw Error(ErrorCode::invalid_argument, "cannot align an empty group");
  if (!(period_s > 0.0)) throw Error(ErrorCode::invalid_argument, "period_s must be positive");
  for (const auto& m : group) {
    resamplers_.emplace_back(m.dataset().cursor(m.key(), sections), period_s,
                             m.meta().max_sample_period_s);
  }
}

AlignedCursor::AlignedCursor(std::vector<Resampler> resamplers, double period_s)
    : resamplers_(std::move(resamplers)), period_s_(period_s) {
  if (resamplers_.empty()) throw Error(ErrorCode::invalid_argument, "cannot align zero streams");
  if (!(period_s > 0.0)) throw Error(ErrorCode::invalid_argument, "period_s must be positive");
}

std::optional<std::int64_t> AlignedCursor::next(std::vector<double>& values) {
  values.resize(resamplers_.size());
  if (exhausted_) return std::nullopt;
  std::int64_t candidate =
      bin_ ? *bin_ + 1 : std::numeric_limits<std::int64_t>::min() / 4;
  for (;;) {
    // Raise the candidate until every resampler could hold a value there.
    bool moved = true;
    while (moved) {
      moved = false;
      for (auto& r : resamplers_) {
        auto c = r.earliest_candidate(candidate);
        if (!c) {
          exhausted_ = true;
          return std::nullopt;
        }
        if (*c > candidate) {
          candidate = *c;
          moved = true;
        }
      }
    }
    bool complete = true;
    for (std::size_t i = 0; i < resamplers_.size(); ++i) {
      auto v = resamplers_[i].value_at(candidate);
      if (!v) {
        complete = false;
      } else {
        values[i] = *v;
      }
    }
    if (complete) {
      bin_ = candidate;
      return candidate;
    }
    ++candidate;
  }
}

// ------------------------------------------------------------- AlignedReader

namespace {

std::string group_label(const MeterGroup& group) {
  std::string label = "aligned:";
  for (std::size_t i = 0; i < group.size(); ++i) label += (i ? "+" : "") + group[i].label();
  return label;
}

}  // namespace

AlignedReader::AlignedReader(const MeterGroup& group, std::size_t chunk_rows, double period_s,
                             std::optional<std::vector<TimeFrame>> sections)
    : cursor_(group, period_s, std::move(sections)),
      chunk_rows_(chunk_rows),
      tracker_(group[0].dataset().residency()),
      label_(group_label(group)) {
  if (chunk_rows < 1) throw Error(ErrorCode::invalid_argument, "chunk_rows must be at least 1");
}

AlignedReader::AlignedReader(AlignedCursor cursor, std::size_t chunk_rows,
                             std::shared_ptr<ResidencyTracker> tracker, std::string label)
    : cursor_(std::move(cursor)),
      chunk_rows_(chunk_rows),
      tracker_(std::move(tracker)),
      label_(std::move(label)) {
  if (chunk_rows < 1) throw Error(ErrorCode::invalid_argument, "chunk_rows must be at least 1");
}

std::optional<AlignedChunk> AlignedReader::next() {
  std::vector<Timestamp> timestamps;
  std::vector<std::int64_t> bins;
  std::vector<double> values;
  std::vector<double> row;
  const double period = cursor_.period_s();
  while (timestamps.size() < chunk_rows_) {
    auto bin = cursor_.next(row);
    if (!bin) break;
    bins.push_back(*bin);
    timestamps.push_back(static_cast<double>(*bin) * period);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (timestamps.empty()) return std::nullopt;
  AlignedChunk chunk{TimeFrame(timestamps.front(), timestamps.back() + period),
                     cursor_.width(),
                     std::move(timestamps),
                     std::move(bins),
                     std::move(values),
                     {}};
  chunk.residency = ResidencyToken(tracker_, label_, chunk.rows());
  return chunk;
}

// -------------------------------------------------------------- SummedReader

SummedReader::SummedReader(const MeterGroup& group, std::size_t chunk_rows, double period_s,
                           std::optional<std::vector<TimeFrame>> sections)
    : cursor_(group, period_s, std::move(sections)),
      chunk_rows_(chunk_rows),
      tracker_(group[0].dataset().residency()),
      label_("summed:" + group_label(group).substr(8)) {
  if (chunk_rows < 1) throw Error(ErrorCode::invalid_argument, "chunk_rows must be at least 1");
}

std::optional<Chunk> SummedReader::next() {
  std::vector<Sample> samples;
  samples.reserve(std::min<std::size_t>(chunk_rows_, 1 << 16));
  const double period = cursor_.period_s();
  while (samples.size() < chunk_rows_) {
    auto bin = cursor_.next(row_);
    if (!bin) break;
    double total = 0.0;
    for (double v : row_) total += v;
    samples.push_back({static_cast<double>(*bin) * period, total});
  }
  if (samples.empty()) return std::nullopt;
  const TimeFrame frame(samples.front().timestamp, samples.back().timestamp + period);
  Chunk chunk(frame, std::move(samples));
  chunk.residency = ResidencyToken(tracker_, label_, chunk.samples.size());
  return chunk;
}

SummedReader load_summed(const MeterGroup& group, std::size_t chunk_rows, double period_s,
                         std::optional<std::vector<TimeFrame>> sections) {
  if (group.empty()) throw Error(ErrorCode::invalid_argument, "load_summed needs at least one meter");
  for (const auto& m : group) {
    if (period_s < m.meta().sample_period_s) {
      throw Error(ErrorCode::invalid_argument,
                  "resample period " + std::to_string(period_s) + " s is shorter than " +
                      m.label() + "'s sample period");
    }
  }
  return SummedReader(group, chunk_rows, period_s, std::move(sections));
}

}  // namespace nilm

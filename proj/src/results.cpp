#include "nilm/results.hpp"

#include <absl/time/civil_time.h>
#include <absl/time/time.h>

#include <algorithm>
#include <cmath>
#include <mutex>

#include "nilm/errors.hpp"

namespace nilm {

namespace {

json frames_to_json(const std::vector<TimeFrame>& frames) {
  json out = json::array();
  for (const auto& f : frames) {
    out.push_back({{"start", to_iso8601(f.start())}, {"end", to_iso8601(f.end())}});
  }
  return out;
}

json optional_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

const absl::TimeZone& load_zone(const std::string& name) {
  static std::mutex mutex;
  static std::map<std::string, absl::TimeZone> zones;
  std::lock_guard lock(mutex);
  auto it = zones.find(name);
  if (it == zones.end()) {
    absl::TimeZone tz;
    if (!absl::LoadTimeZone(name, &tz)) {
      throw Error(ErrorCode::configuration, "unknown time zone '" + name + "'");
    }
    it = zones.emplace(name, tz).first;
  }
  return it->second;
}

/// Maps timestamps to local hour-of-day, caching the current hour's bounds.
class HourOfDay {
 public:
  explicit HourOfDay(const std::string& timezone) : tz_(load_zone(timezone)) {}

  int operator()(Timestamp t) {
    const absl::Time at = absl::FromUnixMillis(std::llround(t * 1000.0));
    if (at >= begin_ && at < end_) return hour_;
    const auto civil = absl::CivilHour(tz_.At(at).cs);
    hour_ = civil.hour();
    begin_ = absl::FromCivil(civil, tz_);
    end_ = absl::FromCivil(civil + 1, tz_);
    if (!(at >= begin_ && at < end_)) {
      // Repeated or skipped local hours around DST changes: no caching.
      begin_ = end_ = absl::InfinitePast();
    }
    return hour_;
  }

 private:
  absl::TimeZone tz_;
  absl::Time begin_ = absl::InfinitePast();
  absl::Time end_ = absl::InfinitePast();
  int hour_ = 0;
};

}  // namespace

// ------------------------------------------------------------------ Coverage

std::optional<TimeFrame> Coverage::span() const {
  if (frames.empty()) return std::nullopt;
  return TimeFrame(frames.front().start(), frames.back().end());
}

void Coverage::add(const TimeFrame& frame) {
  if (!frames.empty()) {
    if (frame.start() < frames.back().end()) {
      throw Error(ErrorCode::merge, "covered frames must be disjoint and in time order");
    }
    if (frame.start() == frames.back().end()) {
      frames.back() = TimeFrame(frames.back().start(), frame.end());
      return;
    }
  }
  frames.push_back(frame);
}

void Coverage::absorb(const Coverage& later) {
  for (const auto& f : later.frames) add(f);
}

bool precedes(const Coverage& a, const Coverage& b) {
  const auto sa = a.span();
  const auto sb = b.span();
  if (!sa || !sb) return true;
  if (sa->end() <= sb->start()) return true;
  if (sb->end() <= sa->start()) return false;
  throw Error(ErrorCode::merge, "cannot merge accumulators with overlapping frames [" +
                                    to_iso8601(sa->start()) + ", " + to_iso8601(sa->end()) +
                                    ") and [" + to_iso8601(sb->start()) + ", " +
                                    to_iso8601(sb->end()) + ")");
}

// -------------------------------------------------------------------- Energy

EnergyResult EnergyResult::from_chunk(const Chunk& chunk, double sample_period_s,
                                      double max_sample_period_s) {
  EnergyResult r;
  r.sample_period_s = sample_period_s;
  r.max_sample_period_s = max_sample_period_s;
  r.coverage.add(chunk.frame);
  const auto& s = chunk.samples;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double dt = std::min(s[i + 1].timestamp - s[i].timestamp, max_sample_period_s);
    r.joules.add(s[i].power * dt);
    r.seconds.add(dt);
  }
  if (!s.empty()) {
    r.first = s.front();
    r.last = s.back();
  }
  r.n_samples = s.size();
  return r;
}

void EnergyResult::merge_from(const EnergyResult& later) {
  coverage.absorb(later.coverage);
  if (later.n_samples == 0) return;
  if (n_samples == 0) {
    joules = later.joules;
    seconds = later.seconds;
    first = later.first;
    last = later.last;
    n_samples = later.n_samples;
    return;
  }
  const double dt = std::min(later.first->timestamp - last->timestamp, max_sample_period_s);
  joules.add(last->power * dt);
  seconds.add(dt);
  joules.merge(later.joules);
  seconds.merge(later.seconds);
  last = later.last;
  n_samples += later.n_samples;
}

double EnergyResult::kwh() const {
  if (n_samples == 0) return 0.0;
  CompensatedSum total = joules;
  total.add(last->power * sample_period_s);
  return total.value() / 3.6e6;
}

double EnergyResult::uptime_s() const {
  if (n_samples == 0) return 0.0;
  return seconds.value() + sample_period_s;
}

json EnergyResult::to_json() const {
  return {{"kwh", kwh()}, {"uptime_s", uptime_s()}, {"n_samples", n_samples}};
}

// ------------------------------------------------------------- Good sections

GoodSectionsResult GoodSectionsResult::from_chunk(const Chunk& chunk,
                                                  double max_sample_period_s) {
  GoodSectionsResult r;
  r.max_sample_period_s = max_sample_period_s;
  r.coverage.add(chunk.frame);
  const auto& s = chunk.samples;
  if (s.empty()) return r;
  Timestamp start = s.front().timestamp;
  Timestamp prev = start;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const Timestamp t = s[i].timestamp;
    if (t - prev > max_sample_period_s) {
      r.sections.emplace_back(start, prev + max_sample_period_s);
      start = t;
    }
    prev = t;
  }
  r.sections.emplace_back(start, prev + max_sample_period_s);
  r.last_timestamp = prev;
  return r;
}

void GoodSectionsResult::merge_from(const GoodSectionsResult& later) {
  coverage.absorb(later.coverage);
  if (later.sections.empty()) return;
  if (sections.empty()) {
    sections = later.sections;
    last_timestamp = later.last_timestamp;
    return;
  }
  auto it = later.sections.begin();
  if (it->start() - *last_timestamp <= max_sample_period_s) {
    sections.back() = TimeFrame(sections.back().start(), it->end());
    ++it;
  }
  sections.insert(sections.end(), it, later.sections.end());
  last_timestamp = later.last_timestamp;
}

json GoodSectionsResult::to_json() const {
  return {{"n_sections", sections.size()},
          {"max_sample_period_s", max_sample_period_s},
          {"sections", frames_to_json(sections)}};
}

// ------------------------------------------------------------------- Dropout

DropoutResult DropoutResult::from_chunk(const Chunk& chunk, double sample_period_s) {
  DropoutResult r;
  r.sample_period_s = sample_period_s;
  r.coverage.add(chunk.frame);
  r.n_samples = chunk.samples.size();
  if (!chunk.samples.empty()) {
    r.first_timestamp = chunk.samples.front().timestamp;
    r.last_timestamp = chunk.samples.back().timestamp;
  }
  return r;
}

void DropoutResult::merge_from(const DropoutResult& later) {
  coverage.absorb(later.coverage);
  if (later.n_samples == 0) return;
  if (n_samples == 0) first_timestamp = later.first_timestamp;
  last_timestamp = later.last_timestamp;
  n_samples += later.n_samples;
}

std::optional<double> DropoutResult::rate() const {
  if (n_samples < 2) return std::nullopt;
  const double span = (*last_timestamp - *first_timestamp) / sample_period_s;
  const double expected = 1.0 + std::floor(span + 1e-9);
  return std::clamp(1.0 - static_cast<double>(n_samples) / expected, 0.0, 1.0);
}

json DropoutResult::to_json() const {
  return {{"dropout_rate", optional_to_json(rate())},
          {"n_samples", n_samples},
          {"sample_period_s", sample_period_s}};
}

// ----------------------------------------------------------------- Histogram

std::int64_t HistogramResult::bin_of(double power) const {
  if (!(power > 0.0)) return 0;
  if (max_power_w > 0.0) power = std::min(power, max_power_w);
  const double x = power / bin_width_w;
  return round_to_nearest ? std::llround(x) : static_cast<std::int64_t>(std::floor(x));
}

void HistogramResult::add(double power) {
  ++bins[bin_of(power)];
  ++total;
}

void HistogramResult::merge_counts(const HistogramResult& other) {
  for (const auto& [bin, count] : other.bins) bins[bin] += count;
  total += other.total;
}

void HistogramResult::merge_from(const HistogramResult& later) {
  coverage.absorb(later.coverage);
  merge_counts(later);
}

double HistogramResult::median() const {
  if (total == 0) throw Error(ErrorCode::undefined_statistic, "median of an empty histogram");
  const std::uint64_t lo_rank = (total - 1) / 2;
  const std::uint64_t hi_rank = total / 2;
  std::optional<double> lo, hi;
  std::uint64_t seen = 0;
  for (const auto& [bin, count] : bins) {
    const double value = static_cast<double>(bin) * bin_width_w;
    if (!lo && lo_rank < seen + count) lo = value;
    if (!hi && hi_rank < seen + count) {
      hi = value;
      break;
    }
    seen += count;
  }
  return (*lo + *hi) / 2.0;
}

double HistogramResult::entropy_bits() const {
  if (total == 0) throw Error(ErrorCode::undefined_statistic, "entropy of an empty histogram");
  double h = 0.0;
  const double n = static_cast<double>(total);
  for (const auto& [_, count] : bins) {
    const double f = static_cast<double>(count) / n;
    h -= f * std::log2(f);
  }
  return std::max(h, 0.0);
}

json HistogramResult::to_json() const {
  json out = {{"bin_width_w", bin_width_w}, {"total", total}};
  if (total > 0) {
    out["median_w"] = median();
    out["entropy_bits"] = entropy_bits();
  }
  return out;
}

// -------------------------------------------------------------------- Hourly

HourlyResult HourlyResult::make(const std::string& timezone, double max_power_w) {
  load_zone(timezone);
  HourlyResult r;
  r.timezone = timezone;
  for (auto& h : r.histograms) {
    h.bin_width_w = 1.0;
    h.max_power_w = max_power_w;
    h.round_to_nearest = true;
  }
  return r;
}

HourlyResult HourlyResult::from_chunk(const Chunk& chunk, const std::string& timezone,
                                      double max_power_w) {
  HourlyResult r = make(timezone, max_power_w);
  r.coverage.add(chunk.frame);
  HourOfDay hour_of(timezone);
  for (const auto& s : chunk.samples) {
    const int h = hour_of(s.timestamp);
    r.histograms[h].add(s.power);
    r.sums[h].add(s.power);
  }
  return r;
}

void HourlyResult::merge_from(const HourlyResult& later) {
  coverage.absorb(later.coverage);
  for (std::size_t h = 0; h < 24; ++h) {
    histograms[h].merge_counts(later.histograms[h]);
    sums[h].merge(later.sums[h]);
  }
}

std::array<std::optional<double>, 24> HourlyResult::medians() const {
  std::array<std::optional<double>, 24> out;
  for (std::size_t h = 0; h < 24; ++h) {
    if (histograms[h].total > 0) out[h] = histograms[h].median();
  }
  return out;
}

std::array<std::optional<double>, 24> HourlyResult::means() const {
  std::array<std::optional<double>, 24> out;
  for (std::size_t h = 0; h < 24; ++h) {
    if (histograms[h].total > 0) {
      out[h] = sums[h].value() / static_cast<double>(histograms[h].total);
    }
  }
  return out;
}

json HourlyResult::to_json() const {
  json medians_w = json::array(), means_w = json::array(), counts = json::array();
  const auto med = medians();
  const auto mean = means();
  for (std::size_t h = 0; h < 24; ++h) {
    medians_w.push_back(optional_to_json(med[h]));
    means_w.push_back(optional_to_json(mean[h]));
    counts.push_back(histograms[h].total);
  }
  return {{"timezone", timezone},
          {"median_w", medians_w},
          {"mean_w", means_w},
          {"n_samples", counts}};
}

// ---------------------------------------------------------------- Pair stats

void PairStatsResult::add(double x, double y) {
  ++n;
  sum_x.add(x);
  sum_y.add(y);
  sum_xx.add(x * x);
  sum_yy.add(y * y);
  sum_xy.add(x * y);
}

void PairStatsResult::merge_from(const PairStatsResult& later) {
  coverage.absorb(later.coverage);
  n += later.n;
  sum_x.merge(later.sum_x);
  sum_y.merge(later.sum_y);
  sum_xx.merge(later.sum_xx);
  sum_yy.merge(later.sum_yy);
  sum_xy.merge(later.sum_xy);
}

double PairStatsResult::correlation() const {
  if (n < 2) {
    throw Error(ErrorCode::undefined_statistic, "correlation needs at least two aligned pairs");
  }
  const double nn = static_cast<double>(n);
  const double sx = sum_x.value(), sy = sum_y.value();
  const double vx = nn * sum_xx.value() - sx * sx;
  const double vy = nn * sum_yy.value() - sy * sy;
  const double tol = 1e-12;
  if (vx <= tol * nn * sum_xx.value() || vy <= tol * nn * sum_yy.value()) {
    throw Error(ErrorCode::undefined_statistic, "correlation undefined for zero variance");
  }
  const double cov = nn * sum_xy.value() - sx * sy;
  return std::clamp(cov / std::sqrt(vx * vy), -1.0, 1.0);
}

json PairStatsResult::to_json() const {
  json out = {{"n", n}};
  try {
    out["pearson_r"] = correlation();
  } catch (const Error&) {
    out["pearson_r"] = nullptr;
  }
  return out;
}

// ------------------------------------------------------------------ Switches

void SwitchesResult::add_bucket(std::int64_t bucket, const std::vector<bool>& state) {
  if (state.size() != n_meters) {
    throw Error(ErrorCode::invalid_argument, "switch state width does not match meter count");
  }
  if (last_bucket) {
    if (bucket <= *last_bucket) {
      throw Error(ErrorCode::ordering, "switch buckets must arrive in increasing order");
    }
    if (bucket == *last_bucket + 1) {
      std::size_t changed = 0;
      for (std::size_t i = 0; i < n_meters; ++i) changed += state[i] != last_state[i];
      ++counts[changed];
    }
  } else {
    first_bucket = bucket;
    first_state = state;
  }
  last_bucket = bucket;
  last_state = state;
}

void SwitchesResult::merge_from(const SwitchesResult& later) {
  coverage.absorb(later.coverage);
  if (!later.first_bucket) return;
  if (!first_bucket) {
    *this = later;
    return;
  }
  if (later.n_meters != n_meters) {
    throw Error(ErrorCode::merge, "switch accumulators cover different meter counts");
  }
  if (*later.first_bucket == *last_bucket + 1) {
    std::size_t changed = 0;
    for (std::size_t i = 0; i < n_meters; ++i) {
      changed += later.first_state[i] != last_state[i];
    }
    ++counts[changed];
  }
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += later.counts[i];
  last_bucket = later.last_bucket;
  last_state = later.last_state;
}

json SwitchesResult::to_json() const {
  return {{"n_meters", n_meters}, {"histogram", counts}};
}

// -------------------------------------------------------------- Value counts

ValueCountsResult ValueCountsResult::from_chunk(const Chunk& chunk) {
  ValueCountsResult r;
  r.coverage.add(chunk.frame);
  for (const auto& s : chunk.samples) ++r.counts[s.power];
  r.total = chunk.samples.size();
  return r;
}

void ValueCountsResult::merge_from(const ValueCountsResult& later) {
  coverage.absorb(later.coverage);
  for (const auto& [value, count] : later.counts) counts[value] += count;
  total += later.total;
}

json ValueCountsResult::to_json() const {
  return {{"total", total}, {"distinct_values", counts.size()}};
}

// ---------------------------------------------------------------------- Clip

void ClipResult::merge_from(const ClipResult& later) {
  coverage.absorb(later.coverage);
  dropped_nan += later.dropped_nan;
  clamped += later.clamped;
}

json ClipResult::to_json() const {
  return {{"dropped_nan", dropped_nan}, {"clamped", clamped}};
}

// ---------------------------------------------------------------- AnyResult

AnyResult merge(const AnyResult& a, const AnyResult& b) {
  if (a.index() != b.index()) {
    throw Error(ErrorCode::merge, "cannot merge accumulators of different statistics");
  }
  return std::visit(
      [&b](const auto& lhs) -> AnyResult {
        using R = std::decay_t<decltype(lhs)>;
        return merge(lhs, std::get<R>(b));
      },
      a);
}

json to_json(const AnyResult& result) {
  return std::visit([](const auto& r) { return r.to_json(); }, result);
}

}  // namespace nilm

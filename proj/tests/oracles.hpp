#pragma once

// Naive in-memory reference implementations. They share no code with the
// library and favour obviousness over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace oracle {

struct Row {
  double t;
  double p;
};

template <typename S>
std::vector<Row> rows(const std::vector<S>& samples) {
  std::vector<Row> out;
  for (const auto& s : samples) out.push_back({s.timestamp, s.power});
  return out;
}

inline double energy_kwh(const std::vector<Row>& x, double sample_period, double max_period) {
  long double joules = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dt = i + 1 < x.size() ? std::min(x[i + 1].t - x[i].t, max_period) : sample_period;
    joules += static_cast<long double>(x[i].p) * dt;
  }
  return static_cast<double>(joules / 3.6e6L);
}

inline std::vector<std::pair<double, double>> good_sections(const std::vector<Row>& x,
                                                            double max_period) {
  std::vector<std::pair<double, double>> out;
  if (x.empty()) return out;
  double start = x[0].t;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i].t - x[i - 1].t > max_period) {
      out.push_back({start, x[i - 1].t + max_period});
      start = x[i].t;
    }
  }
  out.push_back({start, x.back().t + max_period});
  return out;
}

inline std::optional<double> dropout(const std::vector<Row>& x, double period) {
  if (x.size() < 2) return std::nullopt;
  const double expected = 1.0 + std::floor((x.back().t - x.front().t) / period + 1e-9);
  return std::clamp(1.0 - static_cast<double>(x.size()) / expected, 0.0, 1.0);
}

inline double exact_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double entropy_bits(const std::vector<double>& values, double width) {
  std::map<long long, double> counts;
  for (double v : values) counts[static_cast<long long>(std::floor(v / width))] += 1.0;
  double h = 0.0;
  for (const auto& [_, c] : counts) {
    const double f = c / static_cast<double>(values.size());
    h -= f * std::log2(f);
  }
  return h;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// One stream indexed by grid bin: per-bin (sum, count) plus the bin of
/// every row, for forward-fill lookups.
struct Gridded {
  std::vector<Row> x;
  std::vector<long long> bin;
  std::map<long long, std::pair<double, int>> occupied;
};

inline Gridded grid(const std::vector<Row>& x, double period) {
  Gridded g{x, {}, {}};
  for (const auto& r : x) {
    const long long b = static_cast<long long>(std::floor(r.t / period + 1e-9));
    g.bin.push_back(b);
    auto& cell = g.occupied[b];
    cell.first += r.p;
    ++cell.second;
  }
  return g;
}

/// Resampled value of grid bin k: mean of the samples inside the bin, or
/// the last earlier sample if it is less than max_period old at the bin start.
inline std::optional<double> grid_value(const Gridded& g, long long k, double period,
                                        double max_period) {
  if (auto it = g.occupied.find(k); it != g.occupied.end()) {
    return it->second.first / it->second.second;
  }
  const auto pos = std::lower_bound(g.bin.begin(), g.bin.end(), k) - g.bin.begin();
  if (pos == 0) return std::nullopt;
  const Row& before = g.x[static_cast<std::size_t>(pos - 1)];
  if (static_cast<double>(k) * period - before.t < max_period) return before.p;
  return std::nullopt;
}

/// All grid bins where every stream has a value, with the values.
inline std::vector<std::pair<long long, std::vector<double>>> align(
    const std::vector<std::vector<Row>>& streams, double period, double max_period) {
  double lo = 1e300, hi = -1e300;
  std::vector<Gridded> grids;
  for (const auto& s : streams) {
    if (s.empty()) return {};
    lo = std::min(lo, s.front().t);
    hi = std::max(hi, s.back().t + max_period);
    grids.push_back(grid(s, period));
  }
  std::vector<std::pair<long long, std::vector<double>>> out;
  for (long long k = static_cast<long long>(std::floor(lo / period + 1e-9));
       static_cast<double>(k) * period <= hi; ++k) {
    std::vector<double> values;
    for (const auto& g : grids) {
      auto v = grid_value(g, k, period, max_period);
      if (!v) break;
      values.push_back(*v);
    }
    if (values.size() == streams.size()) out.push_back({k, values});
  }
  return out;
}

/// Brute-force CO: enumerate every combination recursively, keep the best
/// by (residual, total, index vector).
inline std::vector<std::size_t> co_brute_force(double y, const std::vector<std::vector<double>>& states) {
  if (y < 0) y = 0;
  std::vector<std::size_t> best, current(states.size());
  double best_r = 0, best_total = 0;
  bool have = false;
  auto visit = [&](auto&& self, std::size_t n) -> void {
    if (n == states.size()) {
      double total = 0;
      for (std::size_t i = 0; i < states.size(); ++i) total += states[i][current[i]];
      const double r = std::fabs(y - total);
      const bool better = !have || r < best_r || (r == best_r && total < best_total) ||
                          (r == best_r && total == best_total && current < best);
      if (better) {
        best = current;
        best_r = r;
        best_total = total;
        have = true;
      }
      return;
    }
    for (std::size_t s = 0; s < states[n].size(); ++s) {
      current[n] = s;
      self(self, n + 1);
    }
  };
  visit(visit, 0);
  return best;
}

/// Switch histogram over transitions between adjacent buckets: how many
/// meters changed state, histogrammed over 0..n.
inline std::vector<std::uint64_t> switches(const std::vector<std::pair<long long, std::vector<bool>>>& buckets,
                                           std::size_t n_meters) {
  std::vector<std::uint64_t> hist(n_meters + 1, 0);
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    if (i == 0 || buckets[i].first != buckets[i - 1].first + 1) continue;
    std::size_t changed = 0;
    for (std::size_t m = 0; m < n_meters; ++m) {
      changed += buckets[i].second[m] != buckets[i - 1].second[m];
    }
    ++hist[changed];
  }
  return hist;
}

}  // namespace oracle

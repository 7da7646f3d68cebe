#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nilm {

/// UTC seconds since the Unix epoch. Fractional values are allowed; the
/// on-disk format keeps millisecond resolution.
using Timestamp = double;

/// Smallest timestamp step representable on disk.
inline constexpr double kTimestampResolution = 1e-3;

/// Half-open interval [start, end) of UTC seconds.
class TimeFrame {
 public:
  TimeFrame(Timestamp start, Timestamp end);

  Timestamp start() const noexcept { return start_; }
  Timestamp end() const noexcept { return end_; }
  double duration() const noexcept { return end_ - start_; }

  bool contains(Timestamp t) const noexcept { return t >= start_ && t < end_; }
  bool overlaps(const TimeFrame& other) const noexcept {
    return start_ < other.end_ && other.start_ < end_;
  }
  /// True if the frames share a boundary or overlap.
  bool touches(const TimeFrame& other) const noexcept {
    return start_ <= other.end_ && other.start_ <= end_;
  }

  std::optional<TimeFrame> intersect(const TimeFrame& other) const;
  /// Smallest frame covering both.
  TimeFrame span(const TimeFrame& other) const;

  friend bool operator==(const TimeFrame&, const TimeFrame&) = default;

 private:
  Timestamp start_;
  Timestamp end_;
};

/// True if the frames are sorted by start and pairwise disjoint.
bool sorted_and_disjoint(const std::vector<TimeFrame>& frames);

/// Pairwise intersection of two sorted disjoint frame lists.
std::vector<TimeFrame> intersect(const std::vector<TimeFrame>& a,
                                 const std::vector<TimeFrame>& b);

std::string to_iso8601(Timestamp t);
/// Writes the ISO-8601 form of `t` into `out` (at least 32 bytes) and
/// returns one past the last character written.
char* write_iso8601(Timestamp t, char* out);
/// Parses `YYYY-MM-DDTHH:MM:SS[.fff]Z`. Returns nullopt on malformed input.
std::optional<Timestamp> parse_iso8601(std::string_view text);

/// Rounds to the on-disk timestamp resolution.
Timestamp quantize_timestamp(Timestamp t);

}  // namespace nilm

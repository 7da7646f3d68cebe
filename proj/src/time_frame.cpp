#include "nilm/time_frame.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "nilm/errors.hpp"

namespace nilm {

TimeFrame::TimeFrame(Timestamp start, Timestamp end) : start_(start), end_(end) {
  if (!(std::isfinite(start) && std::isfinite(end)) || !(start < end)) {
    throw Error(ErrorCode::invalid_argument,
                "time frame requires finite start < end, got [" +
                    std::to_string(start) + ", " + std::to_string(end) + ")");
  }
}

std::optional<TimeFrame> TimeFrame::intersect(const TimeFrame& other) const {
  const Timestamp s = std::max(start_, other.start_);
  const Timestamp e = std::min(end_, other.end_);
  if (s < e) return TimeFrame(s, e);
  return std::nullopt;
}

TimeFrame TimeFrame::span(const TimeFrame& other) const {
  return {std::min(start_, other.start_), std::max(end_, other.end_)};
}

bool sorted_and_disjoint(const std::vector<TimeFrame>& frames) {
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].start() < frames[i - 1].end()) return false;
  }
  return true;
}

std::vector<TimeFrame> intersect(const std::vector<TimeFrame>& a,
                                 const std::vector<TimeFrame>& b) {
  std::vector<TimeFrame> out;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (auto x = a[i].intersect(b[j])) out.push_back(*x);
    if (a[i].end() < b[j].end()) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

namespace {

// Howard Hinnant's civil-calendar algorithms.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Civil {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

constexpr Civil civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

void put_digits(char*& out, std::int64_t value, int width) {
  for (int i = width - 1; i >= 0; --i) {
    out[i] = static_cast<char>('0' + value % 10);
    value /= 10;
  }
  out += width;
}

bool read_digits(std::string_view& text, int width, int& value) {
  if (text.size() < static_cast<std::size_t>(width)) return false;
  value = 0;
  for (int i = 0; i < width; ++i) {
    const char c = text[i];
    if (c < '0' || c > '9') return false;
    value = value * 10 + (c - '0');
  }
  text.remove_prefix(width);
  return true;
}

bool expect(std::string_view& text, char c) {
  if (text.empty() || text.front() != c) return false;
  text.remove_prefix(1);
  return true;
}

}  // namespace

Timestamp quantize_timestamp(Timestamp t) {
  return static_cast<double>(std::llround(t * 1000.0)) / 1000.0;
}

std::string to_iso8601(Timestamp t) {
  char buf[32];
  return std::string(buf, write_iso8601(t, buf));
}

char* write_iso8601(Timestamp t, char* p) {
  const std::int64_t ms = std::llround(t * 1000.0);
  const std::int64_t secs = floor_div(ms, 1000);
  const std::int64_t frac = ms - secs * 1000;
  const std::int64_t days = floor_div(secs, 86400);
  std::int64_t sod = secs - days * 86400;
  const Civil c = civil_from_days(days);

  put_digits(p, c.year, 4);
  *p++ = '-';
  put_digits(p, c.month, 2);
  *p++ = '-';
  put_digits(p, c.day, 2);
  *p++ = 'T';
  put_digits(p, sod / 3600, 2);
  *p++ = ':';
  sod %= 3600;
  put_digits(p, sod / 60, 2);
  *p++ = ':';
  put_digits(p, sod % 60, 2);
  if (frac != 0) {
    *p++ = '.';
    put_digits(p, frac, 3);
  }
  *p++ = 'Z';
  return p;
}

std::optional<Timestamp> parse_iso8601(std::string_view text) {
  int year, month, day, hour, minute, second;
  if (!read_digits(text, 4, year) || !expect(text, '-') ||
      !read_digits(text, 2, month) || !expect(text, '-') ||
      !read_digits(text, 2, day) || !expect(text, 'T') ||
      !read_digits(text, 2, hour) || !expect(text, ':') ||
      !read_digits(text, 2, minute) || !expect(text, ':') ||
      !read_digits(text, 2, second)) {
    return std::nullopt;
  }
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 ||
      minute > 59 || second > 60) {
    return std::nullopt;
  }
  double fraction = 0.0;
  if (!text.empty() && text.front() == '.') {
    text.remove_prefix(1);
    double scale = 0.1;
    std::size_t n = 0;
    while (!text.empty() && text.front() >= '0' && text.front() <= '9') {
      fraction += (text.front() - '0') * scale;
      scale /= 10.0;
      text.remove_prefix(1);
      ++n;
    }
    if (n == 0) return std::nullopt;
  }
  if (!expect(text, 'Z') || !text.empty()) return std::nullopt;
  const std::int64_t days = days_from_civil(year, month, day);
  const std::int64_t secs = days * 86400 + hour * 3600 + minute * 60 + second;
  return quantize_timestamp(static_cast<double>(secs) + fraction);
}

}  // namespace nilm

#include "nilm/chunk.hpp"

#include <algorithm>

#include "nilm/errors.hpp"

namespace nilm {

void ResidencyTracker::acquire(const std::string& stream, std::size_t rows) {
  std::lock_guard lock(mutex_);
  auto bump = [rows](Counts& c) {
    ++c.live_chunks;
    c.live_rows += rows;
    c.peak_chunks = std::max(c.peak_chunks, c.live_chunks);
    c.peak_rows = std::max(c.peak_rows, c.live_rows);
  };
  bump(total_);
  bump(streams_[stream]);
}

void ResidencyTracker::release(const std::string& stream, std::size_t rows) {
  std::lock_guard lock(mutex_);
  total_.live_chunks -= 1;
  total_.live_rows -= rows;
  auto& s = streams_[stream];
  s.live_chunks -= 1;
  s.live_rows -= rows;
}

ResidencyTracker::Counts ResidencyTracker::total() const {
  std::lock_guard lock(mutex_);
  return total_;
}

std::size_t ResidencyTracker::peak_chunks_per_stream() const {
  std::lock_guard lock(mutex_);
  std::size_t peak = 0;
  for (const auto& [_, c] : streams_) peak = std::max(peak, c.peak_chunks);
  return peak;
}

ResidencyTracker::Counts ResidencyTracker::stream(const std::string& label) const {
  std::lock_guard lock(mutex_);
  auto it = streams_.find(label);
  return it == streams_.end() ? Counts{} : it->second;
}

void ResidencyTracker::reset_peaks() {
  std::lock_guard lock(mutex_);
  total_.peak_chunks = total_.live_chunks;
  total_.peak_rows = total_.live_rows;
  for (auto& [_, c] : streams_) {
    c.peak_chunks = c.live_chunks;
    c.peak_rows = c.live_rows;
  }
}

ResidencyToken::ResidencyToken(std::shared_ptr<ResidencyTracker> tracker,
                               std::string stream, std::size_t rows)
    : tracker_(std::move(tracker)), stream_(std::move(stream)), rows_(rows) {
  if (tracker_) tracker_->acquire(stream_, rows_);
}

ResidencyToken::ResidencyToken(const ResidencyToken& other)
    : tracker_(other.tracker_), stream_(other.stream_), rows_(other.rows_) {
  if (tracker_) tracker_->acquire(stream_, rows_);
}

ResidencyToken::ResidencyToken(ResidencyToken&& other) noexcept
    : tracker_(std::move(other.tracker_)),
      stream_(std::move(other.stream_)),
      rows_(other.rows_) {
  other.tracker_.reset();
}

ResidencyToken& ResidencyToken::operator=(const ResidencyToken& other) {
  if (this != &other) {
    reset();
    tracker_ = other.tracker_;
    stream_ = other.stream_;
    rows_ = other.rows_;
    if (tracker_) tracker_->acquire(stream_, rows_);
  }
  return *this;
}

ResidencyToken& ResidencyToken::operator=(ResidencyToken&& other) noexcept {
  if (this != &other) {
    reset();
    tracker_ = std::move(other.tracker_);
    stream_ = std::move(other.stream_);
    rows_ = other.rows_;
    other.tracker_.reset();
  }
  return *this;
}

ResidencyToken::~ResidencyToken() { reset(); }

void ResidencyToken::reset() noexcept {
  if (tracker_) {
    tracker_->release(stream_, rows_);
    tracker_.reset();
  }
}

TimeFrame frame_of(const std::vector<Sample>& samples) {
  if (samples.empty()) {
    throw Error(ErrorCode::invalid_argument, "cannot frame an empty sample run");
  }
  return {samples.front().timestamp,
          samples.back().timestamp + kTimestampResolution};
}

Chunk Chunk::from_samples(std::vector<Sample> samples) {
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].timestamp > samples[i - 1].timestamp)) {
      throw Error(ErrorCode::ordering,
                  "chunk samples must be strictly increasing in time");
    }
  }
  const TimeFrame f = frame_of(samples);
  return Chunk(f, std::move(samples));
}

}  // namespace nilm

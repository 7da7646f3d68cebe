#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "nilm/time_frame.hpp"

namespace nilm {

struct Sample {
  Timestamp timestamp;
  double power;  // watts

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Counts chunk buffers alive at once, in total and per stream label, and
/// the number of samples they hold. Every `Chunk` produced by a dataset
/// registers here for its lifetime.
class ResidencyTracker {
 public:
  struct Counts {
    std::size_t live_chunks = 0;
    std::size_t peak_chunks = 0;
    std::size_t live_rows = 0;
    std::size_t peak_rows = 0;
  };

  void acquire(const std::string& stream, std::size_t rows);
  void release(const std::string& stream, std::size_t rows);

  Counts total() const;
  /// Highest number of chunks of a single stream ever alive at once.
  std::size_t peak_chunks_per_stream() const;
  Counts stream(const std::string& label) const;
  void reset_peaks();

 private:
  mutable std::mutex mutex_;
  Counts total_;
  std::map<std::string, Counts> streams_;
};

/// RAII registration of one chunk buffer. Copies register again, moves
/// transfer the registration.
class ResidencyToken {
 public:
  ResidencyToken() = default;
  ResidencyToken(std::shared_ptr<ResidencyTracker> tracker, std::string stream,
                 std::size_t rows);
  ResidencyToken(const ResidencyToken& other);
  ResidencyToken(ResidencyToken&& other) noexcept;
  ResidencyToken& operator=(const ResidencyToken& other);
  ResidencyToken& operator=(ResidencyToken&& other) noexcept;
  ~ResidencyToken();

  bool tracked() const noexcept { return tracker_ != nullptr; }

 private:
  void reset() noexcept;

  std::shared_ptr<ResidencyTracker> tracker_;
  std::string stream_;
  std::size_t rows_ = 0;
};

/// A contiguous time-sorted slice of one stream. `look_ahead` previews the
/// rows following `frame` and never contributes to results.
struct Chunk {
  TimeFrame frame;
  std::vector<Sample> samples;
  std::vector<Sample> look_ahead;
  ResidencyToken residency;

  Chunk(TimeFrame f, std::vector<Sample> s, std::vector<Sample> ahead = {})
      : frame(f), samples(std::move(s)), look_ahead(std::move(ahead)) {}

  /// Builds a chunk whose frame spans [first, last + resolution).
  /// Requires a non-empty, strictly increasing sample list.
  static Chunk from_samples(std::vector<Sample> samples);

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
};

/// Frame covering a non-empty strictly increasing sample run.
TimeFrame frame_of(const std::vector<Sample>& samples);

}  // namespace nilm

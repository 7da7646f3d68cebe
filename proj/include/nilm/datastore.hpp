#pragma once

#include <atomic>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nilm/chunk.hpp"
#include "nilm/metadata.hpp"

namespace nilm {

inline constexpr std::size_t kDefaultChunkRows = 100'000;
inline constexpr const char* kCsvHeader = "timestamp,active_power_w";

enum class StreamRole { raw, estimate };

/// Identifies one on-disk stream. Estimate streams are further qualified by
/// the disaggregation run that produced them.
struct StreamKey {
  int building = 0;
  int meter = 0;
  StreamRole role = StreamRole::raw;
  std::string run_id;

  static StreamKey raw(int building, int meter) { return {building, meter, StreamRole::raw, {}}; }
  static StreamKey estimate(int building, int meter, std::string run_id) {
    return {building, meter, StreamRole::estimate, std::move(run_id)};
  }

  /// Short human-readable label, e.g. "building1/meter2" or
  /// "building1/estimates/run-a/meter2".
  std::string label() const;

  friend auto operator<=>(const StreamKey&, const StreamKey&) = default;
  friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

struct IoCounters {
  std::atomic<std::uint64_t> rows_read{0};
  std::atomic<std::uint64_t> rows_written{0};
};

/// Formats watts with at most three fractional digits, no trailing zeros.
std::string format_power(double watts);

/// Row-at-a-time reader for one stream CSV. Holds a fixed-size byte buffer,
/// never a chunk.
class CsvReader {
 public:
  explicit CsvReader(std::filesystem::path path,
                     std::shared_ptr<IoCounters> counters = nullptr);
  CsvReader(CsvReader&&) noexcept;
  CsvReader& operator=(CsvReader&&) noexcept;
  CsvReader(const CsvReader&) = delete;
  CsvReader& operator=(const CsvReader&) = delete;
  ~CsvReader();

  /// Next row, or nullopt at end of file. Throws ParseError (with the file
  /// line number) on malformed or non-increasing rows.
  std::optional<Sample> next();
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  bool next_line(std::string_view& line);

  std::filesystem::path path_;
  std::shared_ptr<IoCounters> counters_;
  std::FILE* file_ = nullptr;
  std::vector<char> buffer_;
  std::size_t begin_ = 0;
  std::size_t end_ = 0;
  bool eof_ = false;
  std::string carry_;
  std::uint64_t line_ = 0;
  std::optional<Timestamp> previous_;
};

/// Appends rows to a stream CSV, writing the header if the file is new.
class CsvWriter {
 public:
  explicit CsvWriter(std::filesystem::path path);
  CsvWriter(CsvWriter&&) noexcept;
  CsvWriter& operator=(CsvWriter&&) noexcept;
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;
  ~CsvWriter();

  void write(const Sample& sample);
  void flush();
  void close();

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
};

/// Sample iterator restricted to an optional sorted, disjoint list of
/// sections. Rows outside every section are skipped as they are read.
class SampleCursor {
 public:
  SampleCursor(CsvReader reader, std::optional<std::vector<TimeFrame>> sections);

  std::optional<Sample> next();

 private:
  CsvReader reader_;
  std::optional<std::vector<TimeFrame>> sections_;
  std::size_t section_ = 0;
};

struct LoadOptions {
  std::size_t chunk_rows = kDefaultChunkRows;
  std::optional<std::vector<TimeFrame>> sections;
  std::size_t look_ahead_rows = 0;
};

/// Lazy chunk iterator. Each call to next() reads at most chunk_rows rows
/// (plus any look-ahead not yet read) from disk.
class ChunkReader {
 public:
  ChunkReader(SampleCursor cursor, LoadOptions options,
              std::shared_ptr<ResidencyTracker> tracker, std::string label);

  std::optional<Chunk> next();

 private:
  std::optional<Sample> pull();

  SampleCursor cursor_;
  LoadOptions options_;
  std::shared_ptr<ResidencyTracker> tracker_;
  std::string label_;
  std::deque<Sample> pending_;
};

/// Validates load options and opens a bare CSV stream outside any dataset.
ChunkReader load_csv(const std::filesystem::path& path, const LoadOptions& options = {},
                     std::shared_ptr<ResidencyTracker> tracker = nullptr);

void validate_load_options(const LoadOptions& options);

/// Handle on a dataset directory. Opening reads metadata only; time series
/// are read lazily through load() and cursor(). Single writer, many readers.
class Dataset {
 public:
  static Dataset open(const std::filesystem::path& root,
                      const Vocabulary& vocabulary = Vocabulary::builtin());
  /// Writes metadata into an absent or empty directory and returns a handle.
  static Dataset create(const std::filesystem::path& root, DatasetMeta meta,
                        const Vocabulary& vocabulary = Vocabulary::builtin());

  Dataset(Dataset&&) noexcept;
  Dataset& operator=(Dataset&&) noexcept;
  Dataset(const Dataset&) = delete;
  Dataset& operator=(const Dataset&) = delete;
  ~Dataset();

  const DatasetMeta& metadata() const noexcept { return meta_; }
  const std::filesystem::path& root() const noexcept { return root_; }

  std::filesystem::path stream_path(const StreamKey& key) const;
  bool has_stream(const StreamKey& key) const;
  /// Streams on disk sorted by (building, meter, role, run id).
  std::vector<StreamKey> list_streams() const;
  /// Estimate run ids present for a building, sorted.
  std::vector<std::string> runs(int building) const;

  ChunkReader load(const StreamKey& key, const LoadOptions& options = {}) const;
  SampleCursor cursor(const StreamKey& key,
                      std::optional<std::vector<TimeFrame>> sections = std::nullopt) const;
  /// Frame from the first row to one tick past the last row; reads two rows.
  std::optional<TimeFrame> stream_timeframe(const StreamKey& key) const;

  /// Appends a chunk's samples (never its look-ahead). Chunks must arrive in
  /// time order per stream.
  void append(const StreamKey& key, const Chunk& chunk);
  /// Creates an empty stream (header only) if it does not exist yet.
  void create_stream(const StreamKey& key);
  /// Flushes and closes the writer for one stream.
  void finalize(const StreamKey& key);
  /// Finalizes every open stream.
  void close();

  std::uint64_t rows_read() const noexcept { return counters_->rows_read; }
  std::uint64_t rows_written() const noexcept { return counters_->rows_written; }
  const std::shared_ptr<IoCounters>& counters() const noexcept { return counters_; }
  const std::shared_ptr<ResidencyTracker>& residency() const noexcept { return residency_; }

 private:
  Dataset(std::filesystem::path root, DatasetMeta meta);
  void repair_partial_rows() const;

  struct Writer {
    CsvWriter csv;
    std::optional<Timestamp> last_end;
  };

  std::filesystem::path root_;
  DatasetMeta meta_;
  std::shared_ptr<IoCounters> counters_;
  std::shared_ptr<ResidencyTracker> residency_;
  std::map<StreamKey, std::unique_ptr<Writer>> writers_;
};

Dataset open_dataset(const std::filesystem::path& root);
std::vector<StreamKey> list_streams(const Dataset& dataset);

}  // namespace nilm

#include "nilm/datastore.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>

#include "nilm/errors.hpp"
#include "nilm/log.hpp"

namespace nilm {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kReadBuffer = 1 << 16;

std::optional<int> parse_numbered(const std::string& name, std::string_view prefix,
                                  std::string_view suffix) {
  if (name.size() <= prefix.size() + suffix.size()) return std::nullopt;
  if (name.compare(0, prefix.size(), prefix) != 0) return std::nullopt;
  if (name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
    return std::nullopt;
  }
  const char* first = name.data() + prefix.size();
  const char* last = name.data() + name.size() - suffix.size();
  int value = 0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || value < 1) return std::nullopt;
  return value;
}

std::vector<std::pair<int, fs::path>> numbered_entries(const fs::path& dir,
                                                       std::string_view prefix,
                                                       std::string_view suffix) {
  std::vector<std::pair<int, fs::path>> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (auto n = parse_numbered(entry.path().filename().string(), prefix, suffix)) {
      out.emplace_back(*n, entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Sample parse_row(std::string_view line, const fs::path& path, std::uint64_t line_no) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto comma = line.find(',');
  if (comma == std::string_view::npos) {
    throw ParseError(path.string(), line_no, "expected 'timestamp,active_power_w'");
  }
  const auto ts = parse_iso8601(line.substr(0, comma));
  if (!ts) {
    throw ParseError(path.string(), line_no,
                     "bad timestamp '" + std::string(line.substr(0, comma)) + "'");
  }
  const std::string_view power_text = line.substr(comma + 1);
  double power = 0.0;
  auto [ptr, ec] = std::from_chars(power_text.data(), power_text.data() + power_text.size(), power);
  if (ec != std::errc{} || ptr != power_text.data() + power_text.size()) {
    throw ParseError(path.string(), line_no, "bad power value '" + std::string(power_text) + "'");
  }
  return {*ts, power};
}

}  // namespace

std::string StreamKey::label() const {
  std::string out = "building" + std::to_string(building) + "/";
  if (role == StreamRole::estimate) out += "estimates/" + run_id + "/";
  return out + "meter" + std::to_string(meter);
}

std::string format_power(double watts) {
  if (!std::isfinite(watts)) {
    throw Error(ErrorCode::invalid_argument, "cannot store non-finite power value");
  }
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, watts, std::chars_format::fixed, 3);
  if (ec != std::errc{}) throw Error(ErrorCode::invalid_argument, "power value out of range");
  char* p = end;
  while (p[-1] == '0') --p;
  if (p[-1] == '.') --p;
  std::string out(buf, p);
  if (out == "-0") out = "0";
  return out;
}

// ----------------------------------------------------------------- CsvReader

CsvReader::CsvReader(fs::path path, std::shared_ptr<IoCounters> counters)
    : path_(std::move(path)), counters_(std::move(counters)), buffer_(kReadBuffer) {
  file_ = std::fopen(path_.c_str(), "rb");
  if (!file_) throw Error(ErrorCode::not_found, path_.string() + ": cannot open stream");
  std::string_view header;
  if (!next_line(header)) return;  // empty file: empty stream
  if (!header.empty() && header.back() == '\r') header.remove_suffix(1);
  if (header != kCsvHeader) {
    throw ParseError(path_.string(), line_, std::string("header must be '") + kCsvHeader + "'");
  }
}

CsvReader::CsvReader(CsvReader&& other) noexcept
    : path_(std::move(other.path_)),
      counters_(std::move(other.counters_)),
      file_(std::exchange(other.file_, nullptr)),
      buffer_(std::move(other.buffer_)),
      begin_(other.begin_),
      end_(other.end_),
      eof_(other.eof_),
      line_(other.line_),
      previous_(other.previous_) {}

CsvReader& CsvReader::operator=(CsvReader&& other) noexcept {
  if (this != &other) {
    if (file_) std::fclose(file_);
    path_ = std::move(other.path_);
    counters_ = std::move(other.counters_);
    file_ = std::exchange(other.file_, nullptr);
    buffer_ = std::move(other.buffer_);
    begin_ = other.begin_;
    end_ = other.end_;
    eof_ = other.eof_;
    line_ = other.line_;
    previous_ = other.previous_;
  }
  return *this;
}

CsvReader::~CsvReader() {
  if (file_) std::fclose(file_);
}

bool CsvReader::next_line(std::string_view& line) {
  for (;;) {
    char* start = buffer_.data() + begin_;
    if (auto* nl = static_cast<char*>(std::memchr(start, '\n', end_ - begin_))) {
      line = std::string_view(start, static_cast<std::size_t>(nl - start));
      begin_ = static_cast<std::size_t>(nl - buffer_.data()) + 1;
      ++line_;
      return true;
    }
    if (eof_) {
      if (begin_ < end_) {
        line = std::string_view(start, end_ - begin_);
        begin_ = end_;
        ++line_;
        return true;
      }
      return false;
    }
    std::memmove(buffer_.data(), start, end_ - begin_);
    end_ -= begin_;
    begin_ = 0;
    if (end_ == buffer_.size()) buffer_.resize(buffer_.size() * 2);
    const std::size_t n = std::fread(buffer_.data() + end_, 1, buffer_.size() - end_, file_);
    if (n == 0) {
      if (std::ferror(file_)) throw Error(ErrorCode::io, path_.string() + ": read failed");
      eof_ = true;
    }
    end_ += n;
  }
}

std::optional<Sample> CsvReader::next() {
  std::string_view line;
  if (!next_line(line)) return std::nullopt;
  const Sample s = parse_row(line, path_, line_);
  if (previous_ && !(s.timestamp > *previous_)) {
    throw ParseError(path_.string(), line_, "timestamps must be strictly increasing");
  }
  previous_ = s.timestamp;
  if (counters_) counters_->rows_read.fetch_add(1, std::memory_order_relaxed);
  return s;
}

// ----------------------------------------------------------------- CsvWriter

CsvWriter::CsvWriter(fs::path path) : path_(std::move(path)) {
  std::error_code ec;
  fs::create_directories(path_.parent_path(), ec);
  file_ = std::fopen(path_.c_str(), "ab");
  if (!file_) throw Error(ErrorCode::io, path_.string() + ": cannot open for writing");
  std::setvbuf(file_, nullptr, _IOFBF, 1 << 16);
  std::fseek(file_, 0, SEEK_END);
  if (std::ftell(file_) == 0) {
    std::fputs(kCsvHeader, file_);
    std::fputc('\n', file_);
  }
}

CsvWriter::CsvWriter(CsvWriter&& other) noexcept
    : path_(std::move(other.path_)), file_(std::exchange(other.file_, nullptr)) {}

CsvWriter& CsvWriter::operator=(CsvWriter&& other) noexcept {
  if (this != &other) {
    if (file_) std::fclose(file_);
    path_ = std::move(other.path_);
    file_ = std::exchange(other.file_, nullptr);
  }
  return *this;
}

CsvWriter::~CsvWriter() {
  if (file_) std::fclose(file_);
}

void CsvWriter::write(const Sample& sample) {
  char buf[96];
  char* p = write_iso8601(sample.timestamp, buf);
  *p++ = ',';
  const std::string power = format_power(sample.power);
  std::memcpy(p, power.data(), std::min<std::size_t>(power.size(), 60));
  p += std::min<std::size_t>(power.size(), 60);
  *p++ = '\n';
  const auto n = static_cast<std::size_t>(p - buf);
  if (std::fwrite(buf, 1, n, file_) != n) {
    throw Error(ErrorCode::io, path_.string() + ": write failed");
  }
}

void CsvWriter::flush() {
  if (file_ && std::fflush(file_) != 0) {
    throw Error(ErrorCode::io, path_.string() + ": flush failed");
  }
}

void CsvWriter::close() {
  if (file_) {
    const bool ok = std::fclose(file_) == 0;
    file_ = nullptr;
    if (!ok) throw Error(ErrorCode::io, path_.string() + ": close failed");
  }
}

// -------------------------------------------------------------- SampleCursor

SampleCursor::SampleCursor(CsvReader reader, std::optional<std::vector<TimeFrame>> sections)
    : reader_(std::move(reader)), sections_(std::move(sections)) {}

std::optional<Sample> SampleCursor::next() {
  for (;;) {
    if (sections_ && section_ >= sections_->size()) return std::nullopt;
    auto s = reader_.next();
    if (!s || !sections_) return s;
    const auto& frames = *sections_;
    while (section_ < frames.size() && s->timestamp >= frames[section_].end()) ++section_;
    if (section_ >= frames.size()) return std::nullopt;
    if (s->timestamp >= frames[section_].start()) return s;
  }
}

// --------------------------------------------------------------- ChunkReader

void validate_load_options(const LoadOptions& options) {
  if (options.chunk_rows < 1) {
    throw Error(ErrorCode::invalid_argument, "chunk_rows must be at least 1");
  }
  if (options.sections && !sorted_and_disjoint(*options.sections)) {
    throw Error(ErrorCode::invalid_argument, "sections must be sorted and pairwise disjoint");
  }
}

ChunkReader::ChunkReader(SampleCursor cursor, LoadOptions options,
                         std::shared_ptr<ResidencyTracker> tracker, std::string label)
    : cursor_(std::move(cursor)),
      options_(std::move(options)),
      tracker_(std::move(tracker)),
      label_(std::move(label)) {}

std::optional<Sample> ChunkReader::pull() {
  if (!pending_.empty()) {
    Sample s = pending_.front();
    pending_.pop_front();
    return s;
  }
  return cursor_.next();
}

std::optional<Chunk> ChunkReader::next() {
  std::vector<Sample> samples;
  samples.reserve(std::min<std::size_t>(options_.chunk_rows, 1 << 16));
  while (samples.size() < options_.chunk_rows) {
    auto s = pull();
    if (!s) break;
    samples.push_back(*s);
  }
  if (samples.empty()) return std::nullopt;

  while (pending_.size() < options_.look_ahead_rows) {
    auto s = cursor_.next();
    if (!s) break;
    pending_.push_back(*s);
  }
  const std::size_t n_ahead = std::min(options_.look_ahead_rows, pending_.size());
  std::vector<Sample> ahead(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n_ahead));

  const TimeFrame frame = frame_of(samples);
  Chunk chunk(frame, std::move(samples), std::move(ahead));
  chunk.residency = ResidencyToken(tracker_, label_, chunk.samples.size() + chunk.look_ahead.size());
  return chunk;
}

ChunkReader load_csv(const fs::path& path, const LoadOptions& options,
                     std::shared_ptr<ResidencyTracker> tracker) {
  validate_load_options(options);
  return ChunkReader(SampleCursor(CsvReader(path), options.sections), options,
                     std::move(tracker), path.string());
}

// ------------------------------------------------------------------ Dataset

Dataset::Dataset(fs::path root, DatasetMeta meta)
    : root_(std::move(root)),
      meta_(std::move(meta)),
      counters_(std::make_shared<IoCounters>()),
      residency_(std::make_shared<ResidencyTracker>()) {}

Dataset::Dataset(Dataset&&) noexcept = default;
Dataset& Dataset::operator=(Dataset&&) noexcept = default;

Dataset::~Dataset() {
  try {
    close();
  } catch (const std::exception& e) {
    warn(std::string("closing dataset: ") + e.what());
  }
}

Dataset Dataset::open(const fs::path& root, const Vocabulary& vocabulary) {
  Dataset ds(root, load_metadata(root, vocabulary));
  ds.repair_partial_rows();
  return ds;
}

Dataset Dataset::create(const fs::path& root, DatasetMeta meta, const Vocabulary& vocabulary) {
  std::error_code ec;
  if (fs::exists(root, ec) && !fs::is_empty(root, ec)) {
    throw Error(ErrorCode::io, root.string() + ": destination exists and is not empty");
  }
  validate(meta, vocabulary);
  save_metadata(root, meta);
  return Dataset(root, std::move(meta));
}

fs::path Dataset::stream_path(const StreamKey& key) const {
  fs::path dir = root_ / ("building" + std::to_string(key.building));
  if (key.role == StreamRole::raw) {
    dir /= "elec";
  } else {
    dir = dir / "estimates" / key.run_id;
  }
  return dir / ("meter" + std::to_string(key.meter) + ".csv");
}

bool Dataset::has_stream(const StreamKey& key) const {
  std::error_code ec;
  return fs::is_regular_file(stream_path(key), ec);
}

std::vector<StreamKey> Dataset::list_streams() const {
  std::vector<StreamKey> keys;
  for (const auto& [b, bdir] : numbered_entries(root_, "building", "")) {
    for (const auto& [m, _] : numbered_entries(bdir / "elec", "meter", ".csv")) {
      keys.push_back(StreamKey::raw(b, m));
    }
    for (const auto& run : runs(b)) {
      for (const auto& [m, _] : numbered_entries(bdir / "estimates" / run, "meter", ".csv")) {
        keys.push_back(StreamKey::estimate(b, m, run));
      }
    }
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::vector<std::string> Dataset::runs(int building) const {
  std::vector<std::string> out;
  const fs::path dir = root_ / ("building" + std::to_string(building)) / "estimates";
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ChunkReader Dataset::load(const StreamKey& key, const LoadOptions& options) const {
  validate_load_options(options);
  if (!has_stream(key)) throw Error(ErrorCode::not_found, "no stream " + key.label());
  return ChunkReader(cursor(key, options.sections), options, residency_, key.label());
}

SampleCursor Dataset::cursor(const StreamKey& key,
                             std::optional<std::vector<TimeFrame>> sections) const {
  if (!has_stream(key)) throw Error(ErrorCode::not_found, "no stream " + key.label());
  if (sections && !sorted_and_disjoint(*sections)) {
    throw Error(ErrorCode::invalid_argument, "sections must be sorted and pairwise disjoint");
  }
  return SampleCursor(CsvReader(stream_path(key), counters_), std::move(sections));
}

std::optional<TimeFrame> Dataset::stream_timeframe(const StreamKey& key) const {
  const fs::path path = stream_path(key);
  CsvReader reader(path, counters_);
  auto first = reader.next();
  if (!first) return std::nullopt;

  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error(ErrorCode::io, path.string() + ": cannot open stream");
  std::fseek(f, 0, SEEK_END);
  const long size = std::ftell(f);
  const long tail = std::min<long>(size, 512);
  std::string buf(static_cast<std::size_t>(tail), '\0');
  std::fseek(f, size - tail, SEEK_SET);
  const std::size_t got = std::fread(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  buf.resize(got);
  while (!buf.empty() && (buf.back() == '\n' || buf.back() == '\r')) buf.pop_back();
  const auto nl = buf.rfind('\n');
  const std::string last_line = nl == std::string::npos ? buf : buf.substr(nl + 1);
  const Sample last = parse_row(last_line, path, 0);
  counters_->rows_read.fetch_add(1, std::memory_order_relaxed);
  return TimeFrame(first->timestamp, last.timestamp + kTimestampResolution);
}

void Dataset::append(const StreamKey& key, const Chunk& chunk) {
  for (std::size_t i = 0; i < chunk.samples.size(); ++i) {
    const Timestamp t = chunk.samples[i].timestamp;
    if (!chunk.frame.contains(t) || (i > 0 && !(t > chunk.samples[i - 1].timestamp))) {
      throw Error(ErrorCode::ordering,
                  key.label() + ": chunk samples must be strictly increasing within its frame");
    }
  }
  auto it = writers_.find(key);
  if (it == writers_.end()) {
    std::optional<Timestamp> last_end;
    if (has_stream(key)) {
      if (auto tf = stream_timeframe(key)) last_end = tf->end();
    }
    auto writer = std::make_unique<Writer>(Writer{CsvWriter(stream_path(key)), last_end});
    it = writers_.emplace(key, std::move(writer)).first;
  }
  Writer& w = *it->second;
  if (w.last_end && chunk.frame.start() < *w.last_end) {
    throw Error(ErrorCode::ordering,
                key.label() + ": appended chunk starts at " + to_iso8601(chunk.frame.start()) +
                    " before the end of the previous chunk " + to_iso8601(*w.last_end));
  }
  for (const auto& s : chunk.samples) w.csv.write(s);
  counters_->rows_written.fetch_add(chunk.samples.size(), std::memory_order_relaxed);
  w.last_end = chunk.frame.end();
}

void Dataset::create_stream(const StreamKey& key) {
  if (writers_.count(key) || has_stream(key)) return;
  CsvWriter w(stream_path(key));
  w.close();
}

void Dataset::finalize(const StreamKey& key) {
  auto it = writers_.find(key);
  if (it == writers_.end()) return;
  auto writer = std::move(it->second);
  writers_.erase(it);
  writer->csv.close();
}

void Dataset::close() {
  while (!writers_.empty()) finalize(writers_.begin()->first);
}

void Dataset::repair_partial_rows() const {
  for (const auto& key : list_streams()) {
    const fs::path path = stream_path(key);
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) continue;
    std::fseek(f, 0, SEEK_END);
    long size = std::ftell(f);
    if (size == 0) {
      std::fclose(f);
      continue;
    }
    std::fseek(f, size - 1, SEEK_SET);
    if (std::fgetc(f) == '\n') {
      std::fclose(f);
      continue;
    }
    // Scan backwards for the last complete line.
    long keep = 0;
    for (long pos = size - 1; pos > 0;) {
      const long step = std::min<long>(pos, 4096);
      std::string buf(static_cast<std::size_t>(step), '\0');
      std::fseek(f, pos - step, SEEK_SET);
      if (std::fread(buf.data(), 1, buf.size(), f) != buf.size()) break;
      const auto nl = buf.rfind('\n');
      if (nl != std::string::npos) {
        keep = pos - step + static_cast<long>(nl) + 1;
        break;
      }
      pos -= step;
    }
    std::fclose(f);
    fs::resize_file(path, static_cast<std::uintmax_t>(keep));
    warn(key.label() + ": truncated " + std::to_string(size - keep) +
         " bytes of a partial trailing row");
  }
}

Dataset open_dataset(const fs::path& root) { return Dataset::open(root); }

std::vector<StreamKey> list_streams(const Dataset& dataset) { return dataset.list_streams(); }

}  // namespace nilm

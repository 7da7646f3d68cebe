#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nilm/elec.hpp"
#include "nilm/errors.hpp"
#include "nilm/results.hpp"

namespace nilm {

/// Requirement registry, version 1.
namespace requirement {
inline constexpr const char* clipped = "clipped";
inline constexpr const char* gaps_located = "gaps_located";
inline constexpr const char* sample_period_known = "sample_period_known";
inline constexpr const char* sorted_timestamps = "sorted_timestamps";
}  // namespace requirement

const std::set<std::string>& requirement_registry();

/// Effective metadata seen by a node: requirement key -> value.
using PipelineMetadata = std::map<std::string, std::string>;

struct Requirement {
  std::string key;
  /// Expected value; nullopt means the key only has to be present.
  std::optional<std::string> expected = std::string("true");
};

struct NodeSpec {
  std::string name;
  std::vector<Requirement> preconditions;
  PipelineMetadata postconditions;
};

/// A pipeline stage. Transform nodes rewrite chunks in place; accumulator
/// nodes return a per-chunk result that the pipeline merges. A node may be
/// both.
class Node {
 public:
  explicit Node(NodeSpec spec);
  virtual ~Node() = default;

  const NodeSpec& spec() const noexcept { return spec_; }
  const std::string& name() const noexcept { return spec_.name; }
  /// Adds a precondition. Keys must come from the registry.
  Node& require(const std::string& key, std::optional<std::string> expected = "true");
  Node& rename(std::string name);

  virtual void transform(Chunk& /*chunk*/) {}
  virtual std::optional<AnyResult> accumulate(const Chunk& /*chunk*/) { return std::nullopt; }
  /// Result reported when the source yields no chunks.
  virtual std::optional<AnyResult> empty_result() const { return std::nullopt; }

 private:
  NodeSpec spec_;
};

struct PipelineSource {
  MeterGroup group;
  LoadOptions load;
  /// Resample period for multi-meter groups (their sum is processed).
  std::optional<double> period_s;
};

struct PipelineSink {
  Dataset* dataset = nullptr;
  StreamKey key;
};

struct PipelineSpec {
  PipelineSource source;
  std::vector<std::shared_ptr<Node>> nodes;
  std::optional<PipelineSink> sink;

  PipelineSpec& then(std::shared_ptr<Node> node) {
    nodes.push_back(std::move(node));
    return *this;
  }
};

struct Violation {
  std::string node;
  std::vector<std::string> missing;

  friend bool operator==(const Violation&, const Violation&) = default;
};

json to_json(const std::vector<Violation>& violations);

class PreconditionError : public Error {
 public:
  explicit PreconditionError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

/// Metadata a source guarantees before any node runs: sorted timestamps, a
/// known sample period, and whatever preprocessing every meter declares.
PipelineMetadata source_metadata(const PipelineSource& source);

/// Walks the nodes in order over source metadata plus upstream
/// postconditions and lists every unmet requirement. Reads no time series.
std::vector<Violation> check_preconditions(const PipelineSpec& pipeline,
                                           const PipelineMetadata& source_meta);
std::vector<Violation> check_preconditions(const PipelineSpec& pipeline);

struct RunResult {
  std::map<std::string, AnyResult> results;
  std::size_t chunks = 0;
  std::size_t rows = 0;

  template <typename R>
  const R& get(const std::string& node) const {
    return std::get<R>(results.at(node));
  }
};

/// Pushes every chunk through the nodes in order. Throws PreconditionError
/// before opening any stream if check_preconditions reports violations.
RunResult run(const PipelineSpec& pipeline);

}  // namespace nilm

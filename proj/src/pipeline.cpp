#include "nilm/pipeline.hpp"

#include <algorithm>

namespace nilm {

const std::set<std::string>& requirement_registry() {
  static const std::set<std::string> registry = {
      requirement::clipped, requirement::gaps_located, requirement::sample_period_known,
      requirement::sorted_timestamps};
  return registry;
}

namespace {

void check_registered(const std::string& key, const std::string& node) {
  if (!requirement_registry().count(key)) {
    throw Error(ErrorCode::invalid_argument,
                "node '" + node + "' uses unregistered requirement key '" + key + "'");
  }
}

std::string describe(const TimeFrame& f) {
  return "[" + to_iso8601(f.start()) + ", " + to_iso8601(f.end()) + ")";
}

}  // namespace

Node::Node(NodeSpec spec) : spec_(std::move(spec)) {
  for (const auto& r : spec_.preconditions) check_registered(r.key, spec_.name);
  for (const auto& [key, _] : spec_.postconditions) check_registered(key, spec_.name);
}

Node& Node::require(const std::string& key, std::optional<std::string> expected) {
  check_registered(key, spec_.name);
  spec_.preconditions.push_back({key, std::move(expected)});
  return *this;
}

Node& Node::rename(std::string name) {
  spec_.name = std::move(name);
  return *this;
}

json to_json(const std::vector<Violation>& violations) {
  json out = json::array();
  for (const auto& v : violations) out.push_back({{"node", v.node}, {"missing", v.missing}});
  return out;
}

PreconditionError::PreconditionError(std::vector<Violation> violations)
    : Error(ErrorCode::precondition,
            "pipeline preconditions not met: " + to_json(violations).dump()),
      violations_(std::move(violations)) {}

PipelineMetadata source_metadata(const PipelineSource& source) {
  PipelineMetadata meta = {{requirement::sorted_timestamps, "true"},
                           {requirement::sample_period_known, "true"}};
  if (source.group.empty()) return meta;
  std::set<std::string> common(source.group[0].meta().preprocessing.begin(),
                               source.group[0].meta().preprocessing.end());
  for (const auto& m : source.group) {
    std::set<std::string> mine(m.meta().preprocessing.begin(), m.meta().preprocessing.end());
    std::set<std::string> both;
    std::set_intersection(common.begin(), common.end(), mine.begin(), mine.end(),
                          std::inserter(both, both.end()));
    common = std::move(both);
  }
  for (const auto& key : common) meta[key] = "true";
  return meta;
}

std::vector<Violation> check_preconditions(const PipelineSpec& pipeline,
                                           const PipelineMetadata& source_meta) {
  PipelineMetadata effective = source_meta;
  std::vector<Violation> violations;
  for (const auto& node : pipeline.nodes) {
    Violation v{node->name(), {}};
    for (const auto& req : node->spec().preconditions) {
      auto it = effective.find(req.key);
      const bool ok = it != effective.end() && (!req.expected || it->second == *req.expected);
      if (!ok) v.missing.push_back(req.key);
    }
    if (!v.missing.empty()) violations.push_back(std::move(v));
    for (const auto& [key, value] : node->spec().postconditions) effective[key] = value;
  }
  return violations;
}

std::vector<Violation> check_preconditions(const PipelineSpec& pipeline) {
  return check_preconditions(pipeline, source_metadata(pipeline.source));
}

namespace {

class SourceReader {
 public:
  explicit SourceReader(const PipelineSource& source) {
    if (source.group.empty()) {
      throw Error(ErrorCode::invalid_argument, "pipeline source has no meters");
    }
    if (source.group.size() == 1) {
      single_.emplace(source.group[0].load(source.load));
    } else {
      if (!source.period_s) {
        throw Error(ErrorCode::invalid_argument,
                    "a multi-meter pipeline source needs a resample period");
      }
      summed_.emplace(load_summed(source.group, source.load.chunk_rows, *source.period_s,
                                  source.load.sections));
    }
  }

  std::optional<Chunk> next() { return single_ ? single_->next() : summed_->next(); }

 private:
  std::optional<ChunkReader> single_;
  std::optional<SummedReader> summed_;
};

}  // namespace

RunResult run(const PipelineSpec& pipeline) {
  std::set<std::string> names;
  for (const auto& node : pipeline.nodes) {
    if (!names.insert(node->name()).second) {
      throw Error(ErrorCode::invalid_argument, "duplicate pipeline node name '" + node->name() + "'");
    }
  }
  if (auto violations = check_preconditions(pipeline); !violations.empty()) {
    throw PreconditionError(std::move(violations));
  }

  RunResult out;
  SourceReader reader(pipeline.source);
  while (auto chunk = reader.next()) {
    Node* current = nullptr;
    try {
      for (const auto& node : pipeline.nodes) {
        current = node.get();
        node->transform(*chunk);
        if (auto r = node->accumulate(*chunk)) {
          auto it = out.results.find(node->name());
          if (it == out.results.end()) {
            out.results.emplace(node->name(), std::move(*r));
          } else {
            std::visit(
                [&r](auto& acc) {
                  using R = std::decay_t<decltype(acc)>;
                  acc.merge_from(std::get<R>(*r));
                },
                it->second);
          }
        }
      }
    } catch (const Error& e) {
      throw Error(e.code(), "node '" + current->name() + "' failed on chunk " +
                                describe(chunk->frame) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::invalid_argument, "node '" + current->name() +
                                                   "' failed on chunk " + describe(chunk->frame) +
                                                   ": " + e.what());
    }
    if (pipeline.sink) {
      try {
        pipeline.sink->dataset->append(pipeline.sink->key, *chunk);
      } catch (const Error& e) {
        throw Error(e.code(), "sink write failed on chunk " + describe(chunk->frame) + ": " +
                                  e.what());
      }
    }
    ++out.chunks;
    out.rows += chunk->samples.size();
  }
  for (const auto& node : pipeline.nodes) {
    if (!out.results.count(node->name())) {
      if (auto r = node->empty_result()) out.results.emplace(node->name(), std::move(*r));
    }
  }
  if (pipeline.sink) pipeline.sink->dataset->finalize(pipeline.sink->key);
  return out;
}

}  // namespace nilm

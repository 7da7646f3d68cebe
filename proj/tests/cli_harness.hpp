#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "nilm/cli.hpp"
#include "nilm/metadata.hpp"

namespace cli_harness {

struct Invocation {
  int code;
  std::string out, err;
};

inline Invocation nilm_cmd(std::vector<std::string> args) {
  std::ostringstream out, err;
  args.insert(args.begin(), "--quiet");
  const int code = nilm::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

/// Last JSON document on a stream (warnings may precede it).
inline nilm::json last_json(const std::string& text) {
  const auto pos = text.rfind("\n{", text.size() >= 2 ? text.size() - 2 : 0);
  return nilm::json::parse(pos == std::string::npos ? text : text.substr(pos + 1));
}

}  // namespace cli_harness

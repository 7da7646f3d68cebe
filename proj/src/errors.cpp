#include "nilm/errors.hpp"

#include <iostream>
#include <mutex>

#include "nilm/log.hpp"

namespace nilm {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::parse: return "parse";
    case ErrorCode::ordering: return "ordering";
    case ErrorCode::metadata: return "metadata";
    case ErrorCode::wiring_cycle: return "wiring_cycle";
    case ErrorCode::vocabulary: return "vocabulary";
    case ErrorCode::configuration: return "configuration";
    case ErrorCode::query: return "query";
    case ErrorCode::scope: return "scope";
    case ErrorCode::merge: return "merge";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::training: return "training";
    case ErrorCode::capacity: return "capacity";
    case ErrorCode::undefined_statistic: return "undefined_statistic";
    case ErrorCode::format_version: return "format_version";
    case ErrorCode::invalid_argument: return "invalid_argument";
  }
  return "unknown";
}

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& sink() {
  static WarningSink s = [](const std::string& message) {
    std::cerr << "warning: " << message << '\n';
  };
  return s;
}

}  // namespace

WarningSink set_warning_sink(WarningSink replacement) {
  std::lock_guard lock(sink_mutex());
  WarningSink previous = std::move(sink());
  sink() = std::move(replacement);
  return previous;
}

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(message);
}

}  // namespace nilm

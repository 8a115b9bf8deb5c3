#include "subnet/log.hpp"

#include <iostream>
#include <mutex>

namespace subnet {

namespace {
std::mutex sink_mutex;
LogSink& sink_ref() {
  static LogSink sink;
  return sink;
}
}  // namespace

LogSink set_warning_sink(LogSink sink) {
  std::lock_guard lock(sink_mutex);
  LogSink previous = std::move(sink_ref());
  sink_ref() = std::move(sink);
  return previous;
}

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex);
  if (sink_ref()) {
    sink_ref()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

}  // namespace subnet

#include "adagemm/log.h"

#include <atomic>
#include <cstdio>

namespace adagemm::log {
namespace {
std::atomic<Level> g_level{Level::Info};
}

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void info(std::string_view message) {
  if (g_level >= Level::Info) {
    std::fprintf(stderr, "[ INFO ] %.*s\n", static_cast<int>(message.size()), message.data());
  }
}

void warn(std::string_view message) {
  if (g_level >= Level::Warn) {
    std::fprintf(stderr, "[ WARN ] %.*s\n", static_cast<int>(message.size()), message.data());
  }
}

}  // namespace adagemm::log

// Minimal stderr logging. Tests silence it with set_level(Level::Quiet).
#pragma once

#include <string_view>

namespace adagemm::log {

enum class Level { Quiet = 0, Warn = 1, Info = 2 };

void set_level(Level level);
Level level();

void info(std::string_view message);
void warn(std::string_view message);

}  // namespace adagemm::log

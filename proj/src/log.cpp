// SPDX-License-Identifier: Apache-2.0

#include "dhnet/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace dhnet {

namespace {

LogLevel g_level = LogLevel::kInfo;
std::once_flag g_init;
std::mutex g_mutex;

LogLevel parse_level(const char* s) {
  if (s == nullptr || *s == '\0') return LogLevel::kInfo;
  if (std::strcmp(s, "error") == 0 || std::strcmp(s, "0") == 0) return LogLevel::kError;
  if (std::strcmp(s, "warn") == 0 || std::strcmp(s, "1") == 0) return LogLevel::kWarn;
  if (std::strcmp(s, "info") == 0 || std::strcmp(s, "2") == 0) return LogLevel::kInfo;
  if (std::strcmp(s, "debug") == 0 || std::strcmp(s, "3") == 0) return LogLevel::kDebug;
  return LogLevel::kInfo;
}

const char* level_tag(LogLevel lvl) {
  switch (lvl) {
    case LogLevel::kError: return "error";
    case LogLevel::kWarn: return "warn";
    case LogLevel::kInfo: return "info";
    case LogLevel::kDebug: return "debug";
  }
  return "?";
}

void ensure_init() {
  std::call_once(g_init, [] { g_level = parse_level(std::getenv("DHNET_LOG")); });
}

}  // namespace

LogLevel log_level() {
  ensure_init();
  return g_level;
}

void set_log_level(LogLevel lvl) {
  ensure_init();
  g_level = lvl;
}

void log_line(LogLevel lvl, const std::string& msg) {
  if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::fprintf(stderr, "[%s] %s\n", level_tag(lvl), msg.c_str());
  std::fflush(stderr);
}

}  // namespace dhnet

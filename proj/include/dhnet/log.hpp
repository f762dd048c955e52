// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

namespace dhnet {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

/// Current threshold; initialized once from DHNET_LOG (error|warn|info|debug
/// or 0..3), default info.
LogLevel log_level();
void set_log_level(LogLevel lvl);

/// Writes "[level] msg" to stderr if lvl is within the threshold.  No
/// timestamps: reruns must be byte-identical.
void log_line(LogLevel lvl, const std::string& msg);

inline void log_error(const std::string& m) { log_line(LogLevel::kError, m); }
inline void log_warn(const std::string& m) { log_line(LogLevel::kWarn, m); }
inline void log_info(const std::string& m) { log_line(LogLevel::kInfo, m); }
inline void log_debug(const std::string& m) { log_line(LogLevel::kDebug, m); }

}  // namespace dhnet

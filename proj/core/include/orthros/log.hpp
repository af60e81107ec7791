#ifndef ORTHROS_LOG_HPP
#define ORTHROS_LOG_HPP

#include <string>

namespace orthros {

// Verbosity comes from the ORTHROS_LOG environment variable:
// quiet | info (default) | debug. Messages go to stderr.
enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace orthros

#endif

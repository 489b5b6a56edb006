#pragma once

#include <string_view>

namespace belforge::log {

// Progress and warnings go to stderr. Quiet mode silences both; warnings
// are still counted so callers can report them in summaries.
void set_quiet(bool quiet);
bool quiet();

void info(std::string_view message);
void warn(std::string_view message);

long warning_count();
void reset_warning_count();

}  // namespace belforge::log

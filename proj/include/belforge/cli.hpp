#pragma once

// Command-line front end. Every subcommand reads one JSON config (relative
// paths resolve against the config file's directory), applies `--key value`
// overrides, writes its artifacts atomically and prints a one-line JSON
// summary on stdout.

#include <iosfwd>
#include <string>
#include <vector>

namespace belforge::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsageError = 1;
inline constexpr int kDataError = 2;
inline constexpr int kIoError = 3;

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

// Every recognised config key with its default value, as a JSON document.
std::string default_config_json();

}  // namespace belforge::cli

#include "belforge/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace belforge::log {

namespace {

std::atomic<bool> g_quiet{false};
std::atomic<long> g_warnings{0};
std::mutex g_stderr_mutex;

void emit(std::string_view tag, std::string_view message) {
  std::lock_guard<std::mutex> lock(g_stderr_mutex);
  std::cerr << "[belforge] " << tag << message << '\n';
}

}  // namespace

void set_quiet(bool quiet) { g_quiet = quiet; }
bool quiet() { return g_quiet; }

void info(std::string_view message) {
  if (!g_quiet) emit("", message);
}

void warn(std::string_view message) {
  ++g_warnings;
  if (!g_quiet) emit("warning: ", message);
}

long warning_count() { return g_warnings; }
void reset_warning_count() { g_warnings = 0; }

}  // namespace belforge::log

#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <string>

namespace belforge::io {

// Opens for binary reading; throws IoError if the file cannot be opened.
std::ifstream open_input(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

// Writes through a sibling temporary file and renames it over `path` once the
// writer returns and the stream flushed cleanly. A throwing writer or a
// failed write leaves `path` untouched.
void write_atomic(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer);

void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace belforge::io

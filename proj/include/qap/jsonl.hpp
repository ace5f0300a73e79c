#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace qap {

// Error with file/line position attached, raised by loaders and readers.
class LoadError : public std::runtime_error {
 public:
  LoadError(const std::string& path, size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
        path_(path),
        line_(line) {}
  explicit LoadError(const std::string& what) : std::runtime_error(what), line_(0) {}

  const std::string& path() const { return path_; }
  size_t line() const { return line_; }

 private:
  std::string path_;
  size_t line_ = 0;
};

struct JsonLine {
  size_t line = 0;  // 1-based
  nlohmann::json value;
};

// Reads a JSON-lines file; blank lines are skipped. Malformed lines raise
// LoadError with the line number.
std::vector<JsonLine> read_jsonl(const std::filesystem::path& path);

// Writes content to a temp file in the target directory then renames it over
// `path`, so readers never observe a partial file.
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace qap

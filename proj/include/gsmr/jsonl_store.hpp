#pragma once

// Append-only JSON-lines files shared by the inference and grade stores.

#include <fcntl.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsmr {

class JsonlAppender {
 public:
  explicit JsonlAppender(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw std::runtime_error("cannot open " + path.string() + ": " + std::strerror(errno));
    // A crash can leave a partial last line; terminate it so the next record
    // starts cleanly. Readers discard the fragment.
    std::error_code ec;
    auto size = std::filesystem::file_size(path, ec);
    if (!ec && size > 0) {
      std::ifstream in(path, std::ios::binary);
      in.seekg(static_cast<std::streamoff>(size - 1));
      if (in.get() != '\n') write_all("\n");
    }
  }
  JsonlAppender(const JsonlAppender&) = delete;
  JsonlAppender& operator=(const JsonlAppender&) = delete;
  ~JsonlAppender() {
    if (fd_ >= 0) ::close(fd_);
  }

  void append(const nlohmann::json& record) {
    std::string line = record.dump() + "\n";
    std::lock_guard lock(mutex_);
    write_all(line);
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  void write_all(std::string_view data) {
    while (!data.empty()) {
      ssize_t n = ::write(fd_, data.data(), data.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        throw std::runtime_error("write " + path_.string() + ": " + std::strerror(errno));
      }
      data.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  std::filesystem::path path_;
  int fd_ = -1;
  std::mutex mutex_;
};

struct JsonlContents {
  std::vector<nlohmann::json> records;
  std::size_t malformed_lines = 0;
};

// Missing file reads as empty. Lines that do not parse as a JSON object are
// counted and skipped.
inline JsonlContents read_jsonl(const std::filesystem::path& path) {
  JsonlContents out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      ++out.malformed_lines;
      continue;
    }
    out.records.push_back(std::move(j));
  }
  return out;
}

}  // namespace gsmr

#pragma once

// Helpers shared by the test suites: paths, scratch directories and a
// loopback configuration with ephemeral ports and no boot sleeping.

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>
#include <thread>

#include "e2es/config.hpp"

namespace e2es::test {

inline std::filesystem::path source_dir() { return E2ES_SOURCE_DIR; }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("e2es-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Shipped config with every listener on an ephemeral port, boots that take
// no real time and a journal under `dir`.
inline RunConfig loopback_config(const std::filesystem::path& dir) {
  RunConfig cfg = RunConfig::load(source_dir() / "config" / "e2es.json");
  cfg.journal_path = dir / "journal.ndjson";
  cfg.journal_fsync = false;
  cfg.listen.nbi = {"127.0.0.1", 0};
  cfg.listen.nssf = {"127.0.0.1", 0};
  cfg.listen.southbound = {"127.0.0.1", 0};
  cfg.listen.default_mme = {"127.0.0.1", 0};
  cfg.latency_model.time_scale = 0.0;
  cfg.timer_tick = 0.1;
  cfg.ran.stats_period = 0.2;
  return cfg;
}

// A TCP port that was free a moment ago, for listeners that must keep the
// same address across restarts.
inline int free_port() {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof a);
  socklen_t len = sizeof a;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len);
  ::close(fd);
  return ntohs(a.sin_port);
}

template <typename Pred>
bool eventually(Pred pred, double timeout_s = 5.0) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  while (std::chrono::steady_clock::now() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return pred();
}

}  // namespace e2es::test

#pragma once

// Newline-delimited message transport over TCP. Used by the southbound
// controller/agent protocol and by the simulated VNF endpoints.

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "e2es/config.hpp"

namespace e2es {

class LineChannel {
 public:
  explicit LineChannel(int fd);
  ~LineChannel();
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  // Throws Error(IoError) when the connection cannot be established.
  static std::shared_ptr<LineChannel> connect(const HostPort& addr, double timeout_s = 2.0);

  void send_line(const std::string& line);
  // nullopt on timeout; throws Error(IoError) once the peer has closed.
  std::optional<std::string> read_line(std::optional<double> timeout_s = std::nullopt);
  // One request/response exchange, serialized against other callers.
  std::string request(const std::string& line, double timeout_s);

  void close();
  bool is_closed() const { return closed_.load(); }

 private:
  int fd_;
  std::atomic<bool> closed_{false};
  std::mutex send_mu_;
  std::mutex recv_mu_;
  std::mutex request_mu_;
  std::string buffer_;
};

class LineServer {
 public:
  // Runs on a dedicated thread per accepted connection.
  using Handler = std::function<void(std::shared_ptr<LineChannel>)>;

  explicit LineServer(Handler handler);
  ~LineServer();
  LineServer(const LineServer&) = delete;
  LineServer& operator=(const LineServer&) = delete;

  // Binds and starts accepting; port 0 picks an ephemeral port. Returns the
  // bound address. Throws Error(IoError) on bind failure.
  HostPort listen(const HostPort& addr);
  void stop();
  HostPort address() const { return bound_; }

  // Adapts a line -> reply function into a connection handler that answers
  // every request line until the peer disconnects.
  static Handler request_handler(std::function<std::string(const std::string&)> fn);

 private:
  struct Worker {
    std::thread thread;
    std::shared_ptr<LineChannel> channel;
    std::shared_ptr<std::atomic<bool>> done;
  };

  void accept_loop();
  void reap_finished();

  Handler handler_;
  int listen_fd_ = -1;
  HostPort bound_;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<Worker> workers_;
};

}  // namespace e2es

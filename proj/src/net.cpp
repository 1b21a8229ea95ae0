#include "e2es/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "e2es/error.hpp"

namespace e2es {

namespace {

sockaddr_in make_addr(const HostPort& addr) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(static_cast<uint16_t>(addr.port));
  std::string host = addr.host == "localhost" || addr.host.empty() ? "127.0.0.1" : addr.host;
  if (inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
      throw Error(ErrorCode::IoError, "cannot resolve " + addr.host);
    }
    sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
  }
  return sa;
}

void set_nodelay(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

LineChannel::LineChannel(int fd) : fd_(fd) { set_nodelay(fd_); }

LineChannel::~LineChannel() {
  close();
  ::close(fd_);
}

std::shared_ptr<LineChannel> LineChannel::connect(const HostPort& addr, double timeout_s) {
  sockaddr_in sa = make_addr(addr);
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(ErrorCode::IoError, "socket: " + errno_text());

  int flags = fcntl(fd, F_GETFL, 0);
  fcntl(fd, F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa));
  if (rc < 0 && errno != EINPROGRESS) {
    std::string why = errno_text();
    ::close(fd);
    throw Error(ErrorCode::IoError, "connect " + addr.str() + ": " + why);
  }
  if (rc < 0) {
    pollfd p{fd, POLLOUT, 0};
    int ready = ::poll(&p, 1, static_cast<int>(timeout_s * 1000));
    int err = 0;
    socklen_t len = sizeof(err);
    if (ready <= 0 || getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) < 0 || err != 0) {
      ::close(fd);
      throw Error(ErrorCode::IoError, "connect " + addr.str() + ": " + (ready <= 0 ? "timed out" : std::strerror(err)));
    }
  }
  fcntl(fd, F_SETFL, flags);
  return std::make_shared<LineChannel>(fd);
}

void LineChannel::send_line(const std::string& line) {
  std::string msg = line;
  msg.push_back('\n');
  std::lock_guard lock(send_mu_);
  std::size_t off = 0;
  while (off < msg.size()) {
    ssize_t n = ::send(fd_, msg.data() + off, msg.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      closed_ = true;
      throw Error(ErrorCode::IoError, "send: " + errno_text());
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> LineChannel::read_line(std::optional<double> timeout_s) {
  using Clock = std::chrono::steady_clock;
  std::lock_guard lock(recv_mu_);
  auto deadline = timeout_s ? Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                                  std::chrono::duration<double>(*timeout_s))
                            : Clock::time_point::max();
  for (;;) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    if (closed_) throw Error(ErrorCode::IoError, "connection closed");
    int wait_ms = -1;
    if (timeout_s) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
      if (left <= 0) return std::nullopt;
      wait_ms = static_cast<int>(left);
    }
    pollfd p{fd_, POLLIN, 0};
    int ready = ::poll(&p, 1, wait_ms);
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoError, "poll: " + errno_text());
    }
    if (ready == 0) return std::nullopt;
    char chunk[4096];
    ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      closed_ = true;
      throw Error(ErrorCode::IoError, "connection closed");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string LineChannel::request(const std::string& line, double timeout_s) {
  std::lock_guard lock(request_mu_);
  send_line(line);
  auto reply = read_line(timeout_s);
  if (!reply) throw Error(ErrorCode::Timeout, "no reply within " + std::to_string(timeout_s) + " s");
  return *reply;
}

void LineChannel::close() {
  if (!closed_.exchange(true)) ::shutdown(fd_, SHUT_RDWR);
}

LineServer::LineServer(Handler handler) : handler_(std::move(handler)) {}

LineServer::~LineServer() { stop(); }

HostPort LineServer::listen(const HostPort& addr) {
  sockaddr_in sa = make_addr(addr);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::IoError, "socket: " + errno_text());
  int one = 1;
  setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) < 0 || ::listen(listen_fd_, 256) < 0) {
    std::string why = errno_text();
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorCode::IoError, "bind " + addr.str() + ": " + why);
  }
  socklen_t len = sizeof(sa);
  getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &len);
  bound_ = addr;
  if (bound_.host.empty() || bound_.host == "0.0.0.0") bound_.host = "127.0.0.1";
  bound_.port = ntohs(sa.sin_port);
  accept_thread_ = std::thread([this] { accept_loop(); });
  return bound_;
}

void LineServer::accept_loop() {
  while (!stopping_) {
    int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return;
    }
    auto channel = std::make_shared<LineChannel>(fd);
    auto done = std::make_shared<std::atomic<bool>>(false);
    std::lock_guard lock(mu_);
    if (stopping_) {
      channel->close();
      return;
    }
    reap_finished();
    workers_.push_back({std::thread([this, channel, done] {
                          try {
                            handler_(channel);
                          } catch (const std::exception&) {
                          }
                          channel->close();
                          *done = true;
                        }),
                        channel, done});
  }
}

void LineServer::reap_finished() {
  for (auto it = workers_.begin(); it != workers_.end();) {
    if (*it->done) {
      it->thread.join();
      it = workers_.erase(it);
    } else {
      ++it;
    }
  }
}

void LineServer::stop() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  std::vector<Worker> workers;
  {
    std::lock_guard lock(mu_);
    workers.swap(workers_);
  }
  for (auto& w : workers) w.channel->close();
  for (auto& w : workers) w.thread.join();
}

LineServer::Handler LineServer::request_handler(std::function<std::string(const std::string&)> fn) {
  return [fn = std::move(fn)](std::shared_ptr<LineChannel> channel) {
    for (;;) {
      auto line = channel->read_line();
      if (!line) continue;
      channel->send_line(fn(*line));
    }
  };
}

}  // namespace e2es

#pragma once

// Shared glue between e2es errors and cpp-httplib.

#include <httplib.h>

#include <string>

#include "e2es/config.hpp"
#include "e2es/error.hpp"

namespace e2es::http {

inline Json error_body(ErrorCode code, const std::string& message) {
  return Json{{"error", std::string(to_string(code))}, {"message", message}};
}

inline void reply_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void reply_error(httplib::Response& res, const Error& e) {
  reply_json(res, http_status(e.code()), error_body(e.code(), e.detail()));
}

// Runs `fn`, mapping thrown errors onto status + JSON error body.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    reply_error(res, e);
  } catch (const Json::exception& e) {
    reply_json(res, 400, error_body(ErrorCode::InvalidArgument, e.what()));
  } catch (const std::exception& e) {
    reply_json(res, 500, error_body(ErrorCode::Internal, e.what()));
  }
}

inline Json parse_body(const httplib::Request& req) {
  Json j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::InvalidArgument, "request body is not valid JSON");
  return j;
}

// Turns a non-2xx response into the matching Error.
inline Error error_from_response(int status, const std::string& body) {
  Json j = Json::parse(body, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("error")) {
    return Error(error_code_from_string(j.value("error", "INTERNAL")), j.value("message", ""));
  }
  return Error(ErrorCode::Internal, "HTTP " + std::to_string(status) + ": " + body);
}

// Binds `server` to `addr` (port 0 picks an ephemeral port) and returns the
// bound address. Throws Error(IoError).
inline HostPort bind(httplib::Server& server, const HostPort& addr) {
  HostPort bound = addr;
  if (addr.port == 0) {
    int port = server.bind_to_any_port(addr.host);
    if (port < 0) throw Error(ErrorCode::IoError, "bind " + addr.str() + " failed");
    bound.port = port;
  } else if (!server.bind_to_port(addr.host, addr.port)) {
    throw Error(ErrorCode::IoError, "bind " + addr.str() + " failed");
  }
  if (bound.host == "0.0.0.0" || bound.host.empty()) bound.host = "127.0.0.1";
  return bound;
}

}  // namespace e2es::http

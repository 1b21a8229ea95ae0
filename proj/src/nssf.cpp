#include "e2es/nssf.hpp"

#include <algorithm>

#include "http_util.hpp"

namespace e2es {

std::size_t RoundRobinPolicy::pick(MmePool& pool) { return pool.cursor++ % pool.endpoints.size(); }

std::size_t LeastLoadedPolicy::pick(MmePool& pool) {
  auto it = std::min_element(pool.assigned_counts.begin(), pool.assigned_counts.end());
  return static_cast<std::size_t>(it - pool.assigned_counts.begin());
}

std::unique_ptr<SelectionPolicy> make_policy(const std::string& name) {
  if (name == "ROUND_ROBIN") return std::make_unique<RoundRobinPolicy>();
  if (name == "LEAST_LOADED") return std::make_unique<LeastLoadedPolicy>();
  throw Error(ErrorCode::ConfigError, "unknown NSSF policy '" + name + "'");
}

void to_json(Json& j, const Selection& s) {
  j = Json{{"slice_id", s.slice_id}, {"mme_endpoint", s.mme_endpoint}, {"fallback", s.fallback}};
}

void to_json(Json& j, const MmePool& p) {
  Json counts = Json::object();
  for (std::size_t i = 0; i < p.endpoints.size(); ++i) counts[p.endpoints[i]] = p.assigned_counts[i];
  j = Json{{"slice_id", p.slice_id},
           {"template_id", p.template_id},
           {"coverage", p.coverage},
           {"endpoints", p.endpoints},
           {"assigned_counts", counts}};
}

Nssf::Nssf(std::unique_ptr<SelectionPolicy> policy) : policy_(std::move(policy)) {}

void Nssf::register_enb(const std::string& enb_id) {
  std::unique_lock lock(mu_);
  enbs_.insert(enb_id);
}

std::set<std::string> Nssf::enbs() const {
  std::shared_lock lock(mu_);
  return enbs_;
}

void Nssf::register_pool(const std::string& slice_id, const std::vector<std::string>& endpoints,
                         const std::string& template_id, const std::set<std::string>& coverage) {
  if (endpoints.empty()) throw Error(ErrorCode::InvalidArgument, "empty MME pool for " + slice_id);
  auto cell = std::make_shared<PoolCell>();
  cell->pool.slice_id = slice_id;
  cell->pool.template_id = template_id;
  cell->pool.coverage = coverage;
  cell->pool.endpoints = endpoints;
  cell->pool.assigned_counts.assign(endpoints.size(), 0);
  std::unique_lock lock(mu_);
  if (pools_.count(slice_id)) throw Error(ErrorCode::DuplicatePool, slice_id);
  cell->pool.order = next_order_++;
  pools_[slice_id] = cell;
}

void Nssf::update_pool(const std::string& slice_id, const std::vector<std::string>& endpoints) {
  if (endpoints.empty()) throw Error(ErrorCode::InvalidArgument, "empty MME pool for " + slice_id);
  std::unique_lock lock(mu_);
  auto it = pools_.find(slice_id);
  if (it == pools_.end()) throw Error(ErrorCode::UnknownPool, slice_id);
  // Selections in flight keep the old cell; new ones see the replacement.
  auto cell = std::make_shared<PoolCell>();
  {
    std::lock_guard old(it->second->mu);
    cell->pool = it->second->pool;
  }
  std::vector<std::uint64_t> counts;
  for (const auto& ep : endpoints) {
    auto pos = std::find(cell->pool.endpoints.begin(), cell->pool.endpoints.end(), ep);
    counts.push_back(pos == cell->pool.endpoints.end() ? 0 : cell->pool.assigned_counts[pos - cell->pool.endpoints.begin()]);
  }
  cell->pool.endpoints = endpoints;
  cell->pool.assigned_counts = std::move(counts);
  it->second = cell;
}

void Nssf::deregister_pool(const std::string& slice_id) {
  std::unique_lock lock(mu_);
  if (pools_.erase(slice_id) == 0) throw Error(ErrorCode::UnknownPool, slice_id);
}

std::optional<MmePool> Nssf::pool(const std::string& slice_id) const {
  std::shared_ptr<PoolCell> cell;
  {
    std::shared_lock lock(mu_);
    auto it = pools_.find(slice_id);
    if (it == pools_.end()) return std::nullopt;
    cell = it->second;
  }
  std::lock_guard lock(cell->mu);
  return cell->pool;
}

std::vector<MmePool> Nssf::pools() const {
  std::vector<std::shared_ptr<PoolCell>> cells;
  {
    std::shared_lock lock(mu_);
    for (const auto& [id, c] : pools_) cells.push_back(c);
  }
  std::vector<MmePool> out;
  for (auto& c : cells) {
    std::lock_guard lock(c->mu);
    out.push_back(c->pool);
  }
  return out;
}

void Nssf::set_default_slice(const std::string& slice_id) {
  std::unique_lock lock(mu_);
  default_slice_ = slice_id;
}

std::string Nssf::default_slice() const {
  std::shared_lock lock(mu_);
  return default_slice_;
}

void Nssf::subscribe(const std::string& ue_id, const std::string& key) {
  std::unique_lock lock(mu_);
  if (key.empty()) {
    subscriptions_.erase(ue_id);
  } else {
    subscriptions_[ue_id] = key;
  }
}

void Nssf::unsubscribe(const std::string& ue_id) {
  std::unique_lock lock(mu_);
  subscriptions_.erase(ue_id);
}

std::shared_ptr<Nssf::PoolCell> Nssf::resolve(const std::string& ue_id, const std::string& enb_id,
                                              bool& fallback) const {
  std::shared_lock lock(mu_);
  if (!enbs_.count(enb_id)) throw Error(ErrorCode::UnknownEnb, enb_id);
  fallback = false;
  auto sub = subscriptions_.find(ue_id);
  if (sub != subscriptions_.end()) {
    auto direct = pools_.find(sub->second);
    if (direct != pools_.end()) return direct->second;
    std::shared_ptr<PoolCell> best;
    for (const auto& [id, cell] : pools_) {
      // template_id and coverage are immutable after registration.
      const auto& p = cell->pool;
      if (p.template_id != sub->second) continue;
      if (!p.coverage.empty() && !p.coverage.count(enb_id)) continue;
      if (!best || p.order < best->pool.order) best = cell;
    }
    if (best) return best;
    fallback = true;
  }
  auto def = pools_.find(default_slice_);
  if (default_slice_.empty() || def == pools_.end()) throw Error(ErrorCode::NoDefaultSlice, "no default slice pool");
  return def->second;
}

Selection Nssf::select_core(const std::string& ue_id, const std::string& enb_id) {
  Selection s;
  auto cell = resolve(ue_id, enb_id, s.fallback);
  std::lock_guard lock(cell->mu);
  auto& pool = cell->pool;
  std::size_t i = policy_->pick(pool);
  pool.assigned_counts[i] += 1;
  s.slice_id = pool.slice_id;
  s.mme_endpoint = pool.endpoints[i];
  return s;
}

NssfServer::NssfServer(Nssf& nssf, NssfConfig config)
    : nssf_(nssf), config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  injected_delay_ = config_.injected_delay;
  const int workers = std::max(4, config_.worker_threads);
  server_->new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };
  server_->set_keep_alive_max_count(1000000);
  server_->set_keep_alive_timeout(30);
  server_->set_tcp_nodelay(true);

  server_->Get("/nssf/select", [this](const httplib::Request& req, httplib::Response& res) {
    http::guarded(res, [&] {
      if (!req.has_param("ue") || !req.has_param("enb")) {
        throw Error(ErrorCode::InvalidArgument, "ue and enb query parameters are required");
      }
      if (!delay()) throw Error(ErrorCode::Internal, "shutting down");
      Selection s = nssf_.select_core(req.get_param_value("ue"), req.get_param_value("enb"));
      http::reply_json(res, 200, Json(s));
    });
  });
  server_->Get("/nssf/pools", [this](const httplib::Request&, httplib::Response& res) {
    http::guarded(res, [&] { http::reply_json(res, 200, Json(nssf_.pools())); });
  });
  server_->Put(R"(/nssf/pools/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    http::guarded(res, [&] {
      Json body = http::parse_body(req);
      const std::string id = req.matches[1];
      auto endpoints = body.at("endpoints").get<std::vector<std::string>>();
      if (body.value("update", false)) {
        nssf_.update_pool(id, endpoints);
      } else {
        nssf_.register_pool(id, endpoints, body.value("template_id", ""),
                            body.value("coverage", std::set<std::string>{}));
      }
      http::reply_json(res, 200, Json{{"slice_id", id}});
    });
  });
  server_->Delete(R"(/nssf/pools/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    http::guarded(res, [&] {
      nssf_.deregister_pool(req.matches[1]);
      http::reply_json(res, 200, Json{{"slice_id", std::string(req.matches[1])}});
    });
  });
  server_->Put(R"(/nssf/subscriptions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    http::guarded(res, [&] {
      Json body = http::parse_body(req);
      nssf_.subscribe(req.matches[1], body.value("key", ""));
      http::reply_json(res, 200, Json{{"ue_id", std::string(req.matches[1])}});
    });
  });
  server_->Put(R"(/nssf/enbs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    http::guarded(res, [&] {
      nssf_.register_enb(req.matches[1]);
      http::reply_json(res, 200, Json{{"enb_id", std::string(req.matches[1])}});
    });
  });
  server_->Put("/nssf/default", [this](const httplib::Request& req, httplib::Response& res) {
    http::guarded(res, [&] {
      Json body = http::parse_body(req);
      nssf_.set_default_slice(body.at("slice_id").get<std::string>());
      http::reply_json(res, 200, body);
    });
  });
}

NssfServer::~NssfServer() { stop(); }

HostPort NssfServer::listen(const HostPort& addr) {
  HostPort bound = http::bind(*server_, addr);
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void NssfServer::stop() {
  {
    std::lock_guard lock(stop_mu_);
    stopping_ = true;
  }
  stop_cv_.notify_all();
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

void NssfServer::set_injected_delay(double seconds) { injected_delay_ = seconds; }

bool NssfServer::delay() {
  const double d = injected_delay_.load();
  std::unique_lock lock(stop_mu_);
  if (d <= 0) return !stopping_;
  return !stop_cv_.wait_for(lock, std::chrono::duration<double>(d), [&] { return stopping_; });
}

std::map<std::string, std::uint64_t> LocalNssfClient::assigned_counts(const std::string& slice_id) {
  std::map<std::string, std::uint64_t> out;
  if (auto p = nssf_.pool(slice_id)) {
    for (std::size_t i = 0; i < p->endpoints.size(); ++i) out[p->endpoints[i]] = p->assigned_counts[i];
  }
  return out;
}

Json RemoteNssfClient::call(const std::string& method, const std::string& path, const Json& body) {
  httplib::Client client(addr_.host, addr_.port);
  client.set_connection_timeout(2);
  client.set_read_timeout(5);
  httplib::Result res = method == "PUT"      ? client.Put(path, body.dump(), "application/json")
                        : method == "DELETE" ? client.Delete(path)
                                             : client.Get(path);
  if (!res) throw Error(ErrorCode::TargetUnreachable, "NSSF at " + addr_.str() + ": " + httplib::to_string(res.error()));
  if (res->status / 100 != 2) throw http::error_from_response(res->status, res->body);
  return Json::parse(res->body);
}

void RemoteNssfClient::register_enb(const std::string& enb_id) { call("PUT", "/nssf/enbs/" + enb_id, Json::object()); }

void RemoteNssfClient::register_pool(const std::string& slice_id, const std::vector<std::string>& endpoints,
                                     const std::string& template_id, const std::set<std::string>& coverage) {
  call("PUT", "/nssf/pools/" + slice_id,
       Json{{"endpoints", endpoints}, {"template_id", template_id}, {"coverage", coverage}});
}

void RemoteNssfClient::update_pool(const std::string& slice_id, const std::vector<std::string>& endpoints) {
  call("PUT", "/nssf/pools/" + slice_id, Json{{"endpoints", endpoints}, {"update", true}});
}

void RemoteNssfClient::deregister_pool(const std::string& slice_id) {
  call("DELETE", "/nssf/pools/" + slice_id, Json());
}

void RemoteNssfClient::set_default_slice(const std::string& slice_id) {
  call("PUT", "/nssf/default", Json{{"slice_id", slice_id}});
}

void RemoteNssfClient::subscribe(const std::string& ue_id, const std::string& key) {
  call("PUT", "/nssf/subscriptions/" + ue_id, Json{{"key", key}});
}

std::map<std::string, std::uint64_t> RemoteNssfClient::assigned_counts(const std::string& slice_id) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& p : call("GET", "/nssf/pools", Json())) {
    if (p.at("slice_id") == slice_id) out = p.at("assigned_counts").get<std::map<std::string, std::uint64_t>>();
  }
  return out;
}

}  // namespace e2es

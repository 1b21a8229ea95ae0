#include "e2es/ran_sim.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "e2es/error.hpp"

namespace e2es {

using SteadyClock = std::chrono::steady_clock;

namespace {

double seconds_since(SteadyClock::time_point t0) {
  return std::chrono::duration<double>(SteadyClock::now() - t0).count();
}

}  // namespace

int SubframeAllocation::total() const {
  return std::accumulate(grants.begin(), grants.end(), 0, [](int acc, const auto& kv) { return acc + kv.second; });
}

MacScheduler::MacScheduler(int total_rrb, bool work_conserving)
    : total_rrb_(total_rrb), work_conserving_(work_conserving) {}

void MacScheduler::apply(const RanPartition& p) { pending_ = p; }

SubframeAllocation MacScheduler::schedule(const std::map<std::string, int>& backlog) {
  if (pending_) {
    active_ = std::move(*pending_);
    pending_.reset();
    credit_.clear();
  }

  SubframeAllocation alloc;
  alloc.subframe_index = subframe_++;

  std::vector<std::string> order;
  for (const auto& [id, share] : active_.shares) {
    credit_[id] += share * total_rrb_;
    if (active_.priority_slices.count(id)) order.push_back(id);
  }
  for (const auto& [id, share] : active_.shares) {
    if (!active_.priority_slices.count(id)) order.push_back(id);
  }

  auto want = [&](const std::string& id) {
    auto it = backlog.find(id);
    return it == backlog.end() ? 0 : std::max(0, it->second);
  };

  int remaining = total_rrb_;
  for (const auto& id : order) {
    int grant = std::min({want(id), static_cast<int>(std::floor(credit_[id] + 1e-9)), remaining});
    grant = std::max(grant, 0);
    alloc.grants[id] = grant;
    credit_[id] -= grant;
    remaining -= grant;
  }

  if (work_conserving_) {
    // Hand leftovers to backlogged slices proportionally to their shares;
    // the largest fractional claim takes the odd RRB.
    while (remaining > 0) {
      std::vector<std::string> hungry;
      double share_sum = 0.0;
      for (const auto& id : order) {
        if (want(id) > alloc.grants[id] && active_.shares[id] > 0.0) {
          hungry.push_back(id);
          share_sum += active_.shares[id];
        }
      }
      if (hungry.empty()) break;
      int handed = 0;
      std::string best;
      double best_frac = -1.0;
      const int pool = remaining;
      for (const auto& id : hungry) {
        double ideal = pool * active_.shares[id] / share_sum;
        int extra = std::min(static_cast<int>(std::floor(ideal)), want(id) - alloc.grants[id]);
        alloc.grants[id] += extra;
        handed += extra;
        double frac = ideal - std::floor(ideal);
        if (want(id) > alloc.grants[id] && frac > best_frac) {
          best_frac = frac;
          best = id;
        }
      }
      remaining -= handed;
      if (handed == 0) {
        if (best.empty()) break;
        alloc.grants[best] += 1;
        remaining -= 1;
      }
    }
  }

  for (const auto& id : order) {
    // An idle slice keeps at most one subframe's fractional carry.
    if (want(id) <= alloc.grants[id]) credit_[id] = std::min(credit_[id], 1.0);
    cumulative_[id] += static_cast<std::uint64_t>(alloc.grants[id]);
    window_[id] += static_cast<std::uint64_t>(alloc.grants[id]);
  }
  ++window_subframes_;
  return alloc;
}

std::map<std::string, double> MacScheduler::take_window() {
  std::map<std::string, double> out;
  if (window_subframes_ > 0) {
    const double capacity = static_cast<double>(window_subframes_) * total_rrb_;
    for (const auto& [id, granted] : window_) out[id] = static_cast<double>(granted) / capacity;
  }
  window_.clear();
  window_subframes_ = 0;
  return out;
}

void to_json(Json& j, const S1Association& a) {
  j = Json{{"enb_id", a.enb_id}, {"mme_endpoint", a.mme_endpoint}, {"slice_id", a.slice_id}, {"state", a.state}};
}

void from_json(const Json& j, S1Association& a) {
  a.enb_id = j.at("enb_id").get<std::string>();
  a.mme_endpoint = j.at("mme_endpoint").get<std::string>();
  a.slice_id = j.at("slice_id").get<std::string>();
  a.state = j.at("state").get<S1State>();
}

void to_json(Json& j, const AttachTrace& t) {
  j = Json{{"ue_id", t.ue_id},     {"enb_id", t.enb_id},   {"t_nssf", t.t_nssf},
           {"t_core", t.t_core},   {"t_total", t.t_total}, {"outcome", t.outcome},
           {"chosen_mme", t.chosen_mme}, {"slice_id", t.slice_id}, {"fallback", t.fallback},
           {"error", t.error}};
}

struct EnbAgent::ClientPool {
  std::mutex mu;
  std::vector<std::unique_ptr<httplib::Client>> idle;
};

EnbAgent::EnbAgent(EnbAgentConfig config)
    : config_(std::move(config)),
      scheduler_(config_.total_rrb, config_.ran.work_conserving),
      clients_(std::make_unique<ClientPool>()) {}

EnbAgent::~EnbAgent() {
  disconnect();
  std::lock_guard lock(s1_mu_);
  for (auto& [ep, assoc] : associations_) {
    if (assoc->channel) assoc->channel->close();
  }
}

void EnbAgent::connect(const HostPort& controller) {
  stopping_ = false;
  controller_ = LineChannel::connect(controller);
  controller_->send_line(southbound::hello(config_.enb_id, config_.total_rrb).dump());
  reader_ = std::thread([this, ch = controller_] { reader_loop(ch); });
  stats_thread_ = std::thread([this] { stats_loop(); });
  if (config_.ran.traffic_enabled) traffic_thread_ = std::thread([this] { traffic_loop(); });
}

void EnbAgent::disconnect() {
  {
    std::lock_guard lock(loop_mu_);
    stopping_ = true;
  }
  loop_cv_.notify_all();
  if (controller_) controller_->close();
  for (auto* t : {&reader_, &stats_thread_, &traffic_thread_}) {
    if (t->joinable()) t->join();
  }
  controller_.reset();
}

void EnbAgent::reader_loop(std::shared_ptr<LineChannel> channel) {
  try {
    for (;;) {
      auto line = channel->read_line();
      if (!line) continue;
      Json msg = Json::parse(*line, nullptr, false);
      if (msg.is_discarded()) continue;
      const auto type = msg.value("type", std::string{});
      if (type == "SET_PARTITION") {
        channel->send_line(apply_partition(msg).dump());
      } else if (type == "STATS_REQUEST") {
        channel->send_line(southbound::stats_report(report_stats()).dump());
      }
    }
  } catch (const Error&) {
  }
}

void EnbAgent::stats_loop() {
  const auto period = std::chrono::duration<double>(config_.ran.stats_period);
  std::unique_lock lock(loop_mu_);
  while (!loop_cv_.wait_for(lock, period, [&] { return stopping_.load(); })) {
    lock.unlock();
    try {
      if (auto ch = controller_) ch->send_line(southbound::stats_report(report_stats()).dump());
    } catch (const Error&) {
    }
    lock.lock();
  }
}

void EnbAgent::traffic_loop() {
  const auto tick = std::chrono::duration<double>(config_.ran.traffic_tick);
  std::unique_lock lock(loop_mu_);
  while (!loop_cv_.wait_for(lock, tick, [&] { return stopping_.load(); })) {
    lock.unlock();
    std::set<std::string> busy;
    for (const auto& ue : attached_ues()) busy.insert(ue.slice_id);
    if (!busy.empty()) run_saturated(config_.ran.subframes_per_tick, busy);
    lock.lock();
  }
}

void EnbAgent::set_nssf(const HostPort& nssf) {
  std::lock_guard lock(s1_mu_);
  nssf_ = nssf;
}

void EnbAgent::set_default_slice(const std::string& slice_id) {
  std::lock_guard lock(s1_mu_);
  default_slice_ = slice_id;
}

S1Association EnbAgent::associate_mme(const std::string& mme_endpoint, const std::string& slice_id) {
  {
    std::lock_guard lock(s1_mu_);
    auto it = associations_.find(mme_endpoint);
    if (it != associations_.end() && it->second->info.state == S1State::Up && !it->second->channel->is_closed()) {
      return it->second->info;
    }
  }

  auto assoc = std::make_shared<Association>();
  assoc->info = {config_.enb_id, mme_endpoint, slice_id, S1State::Connecting};
  std::string last_error;
  for (int attempt = 0; attempt < std::max(1, config_.s1_max_attempts); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::duration<double>(config_.s1_backoff * (1 << (attempt - 1))));
    try {
      auto channel = LineChannel::connect(HostPort::parse(mme_endpoint), 1.0);
      Json setup = {{"type", "S1_SETUP_REQUEST"}, {"enb_id", config_.enb_id}, {"slice_id", slice_id}};
      Json reply = Json::parse(channel->request(setup.dump(), 2.0));
      if (reply.value("type", "") != "S1_SETUP_RESPONSE") {
        last_error = "unexpected reply " + reply.dump();
        continue;
      }
      assoc->channel = channel;
      assoc->info.state = S1State::Up;
      break;
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }

  std::lock_guard lock(s1_mu_);
  if (assoc->info.state != S1State::Up) {
    assoc->info.state = S1State::Down;
    associations_[mme_endpoint] = assoc;
    throw Error(ErrorCode::MmeUnreachable, config_.enb_id + " -> " + mme_endpoint + ": " + last_error);
  }
  auto& slot = associations_[mme_endpoint];
  if (slot && slot->info.state == S1State::Up && !slot->channel->is_closed()) {
    // Lost a race with a concurrent association to the same endpoint.
    assoc->channel->close();
    return slot->info;
  }
  slot = assoc;
  return assoc->info;
}

void EnbAgent::disassociate_slice(const std::string& slice_id) {
  std::lock_guard lock(s1_mu_);
  for (auto it = associations_.begin(); it != associations_.end();) {
    if (it->second->info.slice_id == slice_id) {
      if (it->second->channel) it->second->channel->close();
      it = associations_.erase(it);
    } else {
      ++it;
    }
  }
}

void EnbAgent::disassociate(const std::string& mme_endpoint) {
  std::lock_guard lock(s1_mu_);
  auto it = associations_.find(mme_endpoint);
  if (it == associations_.end()) return;
  if (it->second->channel) it->second->channel->close();
  associations_.erase(it);
}

std::vector<S1Association> EnbAgent::associations() const {
  std::lock_guard lock(s1_mu_);
  std::vector<S1Association> out;
  for (const auto& [ep, assoc] : associations_) out.push_back(assoc->info);
  return out;
}

std::shared_ptr<EnbAgent::Association> EnbAgent::find_up(const std::string& mme_endpoint) const {
  std::lock_guard lock(s1_mu_);
  auto it = associations_.find(mme_endpoint);
  if (it == associations_.end() || it->second->info.state != S1State::Up) return nullptr;
  return it->second;
}

AttachTrace EnbAgent::attach_ue(const std::string& ue_id, AttachMode mode, int channel_quality) {
  AttachTrace trace;
  trace.ue_id = ue_id;
  trace.enb_id = config_.enb_id;
  const auto t0 = SteadyClock::now();
  const double budget = config_.t3410;

  auto reject = [&](ErrorCode code) {
    trace.outcome = AttachOutcome::Rejected;
    trace.error = std::string(to_string(code));
    trace.t_total = seconds_since(t0);
    return trace;
  };
  auto timeout = [&] {
    trace.outcome = AttachOutcome::Timeout;
    trace.error = std::string(to_string(ErrorCode::Timeout));
    trace.t_total = seconds_since(t0);
    return trace;
  };

  std::shared_ptr<Association> assoc;
  if (mode == AttachMode::Centralized) {
    std::optional<HostPort> nssf;
    {
      std::lock_guard lock(s1_mu_);
      nssf = nssf_;
    }
    if (!nssf) return reject(ErrorCode::TargetUnreachable);

    std::unique_ptr<httplib::Client> client;
    {
      std::lock_guard lock(clients_->mu);
      if (!clients_->idle.empty()) {
        client = std::move(clients_->idle.back());
        clients_->idle.pop_back();
      }
    }
    if (!client) {
      client = std::make_unique<httplib::Client>(nssf->host, nssf->port);
      client->set_keep_alive(true);
      client->set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(budget)));
    }
    auto left = std::chrono::duration<double>(budget);
    client->set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(left));
    auto res = client->Get("/nssf/select", httplib::Params{{"ue", ue_id}, {"enb", config_.enb_id}}, httplib::Headers{});
    trace.t_nssf = seconds_since(t0);
    if (!res) {
      if (trace.t_nssf >= budget || res.error() == httplib::Error::Read) return timeout();
      return reject(ErrorCode::TargetUnreachable);
    }
    {
      std::lock_guard lock(clients_->mu);
      clients_->idle.push_back(std::move(client));
    }
    Json body = Json::parse(res->body, nullptr, false);
    if (res->status != 200 || body.is_discarded()) {
      return reject(body.is_discarded() ? ErrorCode::Internal : error_code_from_string(body.value("error", "")));
    }
    trace.slice_id = body.at("slice_id").get<std::string>();
    trace.chosen_mme = body.at("mme_endpoint").get<std::string>();
    trace.fallback = body.value("fallback", false);
    // Selection ends once the reply is decoded, not when the bytes arrive.
    trace.t_nssf = seconds_since(t0);
    if (trace.t_nssf > budget) return timeout();
    assoc = find_up(trace.chosen_mme);
  } else {
    std::lock_guard lock(s1_mu_);
    for (const auto& [ep, a] : associations_) {
      if (a->info.slice_id == default_slice_ && a->info.state == S1State::Up) {
        assoc = a;
        break;
      }
    }
    if (assoc) {
      trace.slice_id = assoc->info.slice_id;
      trace.chosen_mme = assoc->info.mme_endpoint;
    }
  }
  if (!assoc) return reject(ErrorCode::NoAssociation);

  const auto t1 = SteadyClock::now();
  try {
    Json req = {{"type", "ATTACH_REQUEST"}, {"ue_id", ue_id}, {"enb_id", config_.enb_id}};
    double remaining = std::max(0.001, budget - seconds_since(t0));
    Json reply = Json::parse(assoc->channel->request(req.dump(), remaining));
    trace.t_core = seconds_since(t1);
    if (reply.value("type", "") != "ATTACH_ACCEPT") return reject(ErrorCode::Internal);
  } catch (const Error& e) {
    trace.t_core = seconds_since(t1);
    if (e.code() == ErrorCode::Timeout) return timeout();
    return reject(ErrorCode::MmeUnreachable);
  }
  trace.t_total = seconds_since(t0);
  if (trace.t_total > budget) return timeout();
  trace.outcome = AttachOutcome::Attached;
  std::lock_guard lock(ue_mu_);
  ues_[ue_id] = {ue_id, trace.slice_id, channel_quality};
  return trace;
}

void EnbAgent::detach_ue(const std::string& ue_id) {
  std::lock_guard lock(ue_mu_);
  ues_.erase(ue_id);
}

std::vector<AttachedUe> EnbAgent::attached_ues() const {
  std::lock_guard lock(ue_mu_);
  std::vector<AttachedUe> out;
  for (const auto& [id, ue] : ues_) out.push_back(ue);
  return out;
}

Json EnbAgent::apply_partition(const Json& msg) {
  RanPartition p = southbound::parse_set_partition(msg);
  p.enb_id = config_.enb_id;
  std::lock_guard lock(mac_mu_);
  if (p.version <= partition_version_) {
    return southbound::nack(p.version, "VERSION_CONFLICT held=" + std::to_string(partition_version_));
  }
  partition_version_ = p.version;
  scheduler_.apply(p);
  return southbound::ack(p.version);
}

std::uint64_t EnbAgent::partition_version() const {
  std::lock_guard lock(mac_mu_);
  return partition_version_;
}

SubframeAllocation EnbAgent::schedule_subframe(const std::map<std::string, int>& demand) {
  std::lock_guard lock(mac_mu_);
  auto alloc = scheduler_.schedule(demand);
  alloc.enb_id = config_.enb_id;
  return alloc;
}

void EnbAgent::run_saturated(int n, const std::set<std::string>& saturate) {
  std::lock_guard lock(mac_mu_);
  for (int i = 0; i < n; ++i) {
    std::map<std::string, int> demand;
    if (saturate.empty()) {
      for (const auto& [id, share] : scheduler_.next_partition().shares) demand[id] = scheduler_.total_rrb();
    } else {
      for (const auto& id : saturate) demand[id] = scheduler_.total_rrb();
    }
    scheduler_.schedule(demand);
  }
}

RanPartition EnbAgent::active_partition() const {
  std::lock_guard lock(mac_mu_);
  return scheduler_.active_partition();
}

std::map<std::string, std::uint64_t> EnbAgent::cumulative_grants() const {
  std::lock_guard lock(mac_mu_);
  return scheduler_.cumulative_grants();
}

StatsReport EnbAgent::report_stats() {
  StatsReport r;
  {
    std::lock_guard lock(mac_mu_);
    r.seq = ++stats_seq_;
    r.granted_shares = scheduler_.take_window();
  }
  r.ues = attached_ues();
  return r;
}

EnbFleet::EnbFleet(const Topology& topology, const RunConfig& config) {
  for (const auto& enb : topology.enbs) {
    EnbAgentConfig c;
    c.enb_id = enb.enb_id;
    c.total_rrb = enb.total_rrb;
    c.ran = config.ran;
    c.s1_max_attempts = config.s1_max_attempts;
    c.s1_backoff = config.s1_backoff;
    c.t3410 = config.t3410;
    agents_[enb.enb_id] = std::make_unique<EnbAgent>(c);
  }
}

EnbFleet::~EnbFleet() { stop(); }

void EnbFleet::connect_all(const HostPort& controller) {
  for (auto& [id, agent] : agents_) agent->connect(controller);
}

void EnbFleet::set_nssf(const HostPort& nssf) {
  for (auto& [id, agent] : agents_) agent->set_nssf(nssf);
}

void EnbFleet::stop() {
  for (auto& [id, agent] : agents_) agent->disconnect();
}

EnbAgent& EnbFleet::agent(const std::string& enb_id) {
  auto it = agents_.find(enb_id);
  if (it == agents_.end()) throw Error(ErrorCode::UnknownEnb, enb_id);
  return *it->second;
}

std::vector<std::string> EnbFleet::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, agent] : agents_) out.push_back(id);
  return out;
}

S1Association EnbFleet::associate(const std::string& enb_id, const std::string& mme_endpoint,
                                  const std::string& slice_id) {
  return agent(enb_id).associate_mme(mme_endpoint, slice_id);
}

void EnbFleet::disassociate(const std::string& enb_id, const std::string& slice_id) {
  agent(enb_id).disassociate_slice(slice_id);
}

void EnbFleet::disassociate_endpoint(const std::string& enb_id, const std::string& mme_endpoint) {
  agent(enb_id).disassociate(mme_endpoint);
}

void EnbFleet::set_default_slice(const std::string& slice_id) {
  for (auto& [id, agent] : agents_) agent->set_default_slice(slice_id);
}

std::vector<S1Association> EnbFleet::associations(const std::string& enb_id) const {
  auto it = agents_.find(enb_id);
  if (it == agents_.end()) throw Error(ErrorCode::UnknownEnb, enb_id);
  return it->second->associations();
}

}  // namespace e2es

#include "e2es/ran_nssmf.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

#include "e2es/error.hpp"

namespace e2es {

double RanPartition::total() const {
  return std::accumulate(shares.begin(), shares.end(), 0.0, [](double acc, const auto& kv) { return acc + kv.second; });
}

RanPartition compute_partition(const CellState& cell, double default_floor) {
  RanPartition p;
  p.enb_id = cell.enb_id;
  const std::string& def = cell.default_slice;

  double min_sum = 0.0;
  double weight_sum = 0.0;
  std::size_t dedicated = 0;
  for (const auto& [id, req] : cell.participating_slices) {
    if (id == def) continue;
    min_sum += req.min_rrb_fraction;
    weight_sum += req.weight;
    ++dedicated;
  }
  if (dedicated == 0) {
    p.shares[def] = 1.0;
    return p;
  }
  if (min_sum + default_floor > 1.0 + 1e-12) {
    throw Error(ErrorCode::Infeasible, "cell " + cell.enb_id + ": minimum shares " + std::to_string(min_sum) +
                                           " plus default floor " + std::to_string(default_floor) + " exceed 1");
  }

  const double residual = std::max(0.0, 1.0 - default_floor - min_sum);
  p.shares[def] = default_floor;
  for (const auto& [id, req] : cell.participating_slices) {
    if (id == def) continue;
    p.shares[id] = req.min_rrb_fraction + residual * (req.weight / weight_sum);
    if (req.latency_class == LatencyClass::Strict) p.priority_slices.insert(id);
  }
  return p;
}

namespace southbound {

Json hello(const std::string& enb_id, int total_rrb) {
  return {{"type", "HELLO"}, {"enb_id", enb_id}, {"total_rrb", total_rrb}};
}

Json stats_request() { return {{"type", "STATS_REQUEST"}}; }

Json stats_report(const StatsReport& r) {
  return {{"type", "STATS_REPORT"}, {"seq", r.seq}, {"ues", r.ues}, {"granted_shares", r.granted_shares}};
}

Json set_partition(const RanPartition& p) {
  Json priorities = Json::object();
  for (const auto& [id, share] : p.shares) priorities[id] = p.priority_slices.count(id) ? 1 : 0;
  return {{"type", "SET_PARTITION"}, {"version", p.version}, {"shares", p.shares}, {"priorities", priorities}};
}

Json ack(std::uint64_t version) { return {{"type", "ACK"}, {"version", version}}; }

Json nack(std::uint64_t version, const std::string& reason) {
  return {{"type", "NACK"}, {"version", version}, {"reason", reason}};
}

StatsReport parse_stats_report(const Json& j) {
  StatsReport r;
  r.seq = j.at("seq").get<std::uint64_t>();
  r.ues = j.value("ues", std::vector<AttachedUe>{});
  r.granted_shares = j.value("granted_shares", std::map<std::string, double>{});
  return r;
}

RanPartition parse_set_partition(const Json& j) {
  RanPartition p;
  p.version = j.at("version").get<std::uint64_t>();
  p.shares = j.at("shares").get<std::map<std::string, double>>();
  const Json priorities = j.value("priorities", Json::object());
  for (const auto& [id, prio] : priorities.items()) {
    if (prio.get<int>() != 0) p.priority_slices.insert(id);
  }
  return p;
}

}  // namespace southbound

RanNssmf::RanNssmf(RanConfig config, double default_floor) : config_(config), default_floor_(default_floor) {}

RanNssmf::~RanNssmf() { stop(); }

HostPort RanNssmf::listen(const HostPort& addr) {
  server_ = std::make_unique<LineServer>([this](std::shared_ptr<LineChannel> ch) { serve_agent(std::move(ch)); });
  return server_->listen(addr);
}

void RanNssmf::stop() {
  if (server_) server_->stop();
}

void RanNssmf::register_enb(const std::string& enb_id, int total_rrb) {
  if (total_rrb <= 0) throw Error(ErrorCode::InvalidArgument, "total_rrb must be positive");
  std::unique_lock lock(cells_mu_);
  auto& cell = cells_[enb_id];
  if (!cell) {
    cell = std::make_shared<Cell>();
    cell->state.enb_id = enb_id;
    cell->state.default_slice = default_slice_;
    cell->current.enb_id = enb_id;
    cell->current.shares[default_slice_] = 1.0;
  }
  std::lock_guard cl(cell->mu);
  cell->state.total_rrb = total_rrb;
  cell->state.last_seq = 0;
  cell->state.last_report.reset();
  cell->state.attached_ues.clear();
  cell->state.granted_shares.clear();
}

std::shared_ptr<RanNssmf::Cell> RanNssmf::find_cell(const std::string& enb_id) const {
  std::shared_lock lock(cells_mu_);
  auto it = cells_.find(enb_id);
  if (it == cells_.end()) throw Error(ErrorCode::UnknownEnb, enb_id);
  return it->second;
}

bool RanNssmf::ingest_stats(const std::string& enb_id, const StatsReport& report) {
  auto cell = find_cell(enb_id);
  {
    std::lock_guard lock(cell->mu);
    if (report.seq <= cell->state.last_seq) return false;
    cell->state.last_seq = report.seq;
    cell->state.attached_ues = report.ues;
    cell->state.granted_shares = report.granted_shares;
    cell->state.last_report = std::chrono::steady_clock::now();
  }
  cell->stats_cv.notify_all();
  return true;
}

void RanNssmf::set_default_slice(const std::string& slice_id) {
  std::unique_lock lock(cells_mu_);
  default_slice_ = slice_id;
  for (auto& [id, cell] : cells_) {
    std::lock_guard cl(cell->mu);
    cell->state.default_slice = slice_id;
  }
}

std::string RanNssmf::default_slice() const {
  std::shared_lock lock(cells_mu_);
  return default_slice_;
}

CellState RanNssmf::cell(const std::string& enb_id) const {
  auto c = find_cell(enb_id);
  std::lock_guard lock(c->mu);
  return c->state;
}

std::vector<std::string> RanNssmf::enbs() const {
  std::shared_lock lock(cells_mu_);
  std::vector<std::string> out;
  for (const auto& [id, cell] : cells_) out.push_back(id);
  return out;
}

RanPartition RanNssmf::current_partition(const std::string& enb_id) const {
  auto c = find_cell(enb_id);
  std::lock_guard lock(c->mu);
  return c->current;
}

bool RanNssmf::agent_connected(const std::string& enb_id) const {
  try {
    auto c = find_cell(enb_id);
    std::lock_guard lock(c->mu);
    return c->agent != nullptr;
  } catch (const Error&) {
    return false;
  }
}

bool RanNssmf::wait_for_agents(const std::set<std::string>& enb_ids, double timeout_s) const {
  auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  for (;;) {
    bool all = std::all_of(enb_ids.begin(), enb_ids.end(), [&](const auto& id) { return agent_connected(id); });
    if (all) return true;
    if (std::chrono::steady_clock::now() > deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

std::uint64_t RanNssmf::enforce_partition(const RanPartition& p) {
  auto cell = find_cell(p.enb_id);
  const auto msg = southbound::set_partition(p).dump();
  for (int attempt = 0; attempt < std::max(1, config_.enforce_max_attempts); ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(config_.enforce_backoff * (1 << (attempt - 1))));
    }
    std::shared_ptr<LineChannel> agent;
    std::future<Json> reply;
    {
      std::lock_guard lock(cell->mu);
      agent = cell->agent;
      if (!agent) continue;
      std::promise<Json> promise;
      reply = promise.get_future();
      cell->pending[p.version] = std::move(promise);
    }
    try {
      agent->send_line(msg);
    } catch (const Error&) {
      std::lock_guard lock(cell->mu);
      cell->pending.erase(p.version);
      continue;
    }
    if (reply.wait_for(std::chrono::duration<double>(config_.ack_timeout)) != std::future_status::ready) {
      std::lock_guard lock(cell->mu);
      cell->pending.erase(p.version);
      continue;
    }
    Json verdict = reply.get();
    const auto type = verdict.value("type", std::string{});
    if (type == "ACK") return verdict.at("version").get<std::uint64_t>();
    if (type == "NACK") {
      // reason is "VERSION_CONFLICT held=<n>"; the held version is advisory.
      std::uint64_t held = p.version;
      const auto reason = verdict.value("reason", std::string{});
      if (auto pos = reason.find("held="); pos != std::string::npos) {
        held = std::max<std::uint64_t>(held, std::stoull(reason.substr(pos + 5)));
      }
      std::lock_guard lock(cell->mu);
      cell->next_version = std::max(cell->next_version, held);
      throw Error(ErrorCode::VersionConflict, "agent " + p.enb_id + " holds version " + std::to_string(held) +
                                                  ", rejected " + std::to_string(p.version));
    }
    // DISCONNECTED: the agent dropped mid-exchange; retry.
  }
  throw Error(ErrorCode::AgentUnreachable, p.enb_id + " after " + std::to_string(config_.enforce_max_attempts) + " attempts");
}

RanPartition RanNssmf::reconfigure(const std::string& enb_id,
                                   const std::function<void(std::map<std::string, RanRequirement>&)>& mutate,
                                   bool commit_on_failure) {
  auto cell = find_cell(enb_id);
  std::lock_guard op(cell->op_mu);
  CellState next;
  {
    std::lock_guard lock(cell->mu);
    next = cell->state;
  }
  next.default_slice = default_slice();
  mutate(next.participating_slices);
  RanPartition p = compute_partition(next, default_floor_);

  auto commit = [&](bool with_partition) {
    std::lock_guard lock(cell->mu);
    cell->state.participating_slices = next.participating_slices;
    if (with_partition) cell->current = p;
  };

  constexpr int kConflictRetries = 3;
  for (int i = 0; i < kConflictRetries; ++i) {
    {
      std::lock_guard lock(cell->mu);
      p.version = ++cell->next_version;
    }
    try {
      p.version = enforce_partition(p);
      commit(true);
      return p;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::VersionConflict) continue;
      if (commit_on_failure) commit(false);
      throw;
    }
  }
  if (commit_on_failure) commit(false);
  throw Error(ErrorCode::VersionConflict, "cell " + enb_id + " kept rejecting partitions");
}

RanPartition RanNssmf::add_slice(const std::string& enb_id, const std::string& slice_id, const RanRequirement& req) {
  return reconfigure(enb_id, [&](auto& slices) { slices[slice_id] = req; }, false);
}

RanPartition RanNssmf::remove_slice(const std::string& enb_id, const std::string& slice_id) {
  return reconfigure(enb_id, [&](auto& slices) { slices.erase(slice_id); }, true);
}

RanPartition RanNssmf::refresh(const std::string& enb_id) {
  return reconfigure(enb_id, [](auto&) {}, false);
}

CellState RanNssmf::request_stats(const std::string& enb_id, double timeout_s) {
  auto cell = find_cell(enb_id);
  std::shared_ptr<LineChannel> agent;
  std::uint64_t seen = 0;
  {
    std::lock_guard lock(cell->mu);
    agent = cell->agent;
    seen = cell->state.last_seq;
  }
  if (!agent) throw Error(ErrorCode::AgentUnreachable, enb_id);
  agent->send_line(southbound::stats_request().dump());
  std::unique_lock lock(cell->mu);
  cell->stats_cv.wait_for(lock, std::chrono::duration<double>(timeout_s),
                          [&] { return cell->state.last_seq > seen; });
  return cell->state;
}

void RanNssmf::serve_agent(std::shared_ptr<LineChannel> channel) {
  auto first = channel->read_line(5.0);
  if (!first) return;
  Json hello = Json::parse(*first, nullptr, false);
  if (hello.is_discarded() || hello.value("type", "") != "HELLO") return;
  const auto enb_id = hello.at("enb_id").get<std::string>();
  register_enb(enb_id, hello.at("total_rrb").get<int>());
  auto cell = find_cell(enb_id);
  {
    std::lock_guard lock(cell->mu);
    if (cell->agent && cell->agent != channel) cell->agent->close();
    cell->agent = channel;
  }

  try {
    for (;;) {
      auto line = channel->read_line();
      if (!line) continue;
      Json msg = Json::parse(*line, nullptr, false);
      if (msg.is_discarded()) continue;
      const auto type = msg.value("type", std::string{});
      if (type == "STATS_REPORT") {
        ingest_stats(enb_id, southbound::parse_stats_report(msg));
      } else if (type == "ACK" || type == "NACK") {
        auto key = msg.value("version", std::uint64_t{0});
        std::lock_guard lock(cell->mu);
        auto it = cell->pending.find(key);
        if (it != cell->pending.end()) {
          it->second.set_value(msg);
          cell->pending.erase(it);
        }
      }
    }
  } catch (const Error&) {
  }

  std::lock_guard lock(cell->mu);
  if (cell->agent == channel) {
    cell->agent.reset();
    for (auto& [version, promise] : cell->pending) promise.set_value(Json{{"type", "DISCONNECTED"}});
    cell->pending.clear();
  }
}

void to_json(Json& j, const RanPartition& p) {
  j = Json{{"enb_id", p.enb_id},
           {"shares", p.shares},
           {"priority_slices", p.priority_slices},
           {"version", p.version}};
}

void from_json(const Json& j, RanPartition& p) {
  p.enb_id = j.at("enb_id").get<std::string>();
  p.shares = j.at("shares").get<std::map<std::string, double>>();
  p.priority_slices = j.value("priority_slices", std::set<std::string>{});
  p.version = j.at("version").get<std::uint64_t>();
}

void to_json(Json& j, const AttachedUe& u) {
  j = Json{{"ue_id", u.ue_id}, {"slice_id", u.slice_id}, {"channel_quality", u.channel_quality}};
}

void from_json(const Json& j, AttachedUe& u) {
  u.ue_id = j.at("ue_id").get<std::string>();
  u.slice_id = j.at("slice_id").get<std::string>();
  u.channel_quality = j.value("channel_quality", 10);
}

}  // namespace e2es

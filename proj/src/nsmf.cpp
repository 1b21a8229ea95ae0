#include "e2es/nsmf.hpp"

#include <algorithm>
#include <charconv>

#include "e2es/error.hpp"
#include "http_util.hpp"

namespace e2es {

using SteadyClock = std::chrono::steady_clock;

namespace {

double seconds_since(SteadyClock::time_point t0) {
  return std::chrono::duration<double>(SteadyClock::now() - t0).count();
}

// Numeric suffix of "<prefix>-<n>", if any.
std::optional<std::uint64_t> id_suffix(const std::string& id, const std::string& prefix) {
  if (id.size() <= prefix.size() + 1 || id.compare(0, prefix.size() + 1, prefix + "-") != 0) return std::nullopt;
  std::uint64_t n = 0;
  const char* first = id.data() + prefix.size() + 1;
  const char* last = id.data() + id.size();
  auto [ptr, ec] = std::from_chars(first, last, n);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return n;
}

// Step that would have followed the last journaled event.
std::string pending_step(Phase p) {
  switch (p) {
    case Phase::Requested:
    case Phase::CoreDeploying: return "core";
    case Phase::CoreReady: return "s1";
    case Phase::S1Associating:
    case Phase::RanConfiguring: return "ran";
    case Phase::Active: return "substrate";
    default: return "none";
  }
}

}  // namespace

void to_json(Json& j, const SliceRequest& r) {
  j = Json{{"template_id", r.template_id},
           {"service_area_ids", r.service_area_ids},
           {"owner", r.owner},
           {"reliability_level", r.reliability_level}};
  if (r.lifespan) j["lifespan"] = *r.lifespan;
  if (r.requirement_overrides) j["requirement_overrides"] = *r.requirement_overrides;
}

void from_json(const Json& j, SliceRequest& r) {
  r = {};
  r.template_id = j.at("template_id").get<std::string>();
  r.service_area_ids = j.at("service_area_ids").get<std::vector<std::string>>();
  if (j.contains("lifespan") && !j.at("lifespan").is_null()) r.lifespan = j.at("lifespan").get<double>();
  r.owner = j.value("owner", "");
  if (j.contains("requirement_overrides") && !j.at("requirement_overrides").is_null()) {
    r.requirement_overrides = j.at("requirement_overrides").get<RanRequirementOverride>();
  }
  if (j.contains("reliability_level")) {
    r.reliability_level = enum_from_string<ReliabilityLevel>(j.at("reliability_level").get<std::string>());
  }
}

CompositionPlan compose_slice(const std::string& slice_id, const SliceRequest& req, const SliceTemplate& t,
                              const Topology& topology, const std::set<std::string>& registered_nssmfs) {
  if (req.service_area_ids.empty()) throw Error(ErrorCode::InvalidArgument, "service_area_ids must not be empty");
  CompositionPlan plan;
  plan.slice_id = slice_id;
  plan.template_id = t.template_id;
  for (const auto& area : req.service_area_ids) {
    auto it = topology.areas.find(area);
    if (it == topology.areas.end()) throw Error(ErrorCode::UnknownServiceArea, area);
    plan.enb_set.insert(it->second.enb_ids.begin(), it->second.enb_ids.end());
  }
  if (!registered_nssmfs.count(t.core_nssmf_selector)) {
    throw Error(ErrorCode::NssmfUnregistered, t.core_nssmf_selector);
  }
  plan.core_nssmf = t.core_nssmf_selector;
  for (const auto& v : t.vnfs) {
    int replicas = v.min_replicas;
    if (req.reliability_level == ReliabilityLevel::High && v.role == VnfRole::Mme) replicas = std::max(replicas, 2);
    plan.vnf_plan.push_back({v, replicas});
  }
  plan.ran_requirement =
      req.requirement_overrides ? req.requirement_overrides->apply(t.ran_requirements) : t.ran_requirements;
  plan.virtualization_kind = t.virtualization_kind;
  plan.chain = forwarding_chain(t);
  plan.elasticity = t.elasticity;
  return plan;
}

void to_json(Json& j, const StepReport& s) {
  j = Json{{"step", s.step}, {"duration", s.duration}, {"ok", s.ok}};
  if (!s.ok) j["error"] = s.error;
}

void to_json(Json& j, const TerminationReport& r) {
  j = Json{{"slice_id", r.slice_id},
           {"cause", r.cause},
           {"already_terminated", r.already_terminated},
           {"state", r.phase},
           {"steps", r.steps}};
}

void to_json(Json& j, const CellMonitoring& c) {
  j = Json{{"granted_share", c.granted_share}, {"partition_share", c.partition_share}, {"attached_ues", c.attached_ues}};
}

void to_json(Json& j, const MonitoringSnapshot& m) {
  j = Json{{"slice_id", m.slice_id},
           {"cells", m.cells},
           {"attached_ue_count", m.attached_ue_count},
           {"mme_assigned", m.mme_assigned},
           {"vepc_uptime", m.vepc_uptime}};
}

Nsmf::Nsmf(NsmfDeps deps, RunConfig config, std::shared_ptr<Journal> journal)
    : deps_(deps),
      config_(std::move(config)),
      journal_(std::move(journal)),
      epoch0_(std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count()),
      steady0_(SteadyClock::now()) {}

Nsmf::~Nsmf() { stop(); }

void Nsmf::stop() {
  stopping_ = true;
  state_cv_.notify_all();
  if (timer_.joinable()) timer_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(state_mu_);
    workers.swap(workers_);
  }
  for (auto& w : workers) w.join();
  if (journal_) journal_->flush();
}

double Nsmf::now(const Slice& s) const { return epoch0_ + seconds_since(steady0_) + s.sim_offset; }

std::shared_ptr<Nsmf::Slice> Nsmf::find(const std::string& slice_id) const {
  std::shared_lock lock(mu_);
  auto it = slices_.find(slice_id);
  if (it == slices_.end()) throw Error(ErrorCode::UnknownSlice, slice_id);
  return it->second;
}

SliceEvent Nsmf::emit(Slice& s, EventKind kind, Json payload) {
  SliceEvent e;
  e.slice_id = s.plan.slice_id;
  {
    std::lock_guard lock(s.mu);
    e.timestamp = now(s);
  }
  e.kind = kind;
  e.payload = std::move(payload);
  e = journal_->append(std::move(e));
  {
    std::lock_guard lock(s.mu);
    auto next = phase_after(s.phase, kind, s.events.empty());
    if (!next) throw Error(ErrorCode::Internal, "lifecycle violation in " + e.slice_id);
    s.phase = *next;
    s.events.push_back(e);
  }
  {
    std::lock_guard lock(state_mu_);
  }
  state_cv_.notify_all();
  return e;
}

std::string Nsmf::next_id(const std::string& prefix) {
  std::unique_lock lock(mu_);
  if (prefix == "default" && !slices_.count("default")) return "default";
  auto& n = counters_[prefix];
  if (prefix == "default" && n < 1) n = 1;
  return prefix + "-" + std::to_string(++n);
}

std::string Nsmf::submit(const SliceRequest& req) {
  if (deps_.catalogue->size() == 0) throw Error(ErrorCode::CatalogueEmpty, "no templates loaded");
  auto tmpl = deps_.catalogue->find(req.template_id);
  if (!tmpl) throw Error(ErrorCode::UnknownTemplate, req.template_id);
  if (req.lifespan && !(*req.lifespan > 0)) throw Error(ErrorCode::InvalidArgument, "lifespan must be positive");
  if (stopping_) throw Error(ErrorCode::Internal, "shutting down");

  // Validate before allocating an id so rejected requests leave no trace.
  compose_slice("", req, *tmpl, *deps_.topology, deps_.cores->selectors());
  const std::string id = next_id("slice");
  auto s = std::make_shared<Slice>();
  s->request = req;
  s->tmpl = *tmpl;
  s->plan = compose_slice(id, req, *tmpl, *deps_.topology, deps_.cores->selectors());
  s->lifespan = req.lifespan.value_or(tmpl->default_lifespan);
  s->kind = SliceKind::Dedicated;
  {
    std::unique_lock lock(mu_);
    slices_[id] = s;
  }
  {
    std::lock_guard op(s->op_mu);
    emit(*s, EventKind::RequestAccepted,
         Json{{"template_id", req.template_id},
              {"kind", SliceKind::Dedicated},
              {"service_areas", req.service_area_ids},
              {"enb_set", s->plan.enb_set},
              {"ran_subslice_id", "ran-" + id},
              {"request", req},
              {"plan", s->plan}});
  }
  std::lock_guard lock(state_mu_);
  ++in_flight_;
  workers_.emplace_back([this, s] { run_workflow(s); });
  return id;
}

void Nsmf::run_workflow(std::shared_ptr<Slice> s) {
  const std::string id = s->plan.slice_id;
  std::string step = "core";
  {
    std::lock_guard op(s->op_mu);
    try {
      CoreNssmf& core = deps_.cores->get(s->plan.core_nssmf);
      emit(*s, EventKind::CoreDeployStarted, Json{{"core_nssmf", s->plan.core_nssmf}});
      const auto w0 = SteadyClock::now();
      VepcRecord rec = core.instantiate_vepc(s->plan);
      const double wall = seconds_since(w0);
      {
        std::lock_guard lock(s->mu);
        s->sim_offset += std::max(0.0, rec.deploy_duration - wall);
        s->core_deployed = true;
        s->vepc = rec;
      }
      emit(*s, EventKind::CoreReady, Json{{"vepc", rec}});

      step = "s1";
      Json associations = Json::array();
      for (const auto& enb : s->plan.enb_set) {
        for (const auto& mme : rec.mme_endpoints) {
          S1Association a = deps_.s1->associate(enb, mme, id);
          s->associated.insert(enb);
          associations.push_back(a);
        }
      }
      emit(*s, EventKind::S1Associated, Json{{"associations", associations}});

      step = "ran";
      Json partitions = Json::object();
      for (const auto& enb : s->plan.enb_set) {
        RanPartition p = deps_.ran->add_slice(enb, id, s->plan.ran_requirement);
        s->partitioned.insert(enb);
        partitions[enb] = p;
      }
      emit(*s, EventKind::RanPartitionApplied, Json{{"partitions", partitions}});

      step = "transport";
      s->path = deps_.transport->stitch(id, s->plan.enb_set, rec, s->plan.chain);
      step = "nssf";
      deps_.nssf->register_pool(id, rec.mme_endpoints, s->plan.template_id, s->plan.enb_set);
      s->pool_registered = true;

      double activation = 0.0;
      {
        std::lock_guard lock(s->mu);
        activation = now(*s);
      }
      emit(*s, EventKind::Activated,
           Json{{"transport_path", *s->path},
                {"activation_time", activation},
                {"termination_time", s->lifespan > 0 ? Json(activation + s->lifespan) : Json()}});
      std::lock_guard lock(s->mu);
      s->activated_at = SteadyClock::now();
    } catch (const std::exception& ex) {
      if (!stopping_) {
        const Error* err = dynamic_cast<const Error*>(&ex);
        auto compensated = compensate(*s);
        try {
          emit(*s, EventKind::Failed,
               Json{{"failed_step", step},
                    {"error", std::string(to_string(err ? err->code() : ErrorCode::Internal))},
                    {"message", err ? err->detail() : std::string(ex.what())},
                    {"compensated", compensated}});
        } catch (const std::exception&) {
        }
      }
    }
  }
  std::lock_guard lock(state_mu_);
  --in_flight_;
  state_cv_.notify_all();
}

std::vector<std::string> Nsmf::compensate(Slice& s) {
  const std::string id = s.plan.slice_id;
  std::vector<std::string> done;
  auto attempt = [&](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception&) {
    }
    done.push_back(name);
  };
  if (s.pool_registered) {
    attempt("nssf_deregister", [&] { deps_.nssf->deregister_pool(id); });
    s.pool_registered = false;
  }
  if (s.path) {
    attempt("transport_teardown", [&] { deps_.transport->teardown_path(s.path->path_id); });
    s.path.reset();
  }
  if (!s.partitioned.empty()) {
    attempt("ran_remove", [&] {
      for (const auto& enb : s.partitioned) deps_.ran->remove_slice(enb, id);
    });
    s.partitioned.clear();
  }
  if (!s.associated.empty()) {
    attempt("s1_disassociate", [&] {
      for (const auto& enb : s.associated) deps_.s1->disassociate(enb, id);
    });
    s.associated.clear();
  }
  if (s.core_deployed) {
    attempt("core_teardown", [&] { deps_.cores->get(s.plan.core_nssmf).teardown_vepc(id); });
    s.core_deployed = false;
  }
  return done;
}

TerminationReport Nsmf::terminate(const std::string& slice_id, TerminationCause cause) {
  auto s = find(slice_id);
  if (s->kind == SliceKind::Default) throw Error(ErrorCode::DefaultSliceProtected, slice_id);
  TerminationReport report;
  report.slice_id = slice_id;
  report.cause = cause;
  auto current = [&] {
    std::lock_guard lock(s->mu);
    return s->phase;
  };
  auto already = [&](Phase p) {
    return p == Phase::Terminating || p == Phase::Terminated || p == Phase::Failed;
  };

  Phase p = current();
  if (already(p)) {
    report.already_terminated = true;
    report.phase = p;
    return report;
  }
  if (cause == TerminationCause::Explicit && p != Phase::Active) throw Error(ErrorCode::SliceNotActive, slice_id);

  std::lock_guard op(s->op_mu);
  p = current();
  if (already(p) || p != Phase::Active) {
    // Lost the race with the timer or an explicit call.
    report.already_terminated = true;
    report.phase = p;
    return report;
  }
  emit(*s, EventKind::TerminationStarted, Json{{"cause", cause}});

  auto timed = [&](const std::string& name, auto&& fn) {
    StepReport r;
    r.step = name;
    const auto t0 = SteadyClock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    r.duration = seconds_since(t0);
    report.steps.push_back(r);
  };
  if (s->pool_registered) {
    timed("nssf_deregister", [&] { deps_.nssf->deregister_pool(slice_id); });
    s->pool_registered = false;
  }
  timed("ran_remove", [&] {
    for (const auto& enb : s->partitioned) deps_.ran->remove_slice(enb, slice_id);
  });
  s->partitioned.clear();
  timed("s1_disassociate", [&] {
    for (const auto& enb : s->associated) deps_.s1->disassociate(enb, slice_id);
  });
  s->associated.clear();
  timed("core_teardown", [&] { deps_.cores->get(s->plan.core_nssmf).teardown_vepc(slice_id); });
  s->core_deployed = false;
  timed("transport_teardown", [&] {
    if (s->path) deps_.transport->teardown_path(s->path->path_id);
  });
  s->path.reset();

  emit(*s, EventKind::Terminated, Json{{"cause", cause}, {"steps", report.steps}});
  report.phase = Phase::Terminated;
  return report;
}

SliceStatus Nsmf::status(const std::string& slice_id) const {
  auto s = find(slice_id);
  std::lock_guard lock(s->mu);
  return status_from_events(s->events);
}

MonitoringSnapshot Nsmf::monitoring(const std::string& slice_id) {
  auto s = find(slice_id);
  std::set<std::string> enbs;
  std::vector<std::string> mmes;
  std::string selector;
  {
    std::lock_guard lock(s->mu);
    if (s->phase != Phase::Active) throw Error(ErrorCode::SliceNotActive, slice_id);
    enbs = s->plan.enb_set;
    if (s->vepc) mmes = s->vepc->mme_endpoints;
    selector = s->plan.core_nssmf;
  }
  MonitoringSnapshot m;
  m.slice_id = slice_id;
  for (const auto& enb : enbs) {
    CellState cell;
    try {
      cell = deps_.ran->request_stats(enb, 1.0);
    } catch (const Error&) {
      cell = deps_.ran->cell(enb);
    }
    CellMonitoring c;
    if (auto it = cell.granted_shares.find(slice_id); it != cell.granted_shares.end()) c.granted_share = it->second;
    auto part = deps_.ran->current_partition(enb);
    if (auto it = part.shares.find(slice_id); it != part.shares.end()) c.partition_share = it->second;
    c.attached_ues = static_cast<int>(
        std::count_if(cell.attached_ues.begin(), cell.attached_ues.end(), [&](const auto& u) { return u.slice_id == slice_id; }));
    m.attached_ue_count += c.attached_ues;
    m.cells[enb] = c;
  }
  for (const auto& ep : mmes) m.mme_assigned[ep] = 0;
  for (const auto& [ep, n] : deps_.nssf->assigned_counts(slice_id)) m.mme_assigned[ep] = n;
  if (deps_.cores->contains(selector)) m.vepc_uptime = deps_.cores->get(selector).uptime(slice_id).value_or(0.0);
  return m;
}

VepcRecord Nsmf::scale(const std::string& slice_id, VnfRole role, int replicas) {
  auto s = find(slice_id);
  std::lock_guard op(s->op_mu);
  {
    std::lock_guard lock(s->mu);
    if (s->phase != Phase::Active) throw Error(ErrorCode::SliceNotActive, slice_id);
  }
  VepcRecord rec = deps_.cores->get(s->plan.core_nssmf).scale_replicas(slice_id, role, replicas);
  std::lock_guard lock(s->mu);
  s->vepc = rec;
  return rec;
}

std::vector<std::string> Nsmf::slice_ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : slices_) out.push_back(id);
  return out;
}

std::string Nsmf::default_slice_id() const {
  std::shared_lock lock(mu_);
  return default_id_;
}

bool Nsmf::wait_for(const std::string& slice_id, const std::set<Phase>& phases, double timeout_s) const {
  auto s = find(slice_id);
  std::unique_lock lock(state_mu_);
  return state_cv_.wait_for(lock, std::chrono::duration<double>(timeout_s), [&] {
    std::lock_guard sl(s->mu);
    return phases.count(s->phase) > 0;
  });
}

void Nsmf::drain() {
  std::unique_lock lock(state_mu_);
  state_cv_.wait(lock, [&] { return in_flight_ == 0; });
}

void Nsmf::start_timer() {
  if (timer_.joinable()) return;
  timer_ = std::thread([this] { timer_loop(); });
}

void Nsmf::timer_loop() {
  const auto tick = std::chrono::duration<double>(config_.timer_tick);
  std::unique_lock lock(state_mu_);
  while (!stopping_) {
    state_cv_.wait_for(lock, tick, [&] { return stopping_.load(); });
    if (stopping_) break;
    lock.unlock();
    std::vector<std::string> expired;
    {
      std::shared_lock sl(mu_);
      for (const auto& [id, s] : slices_) {
        std::lock_guard l(s->mu);
        if (s->kind == SliceKind::Dedicated && s->phase == Phase::Active && s->lifespan > 0 && s->activated_at &&
            seconds_since(*s->activated_at) >= s->lifespan) {
          expired.push_back(id);
        }
      }
    }
    for (const auto& id : expired) {
      try {
        terminate(id, TerminationCause::LifespanExpired);
      } catch (const std::exception&) {
      }
    }
    lock.lock();
  }
}

void Nsmf::bring_up_default(Slice& s, const VepcRecord& rec) {
  // Shared by bootstrap (journaled) and recovery (silent re-attachment).
  const std::string id = s.plan.slice_id;
  const bool journal = s.events.size() < success_sequence().size();
  Json associations = Json::array();
  for (const auto& enb : s.plan.enb_set) {
    for (const auto& mme : rec.mme_endpoints) associations.push_back(deps_.s1->associate(enb, mme, id));
    s.associated.insert(enb);
  }
  if (journal) emit(s, EventKind::S1Associated, Json{{"associations", associations}});

  deps_.s1->set_default_slice(id);
  deps_.ran->set_default_slice(id);
  Json partitions = Json::object();
  for (const auto& enb : s.plan.enb_set) partitions[enb] = deps_.ran->refresh(enb);
  if (journal) emit(s, EventKind::RanPartitionApplied, Json{{"partitions", partitions}});

  s.path = deps_.transport->stitch_default(id, s.plan.enb_set, rec, s.plan.chain);
  try {
    deps_.nssf->register_pool(id, rec.mme_endpoints, s.plan.template_id, {});
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DuplicatePool) throw;
    deps_.nssf->update_pool(id, rec.mme_endpoints);
  }
  s.pool_registered = true;
  deps_.nssf->set_default_slice(id);
  if (journal) {
    double activation = now(s);
    emit(s, EventKind::Activated,
         Json{{"transport_path", *s.path}, {"activation_time", activation}, {"termination_time", Json()}});
  }
  std::lock_guard lock(s.mu);
  s.activated_at = SteadyClock::now();
}

void Nsmf::bootstrap_default() {
  {
    std::shared_lock lock(mu_);
    if (!default_id_.empty()) return;
  }
  auto tmpl = deps_.catalogue->find(config_.default_template);
  if (!tmpl) throw Error(ErrorCode::ConfigError, "default template '" + config_.default_template + "' not in catalogue");

  const std::string id = next_id("default");
  auto s = std::make_shared<Slice>();
  s->kind = SliceKind::Default;
  s->tmpl = *tmpl;
  s->request.template_id = tmpl->template_id;
  s->request.owner = "system";
  for (const auto& [area, a] : deps_.topology->areas) s->request.service_area_ids.push_back(area);
  s->plan.slice_id = id;
  s->plan.template_id = tmpl->template_id;
  s->plan.core_nssmf = tmpl->core_nssmf_selector;
  for (const auto& e : deps_.topology->enbs) s->plan.enb_set.insert(e.enb_id);
  for (const auto& v : tmpl->vnfs) s->plan.vnf_plan.push_back({v, v.min_replicas});
  s->plan.ran_requirement = tmpl->ran_requirements;
  s->plan.chain = forwarding_chain(*tmpl);
  {
    std::unique_lock lock(mu_);
    slices_[id] = s;
  }
  std::lock_guard op(s->op_mu);
  emit(*s, EventKind::RequestAccepted,
       Json{{"template_id", tmpl->template_id},
            {"kind", SliceKind::Default},
            {"service_areas", s->request.service_area_ids},
            {"enb_set", s->plan.enb_set},
            {"ran_subslice_id", "ran-" + id},
            {"request", s->request},
            {"plan", s->plan}});
  emit(*s, EventKind::CoreDeployStarted, Json{{"core_nssmf", s->plan.core_nssmf}, {"legacy", true}});
  VepcRecord rec = deps_.cores->get(s->plan.core_nssmf).adopt_legacy_core(id, *tmpl, config_.listen.default_mme);
  s->vepc = rec;
  s->core_deployed = true;
  emit(*s, EventKind::CoreReady, Json{{"vepc", rec}});
  bring_up_default(*s, rec);
  std::unique_lock lock(mu_);
  default_id_ = id;
}

void Nsmf::recover(const std::vector<SliceEvent>& events) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<SliceEvent>> by_slice;
  for (const auto& e : events) {
    auto& v = by_slice[e.slice_id];
    if (v.empty()) order.push_back(e.slice_id);
    v.push_back(e);
  }

  std::shared_ptr<Slice> default_candidate;
  for (const auto& id : order) {
    SliceStatus st = status_from_events(by_slice[id]);
    auto s = std::make_shared<Slice>();
    s->events = st.events;
    s->phase = st.phase;
    s->kind = st.kind;
    const Json& accepted = st.events.front().payload;
    if (accepted.contains("request")) s->request = accepted.at("request").get<SliceRequest>();
    s->plan.slice_id = id;
    s->plan.template_id = st.template_id;
    s->plan.enb_set = std::set<std::string>(st.enb_set.begin(), st.enb_set.end());
    if (accepted.contains("plan")) {
      const Json& p = accepted.at("plan");
      s->plan.core_nssmf = p.value("core_nssmf", "");
      s->plan.chain = p.value("chain", std::vector<std::string>{});
    }
    if (auto t = deps_.catalogue->find(st.template_id)) s->tmpl = *t;
    // Events written after the crash continue on the recorded timeline.
    if (!st.events.empty()) {
      s->sim_offset = std::max(0.0, st.events.back().timestamp - now(*s));
    }
    {
      std::unique_lock lock(mu_);
      slices_[id] = s;
      for (const char* prefix : {"slice", "default"}) {
        if (auto n = id_suffix(id, prefix)) counters_[prefix] = std::max(counters_[prefix], *n);
      }
    }
    if (is_terminal(st.phase)) continue;

    if (st.kind == SliceKind::Default && st.phase == Phase::Active) {
      default_candidate = s;
      continue;
    }
    std::lock_guard op(s->op_mu);
    if (st.phase == Phase::Terminating) {
      emit(*s, EventKind::Terminated, Json{{"cause", "crash_recovery"}, {"steps", Json::array()}});
      continue;
    }
    // The substrate lived in the crashed process. Anything held outside it
    // (a remote NSSF pool) is released explicitly; the rest is already gone.
    std::vector<std::string> compensated;
    std::set<EventKind> seen;
    for (const auto& e : st.events) seen.insert(e.kind);
    if (seen.count(EventKind::Activated)) {
      try {
        deps_.nssf->deregister_pool(id);
      } catch (const std::exception&) {
      }
      compensated.push_back("nssf_deregister");
      compensated.push_back("transport_teardown");
    }
    if (seen.count(EventKind::RanPartitionApplied)) compensated.push_back("ran_remove");
    if (seen.count(EventKind::S1Associated)) compensated.push_back("s1_disassociate");
    if (seen.count(EventKind::CoreDeployStarted)) compensated.push_back("core_teardown");
    emit(*s, EventKind::Failed,
         Json{{"failed_step", pending_step(st.phase)},
              {"error", std::string(to_string(ErrorCode::Internal))},
              {"cause", st.phase == Phase::Active ? "substrate_lost" : "crash_recovery"},
              {"message", "process restarted"},
              {"compensated", compensated}});
  }

  if (!default_candidate) return;
  auto& s = *default_candidate;
  std::lock_guard op(s.op_mu);
  const auto st = status_from_events(s.events);
  std::string journaled = st.core_record && !st.core_record->mme_endpoints.empty() ? st.core_record->mme_endpoints.front() : "";
  std::optional<VepcRecord> rec;
  std::string why;
  try {
    rec = deps_.cores->get(s.plan.core_nssmf).adopt_legacy_core(s.plan.slice_id, s.tmpl, config_.listen.default_mme);
  } catch (const std::exception& e) {
    why = e.what();
  }
  if (rec && !rec->mme_endpoints.empty() && rec->mme_endpoints.front() == journaled) {
    s.vepc = rec;
    s.core_deployed = true;
    bring_up_default(s, *rec);
    std::unique_lock lock(mu_);
    default_id_ = s.plan.slice_id;
    return;
  }
  if (rec) {
    deps_.cores->get(s.plan.core_nssmf).teardown_vepc(s.plan.slice_id);
    why = "legacy core now at " + (rec->mme_endpoints.empty() ? std::string("<none>") : rec->mme_endpoints.front()) +
          ", journaled " + journaled;
  }
  emit(s, EventKind::Failed,
       Json{{"failed_step", "substrate"},
            {"error", std::string(to_string(ErrorCode::MmeUnreachable))},
            {"cause", "substrate_lost"},
            {"message", why},
            {"compensated", Json::array()}});
}

NbiServer::NbiServer(Nsmf& nsmf, const TemplateCatalogue& catalogue)
    : nsmf_(nsmf), catalogue_(catalogue), server_(std::make_unique<httplib::Server>()) {
  server_->new_task_queue = [] { return new httplib::ThreadPool(16); };
  server_->set_keep_alive_max_count(100000);

  server_->Post("/slices", [this](const httplib::Request& req, httplib::Response& res) {
    http::guarded(res, [&] {
      auto sr = http::parse_body(req).get<SliceRequest>();
      http::reply_json(res, 202, Json{{"slice_id", nsmf_.submit(sr)}});
    });
  });
  server_->Get("/slices", [this](const httplib::Request&, httplib::Response& res) {
    http::guarded(res, [&] {
      Json out = Json::array();
      for (const auto& id : nsmf_.slice_ids()) {
        auto st = nsmf_.status(id);
        out.push_back(Json{{"slice_id", id}, {"kind", st.kind}, {"state", st.phase}, {"template_id", st.template_id}});
      }
      http::reply_json(res, 200, out);
    });
  });
  server_->Get(R"(/slices/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    http::guarded(res, [&] { http::reply_json(res, 200, Json(nsmf_.status(req.matches[1]))); });
  });
  server_->Delete(R"(/slices/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    http::guarded(res, [&] {
      auto report = nsmf_.terminate(req.matches[1], TerminationCause::Explicit);
      http::reply_json(res, 200, Json(report));
    });
  });
  server_->Get(R"(/slices/([^/]+)/monitoring)", [this](const httplib::Request& req, httplib::Response& res) {
    http::guarded(res, [&] { http::reply_json(res, 200, Json(nsmf_.monitoring(req.matches[1]))); });
  });
  server_->Post(R"(/slices/([^/]+)/scale)", [this](const httplib::Request& req, httplib::Response& res) {
    http::guarded(res, [&] {
      Json body = http::parse_body(req);
      auto role = enum_from_string<VnfRole>(body.at("role").get<std::string>());
      http::reply_json(res, 200, Json(nsmf_.scale(req.matches[1], role, body.at("replicas").get<int>())));
    });
  });
  server_->Get("/catalogue", [this](const httplib::Request&, httplib::Response& res) {
    http::guarded(res, [&] { http::reply_json(res, 200, Json(catalogue_.summaries())); });
  });
  server_->Get("/health", [](const httplib::Request&, httplib::Response& res) {
    http::reply_json(res, 200, Json{{"status", "ok"}});
  });
}

NbiServer::~NbiServer() { stop(); }

HostPort NbiServer::bind(const HostPort& addr) { return http::bind(*server_, addr); }

void NbiServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void NbiServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace e2es

#include "e2es/core_nssmf.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "e2es/error.hpp"

namespace e2es {

using SteadyClock = std::chrono::steady_clock;

void to_json(Json& j, const VnfPlanEntry& e) { j = Json{{"vnf", e.vnf}, {"replica_count", e.replicas}}; }

void to_json(Json& j, const CompositionPlan& p) {
  j = Json{{"slice_id", p.slice_id},
           {"template_id", p.template_id},
           {"core_nssmf", p.core_nssmf},
           {"vnf_plan", p.vnf_plan},
           {"enb_set", p.enb_set},
           {"ran_requirement", p.ran_requirement},
           {"virtualization_kind", p.virtualization_kind},
           {"chain", p.chain}};
}

double boot_duration(std::uint64_t image_size, bool cached, VirtualizationKind kind, const LatencyModelConfig& m,
                     double jitter) {
  double base = kind == VirtualizationKind::Vm ? m.vm_base_boot : m.container_base_boot;
  double transfer = cached ? 0.0 : static_cast<double>(image_size) / m.store_bandwidth;
  return base + transfer + jitter;
}

ImageStore::ImageStore(LatencyModelConfig model) : model_(model), rng_(model.seed) {
  if (!(model_.store_bandwidth > 0)) throw Error(ErrorCode::ConfigError, "store_bandwidth must be positive");
}

void ImageStore::add_image(const std::string& image_id, std::uint64_t size) {
  if (size == 0) throw Error(ErrorCode::InvalidArgument, "image " + image_id + " has zero size");
  std::lock_guard lock(mu_);
  images_[image_id] = size;
}

std::optional<std::uint64_t> ImageStore::image_size(const std::string& image_id) const {
  std::lock_guard lock(mu_);
  auto it = images_.find(image_id);
  if (it == images_.end()) return std::nullopt;
  return it->second;
}

bool ImageStore::cached(const std::string& node_id, const std::string& image_id) const {
  std::lock_guard lock(mu_);
  auto it = cache_.find(node_id);
  return it != cache_.end() && it->second.count(image_id) > 0;
}

void ImageStore::mark_cached(const std::string& node_id, const std::string& image_id) {
  std::lock_guard lock(mu_);
  if (images_.count(image_id)) cache_[node_id].insert(image_id);
}

void ImageStore::clear_cache() {
  std::lock_guard lock(mu_);
  cache_.clear();
}

void ImageStore::cache_everywhere(const std::vector<std::string>& node_ids) {
  std::lock_guard lock(mu_);
  for (const auto& node : node_ids) {
    for (const auto& [id, size] : images_) cache_[node].insert(id);
  }
}

double ImageStore::estimate_boot(const std::string& image_id, const std::string& node_id, VirtualizationKind kind) {
  std::lock_guard lock(mu_);
  auto it = images_.find(image_id);
  if (it == images_.end()) throw Error(ErrorCode::UnknownImage, image_id);
  auto node = cache_.find(node_id);
  bool hit = node != cache_.end() && node->second.count(image_id) > 0;
  double jitter = 0.0;
  if (model_.jitter_max > 0) jitter = std::uniform_real_distribution<double>(0.0, model_.jitter_max)(rng_);
  return boot_duration(it->second, hit, kind, model_, jitter);
}

double ImageStore::simulate_vnf_boot(const std::string& image_id, const std::string& node_id,
                                     VirtualizationKind kind) {
  double d = estimate_boot(image_id, node_id, kind);
  mark_cached(node_id, image_id);
  return d;
}

void ImageStore::set_model(const LatencyModelConfig& m) {
  if (!(m.store_bandwidth > 0)) throw Error(ErrorCode::InvalidArgument, "store_bandwidth must be positive");
  std::lock_guard lock(mu_);
  model_ = m;
  rng_.seed(m.seed);
}

ComputePool::ComputePool(std::vector<ComputeNodeSpec> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) nodes_.push_back({"node-1"});
  for (const auto& n : nodes_) used_[n.node_id];
}

std::string ComputePool::reserve(double cpu, std::uint64_t mem) {
  std::lock_guard lock(mu_);
  for (const auto& n : nodes_) {
    auto& u = used_[n.node_id];
    if (u.cpu + cpu <= n.cpu + 1e-9 && u.mem + mem <= n.mem) {
      u.cpu += cpu;
      u.mem += mem;
      return n.node_id;
    }
  }
  throw Error(ErrorCode::CapacityExceeded,
              "no node fits cpu=" + std::to_string(cpu) + " mem=" + std::to_string(mem));
}

void ComputePool::release(const std::string& node_id, double cpu, std::uint64_t mem) {
  std::lock_guard lock(mu_);
  auto& u = used_[node_id];
  u.cpu = std::max(0.0, u.cpu - cpu);
  u.mem = u.mem >= mem ? u.mem - mem : 0;
  if (u.cpu < 1e-9) u.cpu = 0.0;
}

std::map<std::string, ComputePool::Usage> ComputePool::usage() const {
  std::lock_guard lock(mu_);
  return used_;
}

std::vector<std::string> ComputePool::node_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& n : nodes_) out.push_back(n.node_id);
  return out;
}

void to_json(Json& j, const VnfInstance& v) {
  j = Json{{"vnf_name", v.vnf_name}, {"role", v.role},         {"replica_index", v.replica_index},
           {"endpoint", v.endpoint}, {"boot_duration", v.boot_duration}, {"node_id", v.node_id}};
}

void from_json(const Json& j, VnfInstance& v) {
  v.vnf_name = j.at("vnf_name").get<std::string>();
  v.role = j.at("role").get<VnfRole>();
  v.replica_index = j.at("replica_index").get<int>();
  v.endpoint = j.at("endpoint").get<std::string>();
  v.boot_duration = j.at("boot_duration").get<double>();
  v.node_id = j.at("node_id").get<std::string>();
}

void to_json(Json& j, const VepcRecord& r) {
  j = Json{{"slice_id", r.slice_id},
           {"vnf_instances", r.vnf_instances},
           {"mme_endpoints", r.mme_endpoints},
           {"status", r.status},
           {"deploy_duration", r.deploy_duration}};
}

void from_json(const Json& j, VepcRecord& r) {
  r.slice_id = j.at("slice_id").get<std::string>();
  r.vnf_instances = j.at("vnf_instances").get<std::vector<VnfInstance>>();
  r.mme_endpoints = j.at("mme_endpoints").get<std::vector<std::string>>();
  r.status = j.at("status").get<VepcStatus>();
  r.deploy_duration = j.at("deploy_duration").get<double>();
}

// A running simulated VNF: a line server answering the stub protocol.
struct SimNfvo::Stub {
  VnfInstance instance;
  std::unique_ptr<LineServer> server;
  std::atomic<std::uint64_t> attaches{0};
};

namespace {

std::vector<std::string> mme_endpoints_of(const std::vector<VnfInstance>& instances) {
  std::vector<std::string> out;
  for (const auto& i : instances) {
    if (i.role == VnfRole::Mme) out.push_back(i.endpoint);
  }
  return out;
}

}  // namespace

SimNfvo::SimNfvo(std::shared_ptr<ImageStore> images, std::shared_ptr<ComputePool> compute)
    : images_(std::move(images)), compute_(std::move(compute)) {}

SimNfvo::~SimNfvo() { shutdown(); }

void SimNfvo::shutdown() {
  {
    std::lock_guard lock(stop_mu_);
    stopping_ = true;
  }
  stop_cv_.notify_all();
  std::map<std::string, std::shared_ptr<Deployment>> deps;
  {
    std::lock_guard lock(mu_);
    deps = deployments_;
  }
  for (auto& [id, dep] : deps) {
    std::lock_guard lock(dep->op_mu);
    for (auto& [ep, stub] : dep->stubs) stub->server->stop();
  }
}

bool SimNfvo::sleep_sim(double sim_seconds) {
  const double scale = images_->model().time_scale;
  std::unique_lock lock(stop_mu_);
  if (scale <= 0 || sim_seconds <= 0) return !stopping_;
  return !stop_cv_.wait_for(lock, std::chrono::duration<double>(sim_seconds * scale), [&] { return stopping_; });
}

std::shared_ptr<SimNfvo::Stub> SimNfvo::start_stub(const VnfInstance& inst, const HostPort& listen) {
  auto stub = std::make_shared<Stub>();
  stub->instance = inst;
  Stub* raw = stub.get();
  const bool is_mme = inst.role == VnfRole::Mme;
  stub->server = std::make_unique<LineServer>(LineServer::request_handler([raw, is_mme](const std::string& line) {
    Json msg = Json::parse(line, nullptr, false);
    const std::string type = msg.is_discarded() ? "" : msg.value("type", "");
    if (type == "PING") return Json{{"type", "PONG"}, {"vnf", raw->instance.vnf_name}}.dump();
    if (type == "S1_SETUP_REQUEST" && is_mme) {
      return Json{{"type", "S1_SETUP_RESPONSE"}, {"mme", raw->instance.vnf_name}}.dump();
    }
    if (type == "ATTACH_REQUEST" && is_mme) {
      raw->attaches.fetch_add(1, std::memory_order_relaxed);
      return Json{{"type", "ATTACH_ACCEPT"}, {"ue_id", msg.value("ue_id", "")}}.dump();
    }
    return Json{{"type", "ERROR"}, {"reason", "unsupported " + type}}.dump();
  }));
  HostPort bound = stub->server->listen(listen);
  stub->instance.endpoint = bound.str();
  return stub;
}

double SimNfvo::boot_instances(std::vector<VnfInstance>& instances, const std::vector<std::string>& image_ids,
                               VirtualizationKind kind, std::vector<std::shared_ptr<Stub>>& stubs) {
  // Durations are drawn up front in instance order so seeded jitter stays
  // reproducible regardless of thread interleaving.
  for (std::size_t i = 0; i < instances.size(); ++i) {
    instances[i].boot_duration = images_->estimate_boot(image_ids[i], instances[i].node_id, kind);
  }

  stubs.assign(instances.size(), nullptr);
  std::vector<std::string> errors(instances.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        if (!sleep_sim(instances[i].boot_duration)) {
          errors[i] = "shutdown during boot";
          return;
        }
        stubs[i] = start_stub(instances[i], HostPort{"127.0.0.1", 0});
        instances[i].endpoint = stubs[i]->instance.endpoint;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
  }
  for (auto& t : threads) t.join();

  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!errors[i].empty()) {
      for (auto& s : stubs) {
        if (s) s->server->stop();
      }
      stubs.clear();
      throw Error(ErrorCode::Internal, instances[i].vnf_name + ": " + errors[i]);
    }
  }
  double max_boot = 0.0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    images_->mark_cached(instances[i].node_id, image_ids[i]);
    max_boot = std::max(max_boot, instances[i].boot_duration);
  }
  return max_boot;
}

VepcRecord SimNfvo::instantiate_vepc(const CompositionPlan& plan) {
  const auto t0 = SteadyClock::now();
  for (const auto& e : plan.vnf_plan) {
    if (!images_->image_size(e.vnf.image_id)) throw Error(ErrorCode::UnknownImage, e.vnf.image_id);
  }

  auto dep = std::make_shared<Deployment>();
  dep->record.slice_id = plan.slice_id;
  dep->plan = plan.vnf_plan;
  dep->kind = plan.virtualization_kind;
  dep->elasticity = plan.elasticity;
  {
    std::lock_guard lock(mu_);
    auto it = deployments_.find(plan.slice_id);
    if (it != deployments_.end() && it->second->record.status != VepcStatus::Down) {
      throw Error(ErrorCode::InvalidArgument, "vEPC already exists for " + plan.slice_id);
    }
    deployments_[plan.slice_id] = dep;
  }
  std::lock_guard op(dep->op_mu);

  std::vector<VnfInstance> instances;
  std::vector<std::string> image_ids;
  auto release_all = [&] {
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto& v = plan.vnf_plan;
      for (const auto& e : v) {
        if (e.vnf.name == instances[i].vnf_name) compute_->release(instances[i].node_id, e.vnf.cpu_demand, e.vnf.mem_demand);
      }
    }
  };
  try {
    for (const auto& e : plan.vnf_plan) {
      for (int r = 0; r < e.replicas; ++r) {
        VnfInstance inst;
        inst.vnf_name = e.vnf.name;
        inst.role = e.vnf.role;
        inst.replica_index = r;
        inst.node_id = compute_->reserve(e.vnf.cpu_demand, e.vnf.mem_demand);
        instances.push_back(inst);
        image_ids.push_back(e.vnf.image_id);
      }
    }
    std::vector<std::shared_ptr<Stub>> stubs;
    double max_boot = boot_instances(instances, image_ids, plan.virtualization_kind, stubs);
    for (auto& s : stubs) dep->stubs[s->instance.endpoint] = s;
    dep->record.vnf_instances = instances;
    dep->record.mme_endpoints = mme_endpoints_of(instances);
    dep->record.status = VepcStatus::Ready;
    dep->ready_at = SteadyClock::now();
    // Real time spent beyond the scaled boot sleep counts as scheduling overhead.
    double wall = std::chrono::duration<double>(dep->ready_at - t0).count();
    double overhead = std::max(0.0, wall - max_boot * images_->model().time_scale);
    dep->record.deploy_duration = max_boot + overhead;
    return dep->record;
  } catch (...) {
    release_all();
    dep->record.status = VepcStatus::Down;
    std::lock_guard lock(mu_);
    deployments_.erase(plan.slice_id);
    throw;
  }
}

VepcRecord SimNfvo::adopt_legacy_core(const std::string& slice_id, const SliceTemplate& t,
                                      const HostPort& mme_listen) {
  auto dep = std::make_shared<Deployment>();
  dep->record.slice_id = slice_id;
  dep->kind = t.virtualization_kind;
  dep->elasticity = t.elasticity;
  dep->accounted = false;
  bool fixed_used = false;
  try {
    for (const auto& v : t.vnfs) {
      dep->plan.push_back({v, v.min_replicas});
      for (int r = 0; r < v.min_replicas; ++r) {
        VnfInstance inst{v.name, v.role, r, "", 0.0, "legacy"};
        HostPort listen{"127.0.0.1", 0};
        if (v.role == VnfRole::Mme && !fixed_used) {
          listen = mme_listen;
          fixed_used = true;
        }
        auto stub = start_stub(inst, listen);
        dep->record.vnf_instances.push_back(stub->instance);
        dep->stubs[stub->instance.endpoint] = stub;
      }
    }
  } catch (...) {
    for (auto& [ep, s] : dep->stubs) s->server->stop();
    throw;
  }
  dep->record.mme_endpoints = mme_endpoints_of(dep->record.vnf_instances);
  dep->record.status = VepcStatus::Ready;
  dep->ready_at = SteadyClock::now();
  std::lock_guard lock(mu_);
  deployments_[slice_id] = dep;
  return dep->record;
}

std::shared_ptr<SimNfvo::Deployment> SimNfvo::find(const std::string& slice_id) const {
  std::lock_guard lock(mu_);
  auto it = deployments_.find(slice_id);
  if (it == deployments_.end()) throw Error(ErrorCode::UnknownSlice, slice_id);
  return it->second;
}

void SimNfvo::notify(const std::string& slice_id, const std::vector<std::string>& endpoints) {
  PoolListener l;
  {
    std::lock_guard lock(mu_);
    l = listener_;
  }
  if (l) l(slice_id, endpoints);
}

VepcRecord SimNfvo::scale_replicas(const std::string& slice_id, VnfRole role, int new_count) {
  auto dep = find(slice_id);
  std::lock_guard op(dep->op_mu);
  if (dep->record.status != VepcStatus::Ready) throw Error(ErrorCode::VepcNotReady, slice_id);

  auto entry = std::find_if(dep->plan.begin(), dep->plan.end(), [&](const auto& e) { return e.vnf.role == role; });
  if (entry == dep->plan.end()) throw Error(ErrorCode::InvalidArgument, "no " + enum_name(role) + " VNF in " + slice_id);
  ElasticityBounds bounds{entry->vnf.min_replicas, entry->vnf.min_replicas};
  if (auto it = dep->elasticity.find(role); it != dep->elasticity.end()) bounds = it->second;
  if (new_count < bounds.min_replicas || new_count > bounds.max_replicas) {
    throw Error(ErrorCode::ElasticityBound, enum_name(role) + " replicas must stay within [" +
                                                std::to_string(bounds.min_replicas) + ", " +
                                                std::to_string(bounds.max_replicas) + "]");
  }

  auto& instances = dep->record.vnf_instances;
  auto of_vnf = [&] {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      if (instances[i].vnf_name == entry->vnf.name) idx.push_back(i);
    }
    return idx;
  };
  const int current = static_cast<int>(of_vnf().size());

  if (new_count > current) {
    int next_index = 0;
    for (auto i : of_vnf()) next_index = std::max(next_index, instances[i].replica_index + 1);
    std::vector<VnfInstance> fresh;
    std::vector<std::string> image_ids;
    try {
      for (int r = 0; r < new_count - current; ++r) {
        VnfInstance inst{entry->vnf.name, role, next_index + r, "", 0.0, ""};
        inst.node_id = dep->accounted ? compute_->reserve(entry->vnf.cpu_demand, entry->vnf.mem_demand) : "legacy";
        fresh.push_back(inst);
        image_ids.push_back(entry->vnf.image_id);
      }
      std::vector<std::shared_ptr<Stub>> stubs;
      boot_instances(fresh, image_ids, dep->kind, stubs);
      for (auto& s : stubs) dep->stubs[s->instance.endpoint] = s;
    } catch (...) {
      if (dep->accounted) {
        for (const auto& f : fresh) {
          if (!f.node_id.empty()) compute_->release(f.node_id, entry->vnf.cpu_demand, entry->vnf.mem_demand);
        }
      }
      throw;
    }
    instances.insert(instances.end(), fresh.begin(), fresh.end());
    entry->replicas = new_count;
    dep->record.mme_endpoints = mme_endpoints_of(instances);
    if (role == VnfRole::Mme) notify(slice_id, dep->record.mme_endpoints);
  } else if (new_count < current) {
    // Retire the highest replica indices. The selection pool is shrunk before
    // the stubs stop so a retired endpoint is never handed out again.
    auto idx = of_vnf();
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return instances[a].replica_index > instances[b].replica_index; });
    std::vector<VnfInstance> retired;
    std::set<std::size_t> drop(idx.begin(), idx.begin() + (current - new_count));
    std::vector<VnfInstance> kept;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      (drop.count(i) ? retired : kept).push_back(instances[i]);
    }
    instances = kept;
    entry->replicas = new_count;
    dep->record.mme_endpoints = mme_endpoints_of(instances);
    if (role == VnfRole::Mme) notify(slice_id, dep->record.mme_endpoints);
    for (const auto& r : retired) {
      if (auto it = dep->stubs.find(r.endpoint); it != dep->stubs.end()) {
        it->second->server->stop();
        dep->stubs.erase(it);
      }
      if (dep->accounted) compute_->release(r.node_id, entry->vnf.cpu_demand, entry->vnf.mem_demand);
    }
  }
  return dep->record;
}

void SimNfvo::teardown_vepc(const std::string& slice_id) {
  auto dep = find(slice_id);
  std::lock_guard op(dep->op_mu);
  if (dep->record.status == VepcStatus::Down) return;
  for (auto& [ep, stub] : dep->stubs) stub->server->stop();
  dep->stubs.clear();
  if (dep->accounted) {
    for (const auto& inst : dep->record.vnf_instances) {
      for (const auto& e : dep->plan) {
        if (e.vnf.name == inst.vnf_name) compute_->release(inst.node_id, e.vnf.cpu_demand, e.vnf.mem_demand);
      }
    }
  }
  dep->record.status = VepcStatus::Down;
}

std::optional<VepcRecord> SimNfvo::record(const std::string& slice_id) const {
  std::shared_ptr<Deployment> dep;
  {
    std::lock_guard lock(mu_);
    auto it = deployments_.find(slice_id);
    if (it == deployments_.end()) return std::nullopt;
    dep = it->second;
  }
  std::lock_guard op(dep->op_mu);
  return dep->record;
}

std::optional<double> SimNfvo::uptime(const std::string& slice_id) const {
  std::shared_ptr<Deployment> dep;
  {
    std::lock_guard lock(mu_);
    auto it = deployments_.find(slice_id);
    if (it == deployments_.end()) return std::nullopt;
    dep = it->second;
  }
  std::lock_guard op(dep->op_mu);
  if (dep->record.status != VepcStatus::Ready) return std::nullopt;
  return std::chrono::duration<double>(SteadyClock::now() - dep->ready_at).count();
}

void SimNfvo::set_pool_listener(PoolListener listener) {
  std::lock_guard lock(mu_);
  listener_ = std::move(listener);
}

std::uint64_t SimNfvo::attach_count(const std::string& endpoint) const {
  std::lock_guard lock(mu_);
  for (const auto& [id, dep] : deployments_) {
    auto it = dep->stubs.find(endpoint);
    if (it != dep->stubs.end()) return it->second->attaches.load();
  }
  return 0;
}

void CoreNssmfRegistry::add(const std::string& selector, std::shared_ptr<CoreNssmf> nssmf) {
  nssmfs_[selector] = std::move(nssmf);
}

CoreNssmf& CoreNssmfRegistry::get(const std::string& selector) const {
  auto it = nssmfs_.find(selector);
  if (it == nssmfs_.end()) throw Error(ErrorCode::NssmfUnregistered, selector);
  return *it->second;
}

bool CoreNssmfRegistry::contains(const std::string& selector) const { return nssmfs_.count(selector) > 0; }

std::set<std::string> CoreNssmfRegistry::selectors() const {
  std::set<std::string> out;
  for (const auto& [s, n] : nssmfs_) out.insert(s);
  return out;
}

std::vector<std::shared_ptr<CoreNssmf>> CoreNssmfRegistry::all() const {
  std::vector<std::shared_ptr<CoreNssmf>> out;
  for (const auto& [s, n] : nssmfs_) out.push_back(n);
  return out;
}

}  // namespace e2es

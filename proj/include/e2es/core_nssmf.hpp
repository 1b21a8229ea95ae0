#pragma once

// Core sub-slice NSSMF over a simulated NFVO/VIM. Deploys per-slice vEPCs as
// in-process VNF stubs whose start-up is delayed by an image-size and
// cache-dependent boot model.

#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "e2es/config.hpp"
#include "e2es/domain.hpp"
#include "e2es/net.hpp"

namespace e2es {

struct VnfPlanEntry {
  VnfDescriptor vnf;
  int replicas = 1;
};

struct CompositionPlan {
  std::string slice_id;
  std::string template_id;
  std::string core_nssmf;
  std::vector<VnfPlanEntry> vnf_plan;
  std::set<std::string> enb_set;
  RanRequirement ran_requirement;
  VirtualizationKind virtualization_kind = VirtualizationKind::Vm;
  std::vector<std::string> chain;  // VNF names in forwarding order
  std::map<VnfRole, ElasticityBounds> elasticity;
};

void to_json(Json& j, const VnfPlanEntry& e);
void to_json(Json& j, const CompositionPlan& p);

// Closed-form boot model: base + (cached ? 0 : size / bandwidth) + jitter.
double boot_duration(std::uint64_t image_size, bool cached, VirtualizationKind kind, const LatencyModelConfig& m,
                     double jitter = 0.0);

class ImageStore {
 public:
  explicit ImageStore(LatencyModelConfig model);

  void add_image(const std::string& image_id, std::uint64_t size);
  std::optional<std::uint64_t> image_size(const std::string& image_id) const;
  bool cached(const std::string& node_id, const std::string& image_id) const;
  void mark_cached(const std::string& node_id, const std::string& image_id);
  void clear_cache();
  void cache_everywhere(const std::vector<std::string>& node_ids);

  // Draws a boot duration against the current cache state without touching
  // it. Throws Error(UnknownImage).
  double estimate_boot(const std::string& image_id, const std::string& node_id, VirtualizationKind kind);
  // estimate_boot() followed by the write-through cache update.
  double simulate_vnf_boot(const std::string& image_id, const std::string& node_id, VirtualizationKind kind);

  const LatencyModelConfig& model() const { return model_; }
  void set_model(const LatencyModelConfig& m);

 private:
  mutable std::mutex mu_;
  LatencyModelConfig model_;
  std::mt19937_64 rng_;
  std::map<std::string, std::uint64_t> images_;
  std::map<std::string, std::set<std::string>> cache_;  // node -> images
};

// First-fit CPU/memory accounting over the simulated compute nodes.
class ComputePool {
 public:
  explicit ComputePool(std::vector<ComputeNodeSpec> nodes);

  // Throws Error(CapacityExceeded) when no node fits.
  std::string reserve(double cpu, std::uint64_t mem);
  void release(const std::string& node_id, double cpu, std::uint64_t mem);

  struct Usage {
    double cpu = 0.0;
    std::uint64_t mem = 0;
    bool operator==(const Usage&) const = default;
  };
  std::map<std::string, Usage> usage() const;
  std::vector<std::string> node_ids() const;

 private:
  mutable std::mutex mu_;
  std::vector<ComputeNodeSpec> nodes_;
  std::map<std::string, Usage> used_;
};

enum class VepcStatus { Deploying, Ready, Down };
NLOHMANN_JSON_SERIALIZE_ENUM(VepcStatus, {{VepcStatus::Deploying, "DEPLOYING"},
                                          {VepcStatus::Ready, "READY"},
                                          {VepcStatus::Down, "DOWN"}})

struct VnfInstance {
  std::string vnf_name;
  VnfRole role = VnfRole::Other;
  int replica_index = 0;
  std::string endpoint;
  double boot_duration = 0.0;  // simulated s
  std::string node_id;
};

struct VepcRecord {
  std::string slice_id;
  std::vector<VnfInstance> vnf_instances;
  std::vector<std::string> mme_endpoints;
  VepcStatus status = VepcStatus::Deploying;
  double deploy_duration = 0.0;  // simulated s
};

void to_json(Json& j, const VnfInstance& v);
void from_json(const Json& j, VnfInstance& v);
void to_json(Json& j, const VepcRecord& r);
void from_json(const Json& j, VepcRecord& r);

// Per-cloud NSSMF interface; the NSMF dispatches on the template selector.
class CoreNssmf {
 public:
  using PoolListener = std::function<void(const std::string& slice_id, const std::vector<std::string>& mme_endpoints)>;

  virtual ~CoreNssmf() = default;
  virtual VepcRecord instantiate_vepc(const CompositionPlan& plan) = 0;
  virtual VepcRecord scale_replicas(const std::string& slice_id, VnfRole role, int new_count) = 0;
  virtual void teardown_vepc(const std::string& slice_id) = 0;
  virtual std::optional<VepcRecord> record(const std::string& slice_id) const = 0;
  // Wraps an already running core (no boot delay, no resource accounting).
  virtual VepcRecord adopt_legacy_core(const std::string& slice_id, const SliceTemplate& t,
                                       const HostPort& mme_listen) = 0;
  virtual std::optional<double> uptime(const std::string& slice_id) const = 0;
  virtual void set_pool_listener(PoolListener listener) = 0;
};

class SimNfvo : public CoreNssmf {
 public:
  SimNfvo(std::shared_ptr<ImageStore> images, std::shared_ptr<ComputePool> compute);
  ~SimNfvo() override;

  VepcRecord instantiate_vepc(const CompositionPlan& plan) override;
  VepcRecord scale_replicas(const std::string& slice_id, VnfRole role, int new_count) override;
  void teardown_vepc(const std::string& slice_id) override;
  std::optional<VepcRecord> record(const std::string& slice_id) const override;
  VepcRecord adopt_legacy_core(const std::string& slice_id, const SliceTemplate& t,
                               const HostPort& mme_listen) override;
  std::optional<double> uptime(const std::string& slice_id) const override;
  void set_pool_listener(PoolListener listener) override;

  // ATTACH_ACCEPTs served by the stub at `endpoint`.
  std::uint64_t attach_count(const std::string& endpoint) const;
  // Aborts in-flight boots and stops every stub.
  void shutdown();

  ImageStore& images() { return *images_; }
  ComputePool& compute() { return *compute_; }

 private:
  struct Stub;
  struct Deployment {
    std::mutex op_mu;
    VepcRecord record;
    std::map<std::string, std::shared_ptr<Stub>> stubs;  // by endpoint
    std::vector<VnfPlanEntry> plan;
    VirtualizationKind kind = VirtualizationKind::Vm;
    std::map<VnfRole, ElasticityBounds> elasticity;
    bool accounted = true;
    std::chrono::steady_clock::time_point ready_at;
  };

  // Boots the given instances concurrently; returns the max simulated boot.
  // Stubs are returned in instance order; on failure nothing stays running.
  double boot_instances(std::vector<VnfInstance>& instances, const std::vector<std::string>& image_ids,
                        VirtualizationKind kind, std::vector<std::shared_ptr<Stub>>& stubs);
  std::shared_ptr<Stub> start_stub(const VnfInstance& inst, const HostPort& listen);
  std::shared_ptr<Deployment> find(const std::string& slice_id) const;
  void notify(const std::string& slice_id, const std::vector<std::string>& endpoints);
  bool sleep_sim(double sim_seconds);

  std::shared_ptr<ImageStore> images_;
  std::shared_ptr<ComputePool> compute_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Deployment>> deployments_;
  PoolListener listener_;
  std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  bool stopping_ = false;
};

class CoreNssmfRegistry {
 public:
  void add(const std::string& selector, std::shared_ptr<CoreNssmf> nssmf);
  // Throws Error(NssmfUnregistered).
  CoreNssmf& get(const std::string& selector) const;
  bool contains(const std::string& selector) const;
  std::set<std::string> selectors() const;
  std::vector<std::shared_ptr<CoreNssmf>> all() const;

 private:
  std::map<std::string, std::shared_ptr<CoreNssmf>> nssmfs_;
};

}  // namespace e2es

#pragma once

// Slice selection: maps an attaching UE to an MME of its core sub-slice and
// balances load across that slice's MME replicas.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "e2es/config.hpp"
#include "e2es/domain.hpp"

namespace httplib {
class Server;
}

namespace e2es {

struct MmePool {
  std::string slice_id;
  std::string template_id;
  std::set<std::string> coverage;  // eNodeBs served; empty means all
  std::vector<std::string> endpoints;
  std::vector<std::uint64_t> assigned_counts;
  std::uint64_t cursor = 0;  // round-robin position
  std::uint64_t order = 0;   // registration order
};

// Selection plugin. Called with the pool locked; must only pick an index.
class SelectionPolicy {
 public:
  virtual ~SelectionPolicy() = default;
  virtual std::string name() const = 0;
  virtual std::size_t pick(MmePool& pool) = 0;
};

class RoundRobinPolicy : public SelectionPolicy {
 public:
  std::string name() const override { return "ROUND_ROBIN"; }
  std::size_t pick(MmePool& pool) override;
};

class LeastLoadedPolicy : public SelectionPolicy {
 public:
  std::string name() const override { return "LEAST_LOADED"; }
  std::size_t pick(MmePool& pool) override;
};

// Throws Error(ConfigError) for unknown names.
std::unique_ptr<SelectionPolicy> make_policy(const std::string& name);

struct Selection {
  std::string slice_id;
  std::string mme_endpoint;
  bool fallback = false;  // the UE's subscription did not resolve to a live slice
};

void to_json(Json& j, const Selection& s);
void to_json(Json& j, const MmePool& p);

class Nssf {
 public:
  explicit Nssf(std::unique_ptr<SelectionPolicy> policy);

  void register_enb(const std::string& enb_id);
  std::set<std::string> enbs() const;

  // Throws DuplicatePool / InvalidArgument (empty endpoints).
  void register_pool(const std::string& slice_id, const std::vector<std::string>& endpoints,
                     const std::string& template_id = "", const std::set<std::string>& coverage = {});
  // Atomic endpoint replacement (scaling); counters of kept endpoints survive.
  void update_pool(const std::string& slice_id, const std::vector<std::string>& endpoints);
  void deregister_pool(const std::string& slice_id);
  std::optional<MmePool> pool(const std::string& slice_id) const;
  std::vector<MmePool> pools() const;

  void set_default_slice(const std::string& slice_id);
  std::string default_slice() const;

  // `key` is a slice id or a template id; see select_core.
  void subscribe(const std::string& ue_id, const std::string& key);
  void unsubscribe(const std::string& ue_id);

  // Resolution order: subscription naming a live pool; subscription naming a
  // template, matched to the oldest live pool of that template covering the
  // eNodeB; otherwise the default slice (fallback=true if the UE had a
  // subscription). Throws UnknownEnb / NoDefaultSlice.
  Selection select_core(const std::string& ue_id, const std::string& enb_id);

  std::string policy_name() const { return policy_->name(); }

 private:
  struct PoolCell {
    std::mutex mu;
    MmePool pool;
  };
  std::shared_ptr<PoolCell> resolve(const std::string& ue_id, const std::string& enb_id, bool& fallback) const;

  std::unique_ptr<SelectionPolicy> policy_;
  mutable std::shared_mutex mu_;
  std::set<std::string> enbs_;
  std::map<std::string, std::shared_ptr<PoolCell>> pools_;
  std::map<std::string, std::string> subscriptions_;
  std::string default_slice_;
  std::uint64_t next_order_ = 0;
};

// HTTP front end: GET /nssf/select plus pool/subscription administration for
// deployments where the NSSF runs in its own process.
class NssfServer {
 public:
  NssfServer(Nssf& nssf, NssfConfig config);
  ~NssfServer();

  // Binds synchronously (Error(IoError) on failure) and serves on a thread.
  HostPort listen(const HostPort& addr);
  void stop();
  void set_injected_delay(double seconds);

 private:
  bool delay();

  Nssf& nssf_;
  NssfConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<double> injected_delay_{0.0};
  std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  bool stopping_ = false;
};

// What the NSMF needs from the NSSF, local or remote.
class NssfClient {
 public:
  virtual ~NssfClient() = default;
  virtual void register_enb(const std::string& enb_id) = 0;
  virtual void register_pool(const std::string& slice_id, const std::vector<std::string>& endpoints,
                             const std::string& template_id, const std::set<std::string>& coverage) = 0;
  virtual void update_pool(const std::string& slice_id, const std::vector<std::string>& endpoints) = 0;
  virtual void deregister_pool(const std::string& slice_id) = 0;
  virtual void set_default_slice(const std::string& slice_id) = 0;
  virtual void subscribe(const std::string& ue_id, const std::string& key) = 0;
  // Assigned UE count per endpoint of a slice's pool (empty if none).
  virtual std::map<std::string, std::uint64_t> assigned_counts(const std::string& slice_id) = 0;
};

class LocalNssfClient : public NssfClient {
 public:
  explicit LocalNssfClient(Nssf& nssf) : nssf_(nssf) {}
  void register_enb(const std::string& enb_id) override { nssf_.register_enb(enb_id); }
  void register_pool(const std::string& slice_id, const std::vector<std::string>& endpoints,
                     const std::string& template_id, const std::set<std::string>& coverage) override {
    nssf_.register_pool(slice_id, endpoints, template_id, coverage);
  }
  void update_pool(const std::string& slice_id, const std::vector<std::string>& endpoints) override {
    nssf_.update_pool(slice_id, endpoints);
  }
  void deregister_pool(const std::string& slice_id) override { nssf_.deregister_pool(slice_id); }
  void set_default_slice(const std::string& slice_id) override { nssf_.set_default_slice(slice_id); }
  void subscribe(const std::string& ue_id, const std::string& key) override { nssf_.subscribe(ue_id, key); }
  std::map<std::string, std::uint64_t> assigned_counts(const std::string& slice_id) override;

 private:
  Nssf& nssf_;
};

// Talks to a separately running NSSF over its admin endpoints.
class RemoteNssfClient : public NssfClient {
 public:
  explicit RemoteNssfClient(HostPort addr) : addr_(std::move(addr)) {}
  void register_enb(const std::string& enb_id) override;
  void register_pool(const std::string& slice_id, const std::vector<std::string>& endpoints,
                     const std::string& template_id, const std::set<std::string>& coverage) override;
  void update_pool(const std::string& slice_id, const std::vector<std::string>& endpoints) override;
  void deregister_pool(const std::string& slice_id) override;
  void set_default_slice(const std::string& slice_id) override;
  void subscribe(const std::string& ue_id, const std::string& key) override;
  std::map<std::string, std::uint64_t> assigned_counts(const std::string& slice_id) override;

 private:
  Json call(const std::string& method, const std::string& path, const Json& body);
  HostPort addr_;
};

}  // namespace e2es

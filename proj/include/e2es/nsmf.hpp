#pragma once

// End-to-end slice lifecycle owner: composes sub-slices from a template,
// drives the instantiation sequence across the core, RAN and transport
// NSSMFs, enforces lifespans and answers monitoring queries.

#include <atomic>
#include <chrono>
#include <condition_variable>
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
#include "e2es/core_nssmf.hpp"
#include "e2es/journal.hpp"
#include "e2es/nssf.hpp"
#include "e2es/ran_nssmf.hpp"
#include "e2es/ran_sim.hpp"
#include "e2es/transport_nssmf.hpp"

namespace httplib {
class Server;
}

namespace e2es {

struct SliceRequest {
  std::string template_id;
  std::vector<std::string> service_area_ids;
  std::optional<double> lifespan;  // s; overrides the template default
  std::string owner;
  std::optional<RanRequirementOverride> requirement_overrides;
  ReliabilityLevel reliability_level = ReliabilityLevel::Standard;
};

void to_json(Json& j, const SliceRequest& r);
void from_json(const Json& j, SliceRequest& r);

// Deterministic plan. Throws UnknownServiceArea / NssmfUnregistered.
CompositionPlan compose_slice(const std::string& slice_id, const SliceRequest& req, const SliceTemplate& t,
                              const Topology& topology, const std::set<std::string>& registered_nssmfs);

enum class TerminationCause { Explicit, LifespanExpired };
NLOHMANN_JSON_SERIALIZE_ENUM(TerminationCause, {{TerminationCause::Explicit, "EXPLICIT"},
                                                {TerminationCause::LifespanExpired, "LIFESPAN_EXPIRED"}})

struct StepReport {
  std::string step;
  double duration = 0.0;  // s
  bool ok = true;
  std::string error;
};

struct TerminationReport {
  std::string slice_id;
  TerminationCause cause = TerminationCause::Explicit;
  bool already_terminated = false;
  Phase phase = Phase::Terminated;
  std::vector<StepReport> steps;
};

void to_json(Json& j, const StepReport& s);
void to_json(Json& j, const TerminationReport& r);

struct CellMonitoring {
  double granted_share = 0.0;    // last reported window
  double partition_share = 0.0;  // configured
  int attached_ues = 0;
};

struct MonitoringSnapshot {
  std::string slice_id;
  std::map<std::string, CellMonitoring> cells;
  int attached_ue_count = 0;
  std::map<std::string, std::uint64_t> mme_assigned;  // per MME replica
  double vepc_uptime = 0.0;                           // s
};

void to_json(Json& j, const CellMonitoring& c);
void to_json(Json& j, const MonitoringSnapshot& m);

struct NsmfDeps {
  TemplateCatalogue* catalogue = nullptr;
  const Topology* topology = nullptr;
  CoreNssmfRegistry* cores = nullptr;
  RanNssmf* ran = nullptr;
  S1Control* s1 = nullptr;
  TransportNssmf* transport = nullptr;
  NssfClient* nssf = nullptr;
};

class Nsmf {
 public:
  Nsmf(NsmfDeps deps, RunConfig config, std::shared_ptr<Journal> journal);
  ~Nsmf();
  Nsmf(const Nsmf&) = delete;
  Nsmf& operator=(const Nsmf&) = delete;

  // Rebuilds state from a previous run's events. Slices that were in flight
  // or active are failed (their substrate died with the process), slices in
  // teardown are closed, and the default slice is restored when its legacy
  // core comes back on the same endpoint. Must run before bootstrap_default.
  void recover(const std::vector<SliceEvent>& events);
  // Creates the default slice unless recovery restored one.
  void bootstrap_default();
  void start_timer();
  void stop();

  // Returns once REQUEST_ACCEPTED is journaled; the rest runs asynchronously.
  std::string submit(const SliceRequest& req);
  SliceStatus status(const std::string& slice_id) const;
  TerminationReport terminate(const std::string& slice_id, TerminationCause cause);
  MonitoringSnapshot monitoring(const std::string& slice_id);
  VepcRecord scale(const std::string& slice_id, VnfRole role, int replicas);

  std::vector<std::string> slice_ids() const;
  std::string default_slice_id() const;
  // Waits until the slice reaches one of `phases`; false on timeout.
  bool wait_for(const std::string& slice_id, const std::set<Phase>& phases, double timeout_s) const;
  // Waits until every in-flight workflow has finished.
  void drain();

 private:
  struct Slice {
    std::mutex op_mu;  // one workflow step or termination at a time
    mutable std::mutex mu;
    std::vector<SliceEvent> events;
    Phase phase = Phase::Requested;
    SliceKind kind = SliceKind::Dedicated;
    SliceRequest request;
    SliceTemplate tmpl;
    CompositionPlan plan;
    double lifespan = 0.0;
    double sim_offset = 0.0;  // simulated seconds not spent in real time
    // Substrate acquired so far, for compensation and teardown.
    bool core_deployed = false;
    std::set<std::string> associated;
    std::set<std::string> partitioned;
    std::optional<TransportPath> path;
    bool pool_registered = false;
    std::optional<VepcRecord> vepc;
    std::optional<std::chrono::steady_clock::time_point> activated_at;
  };

  std::shared_ptr<Slice> find(const std::string& slice_id) const;
  SliceEvent emit(Slice& s, EventKind kind, Json payload);
  double now(const Slice& s) const;
  void run_workflow(std::shared_ptr<Slice> s);
  std::vector<std::string> compensate(Slice& s);
  std::string next_id(const std::string& prefix);
  void timer_loop();
  void bring_up_default(Slice& s, const VepcRecord& rec);

  NsmfDeps deps_;
  RunConfig config_;
  std::shared_ptr<Journal> journal_;
  double epoch0_;
  std::chrono::steady_clock::time_point steady0_;

  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Slice>> slices_;
  std::map<std::string, std::uint64_t> counters_;
  std::string default_id_;

  mutable std::mutex state_mu_;
  mutable std::condition_variable state_cv_;
  int in_flight_ = 0;
  std::vector<std::thread> workers_;
  std::atomic<bool> stopping_{false};
  std::thread timer_;
};

// Northbound REST interface.
class NbiServer {
 public:
  NbiServer(Nsmf& nsmf, const TemplateCatalogue& catalogue);
  ~NbiServer();

  HostPort bind(const HostPort& addr);
  void start();
  void stop();

 private:
  Nsmf& nsmf_;
  const TemplateCatalogue& catalogue_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace e2es

#pragma once

// Simulated radio access network: eNodeB actors hosting a controller agent,
// an S1-flex agent and a per-subframe MAC scheduler, plus UE attach emulation
// against the centralized slice selection endpoint.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "e2es/config.hpp"
#include "e2es/net.hpp"
#include "e2es/ran_nssmf.hpp"

namespace e2es {

struct SubframeAllocation {
  std::string enb_id;
  std::uint64_t subframe_index = 0;
  std::map<std::string, int> grants;

  int total() const;
};

// Weighted-deficit MAC scheduler. Each slice accrues share * total_rrb credit
// per subframe and is granted min(backlog, floor(credit)); STRICT slices are
// served first. In work-conserving mode RRBs left over are handed to still
// backlogged slices in proportion to their shares. Not thread-safe.
class MacScheduler {
 public:
  MacScheduler(int total_rrb, bool work_conserving);

  // Takes effect at the next subframe boundary.
  void apply(const RanPartition& p);
  SubframeAllocation schedule(const std::map<std::string, int>& backlog);

  // Granted fraction of all RRBs per slice since the previous call.
  std::map<std::string, double> take_window();
  const std::map<std::string, std::uint64_t>& cumulative_grants() const { return cumulative_; }
  std::uint64_t subframes() const { return subframe_; }
  const RanPartition& active_partition() const { return active_; }
  // The partition the next subframe will run under.
  const RanPartition& next_partition() const { return pending_ ? *pending_ : active_; }
  int total_rrb() const { return total_rrb_; }

 private:
  int total_rrb_;
  bool work_conserving_;
  RanPartition active_;
  std::optional<RanPartition> pending_;
  std::map<std::string, double> credit_;
  std::map<std::string, std::uint64_t> cumulative_;
  std::map<std::string, std::uint64_t> window_;
  std::uint64_t window_subframes_ = 0;
  std::uint64_t subframe_ = 0;
};

enum class S1State { Connecting, Up, Down };
enum class AttachMode { Centralized, LocalBypass };
enum class AttachOutcome { Attached, Timeout, Rejected };

NLOHMANN_JSON_SERIALIZE_ENUM(S1State, {{S1State::Connecting, "CONNECTING"}, {S1State::Up, "UP"}, {S1State::Down, "DOWN"}})
NLOHMANN_JSON_SERIALIZE_ENUM(AttachMode, {{AttachMode::Centralized, "CENTRALIZED"},
                                          {AttachMode::LocalBypass, "LOCAL_BYPASS"}})
NLOHMANN_JSON_SERIALIZE_ENUM(AttachOutcome, {{AttachOutcome::Attached, "ATTACHED"},
                                             {AttachOutcome::Timeout, "TIMEOUT"},
                                             {AttachOutcome::Rejected, "REJECTED"}})

struct S1Association {
  std::string enb_id;
  std::string mme_endpoint;
  std::string slice_id;
  S1State state = S1State::Connecting;
};

struct AttachTrace {
  std::string ue_id;
  std::string enb_id;
  double t_nssf = 0.0;  // s
  double t_core = 0.0;  // s
  double t_total = 0.0;  // s
  AttachOutcome outcome = AttachOutcome::Rejected;
  std::string chosen_mme;
  std::string slice_id;
  bool fallback = false;
  std::string error;  // error code name when REJECTED
};

void to_json(Json& j, const S1Association& a);
void from_json(const Json& j, S1Association& a);
void to_json(Json& j, const AttachTrace& t);

struct EnbAgentConfig {
  std::string enb_id;
  int total_rrb = 100;
  RanConfig ran;
  int s1_max_attempts = 3;
  double s1_backoff = 0.05;
  double t3410 = 15.0;
};

class EnbAgent {
 public:
  explicit EnbAgent(EnbAgentConfig config);
  ~EnbAgent();
  EnbAgent(const EnbAgent&) = delete;
  EnbAgent& operator=(const EnbAgent&) = delete;

  const std::string& id() const { return config_.enb_id; }

  // Southbound client: HELLO, then serves SET_PARTITION / STATS_REQUEST and
  // pushes periodic STATS_REPORTs.
  void connect(const HostPort& controller);
  void disconnect();

  void set_nssf(const HostPort& nssf);
  void set_default_slice(const std::string& slice_id);

  // S1-flex. Re-associating with an endpoint that is UP returns the existing
  // association. Throws Error(MmeUnreachable) after the configured retries.
  S1Association associate_mme(const std::string& mme_endpoint, const std::string& slice_id);
  void disassociate_slice(const std::string& slice_id);
  void disassociate(const std::string& mme_endpoint);
  std::vector<S1Association> associations() const;

  AttachTrace attach_ue(const std::string& ue_id, AttachMode mode, int channel_quality = 10);
  void detach_ue(const std::string& ue_id);
  std::vector<AttachedUe> attached_ues() const;

  // Returns the ACK or NACK message for a SET_PARTITION message.
  Json apply_partition(const Json& set_partition);
  std::uint64_t partition_version() const;
  SubframeAllocation schedule_subframe(const std::map<std::string, int>& demand);
  // Advances `n` subframes with every slice in the active partition
  // saturating (`saturate` empty) or only the listed slices saturating.
  void run_saturated(int n, const std::set<std::string>& saturate = {});
  RanPartition active_partition() const;
  std::map<std::string, std::uint64_t> cumulative_grants() const;

  StatsReport report_stats();

 private:
  struct Association {
    S1Association info;
    std::shared_ptr<LineChannel> channel;
  };
  struct ClientPool;

  void reader_loop(std::shared_ptr<LineChannel> channel);
  void stats_loop();
  void traffic_loop();
  std::shared_ptr<Association> find_up(const std::string& mme_endpoint) const;

  EnbAgentConfig config_;

  mutable std::mutex mac_mu_;
  MacScheduler scheduler_;
  std::uint64_t partition_version_ = 0;
  std::uint64_t stats_seq_ = 0;

  mutable std::mutex s1_mu_;
  std::map<std::string, std::shared_ptr<Association>> associations_;  // by endpoint
  std::string default_slice_ = "default";
  std::optional<HostPort> nssf_;
  std::unique_ptr<ClientPool> clients_;

  mutable std::mutex ue_mu_;
  std::map<std::string, AttachedUe> ues_;

  std::shared_ptr<LineChannel> controller_;
  std::thread reader_;
  std::thread stats_thread_;
  std::thread traffic_thread_;
  std::mutex loop_mu_;
  std::condition_variable loop_cv_;
  std::atomic<bool> stopping_{false};
};

// Narrow control surface the NSMF uses to drive S1-flex on the RAN side.
class S1Control {
 public:
  virtual ~S1Control() = default;
  virtual S1Association associate(const std::string& enb_id, const std::string& mme_endpoint,
                                  const std::string& slice_id) = 0;
  virtual void disassociate(const std::string& enb_id, const std::string& slice_id) = 0;
  virtual void disassociate_endpoint(const std::string& enb_id, const std::string& mme_endpoint) = 0;
  virtual void set_default_slice(const std::string& slice_id) = 0;
  virtual std::vector<S1Association> associations(const std::string& enb_id) const = 0;
};

class EnbFleet : public S1Control {
 public:
  EnbFleet(const Topology& topology, const RunConfig& config);
  ~EnbFleet() override;

  void connect_all(const HostPort& controller);
  void set_nssf(const HostPort& nssf);
  void stop();

  EnbAgent& agent(const std::string& enb_id);
  std::vector<std::string> ids() const;

  S1Association associate(const std::string& enb_id, const std::string& mme_endpoint,
                          const std::string& slice_id) override;
  void disassociate(const std::string& enb_id, const std::string& slice_id) override;
  void disassociate_endpoint(const std::string& enb_id, const std::string& mme_endpoint) override;
  void set_default_slice(const std::string& slice_id) override;
  std::vector<S1Association> associations(const std::string& enb_id) const override;

 private:
  std::map<std::string, std::unique_ptr<EnbAgent>> agents_;
};

}  // namespace e2es

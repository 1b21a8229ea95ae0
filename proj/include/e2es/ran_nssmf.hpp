#pragma once

// RAN sub-slice NSSMF and the centralized RAN controller. Keeps per-cell state
// fed by agent statistics, derives per-cell resource partitions from the
// coexisting slices' requirements and pushes them to eNodeB agents over the
// southbound protocol.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "e2es/config.hpp"
#include "e2es/domain.hpp"
#include "e2es/net.hpp"

namespace e2es {

struct AttachedUe {
  std::string ue_id;
  std::string slice_id;
  int channel_quality = 10;  // 1..15

  bool operator==(const AttachedUe&) const = default;
};

struct StatsReport {
  std::uint64_t seq = 0;
  std::vector<AttachedUe> ues;
  std::map<std::string, double> granted_shares;
};

struct CellState {
  std::string enb_id;
  int total_rrb = 0;
  std::vector<AttachedUe> attached_ues;
  std::map<std::string, RanRequirement> participating_slices;  // dedicated slices only
  std::string default_slice;
  std::map<std::string, double> granted_shares;  // last reported window
  std::uint64_t last_seq = 0;
  std::optional<std::chrono::steady_clock::time_point> last_report;
};

struct RanPartition {
  std::string enb_id;
  std::map<std::string, double> shares;
  std::set<std::string> priority_slices;  // STRICT latency class
  std::uint64_t version = 0;

  double total() const;
};

// Two-phase allocation: every dedicated slice gets its min_rrb_fraction and
// the default slice gets `default_floor`; the residual is split among the
// dedicated slices in proportion to their weights. With no dedicated slices
// the default slice holds the whole cell. Throws Error(Infeasible) when the
// minimums plus the floor exceed 1.
RanPartition compute_partition(const CellState& cell, double default_floor);

namespace southbound {

// Message constructors and accessors for the controller<->agent protocol.
Json hello(const std::string& enb_id, int total_rrb);
Json stats_request();
Json stats_report(const StatsReport& r);
Json set_partition(const RanPartition& p);
Json ack(std::uint64_t version);
Json nack(std::uint64_t version, const std::string& reason);

StatsReport parse_stats_report(const Json& j);
RanPartition parse_set_partition(const Json& j);

}  // namespace southbound

class RanNssmf {
 public:
  RanNssmf(RanConfig config, double default_floor);
  ~RanNssmf();

  HostPort listen(const HostPort& addr);
  void stop();

  // Duplicate registration replaces capabilities and resets the stats sequence.
  void register_enb(const std::string& enb_id, int total_rrb);
  // Returns false when the report is out of order and was dropped.
  bool ingest_stats(const std::string& enb_id, const StatsReport& report);

  void set_default_slice(const std::string& slice_id);
  std::string default_slice() const;
  double default_floor() const { return default_floor_; }

  CellState cell(const std::string& enb_id) const;
  std::vector<std::string> enbs() const;
  RanPartition current_partition(const std::string& enb_id) const;
  bool agent_connected(const std::string& enb_id) const;
  bool wait_for_agents(const std::set<std::string>& enb_ids, double timeout_s) const;

  // Sends SET_PARTITION and waits for the agent's verdict. Returns the
  // agent-confirmed version. Throws AgentUnreachable after the configured
  // attempts or VersionConflict when the agent already holds a newer version.
  std::uint64_t enforce_partition(const RanPartition& p);

  // Recompute-and-enforce for one cell, serialized per cell. The participating
  // set is committed only after the agent acknowledges.
  RanPartition add_slice(const std::string& enb_id, const std::string& slice_id, const RanRequirement& req);
  // Removal is committed locally even if enforcement fails.
  RanPartition remove_slice(const std::string& enb_id, const std::string& slice_id);
  RanPartition refresh(const std::string& enb_id);

  // On-demand STATS_REQUEST; waits for a fresher report than the current one.
  CellState request_stats(const std::string& enb_id, double timeout_s = 1.0);

 private:
  struct Cell {
    std::mutex op_mu;  // serializes reconfigurations
    mutable std::mutex mu;
    std::condition_variable stats_cv;
    CellState state;
    RanPartition current;
    std::uint64_t next_version = 0;
    std::shared_ptr<LineChannel> agent;
    std::map<std::uint64_t, std::promise<Json>> pending;
  };

  std::shared_ptr<Cell> find_cell(const std::string& enb_id) const;
  RanPartition reconfigure(const std::string& enb_id,
                           const std::function<void(std::map<std::string, RanRequirement>&)>& mutate,
                           bool commit_on_failure);
  void serve_agent(std::shared_ptr<LineChannel> channel);

  RanConfig config_;
  double default_floor_;
  std::string default_slice_ = "default";
  mutable std::shared_mutex cells_mu_;
  std::map<std::string, std::shared_ptr<Cell>> cells_;
  std::unique_ptr<LineServer> server_;
};

void to_json(Json& j, const RanPartition& p);
void from_json(const Json& j, RanPartition& p);
void to_json(Json& j, const AttachedUe& u);
void from_json(const Json& j, AttachedUe& u);

}  // namespace e2es

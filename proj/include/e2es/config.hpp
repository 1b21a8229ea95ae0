#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "e2es/domain.hpp"

namespace e2es {

struct HostPort {
  std::string host = "127.0.0.1";
  int port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
  static HostPort parse(const std::string& text);
};

struct EnbSpec {
  std::string enb_id;
  int total_rrb = 100;
};

struct UeSpec {
  std::string ue_id;
  std::string home_enb;
  std::string subscribed_slice;  // empty: no subscription
  int channel_quality = 10;
};

struct Topology {
  std::vector<EnbSpec> enbs;
  std::map<std::string, ServiceArea> areas;
  std::vector<UeSpec> ues;

  const EnbSpec* find_enb(const std::string& id) const;
  const UeSpec* find_ue(const std::string& id) const;

  static Topology from_json(const Json& j);
  static Topology load(const std::filesystem::path& path);
};

struct LatencyModelConfig {
  double store_bandwidth = 100.0 * 1024 * 1024;  // bytes/s
  double vm_base_boot = 20.0;                    // s
  double container_base_boot = 2.0;              // s
  double jitter_max = 0.5;                       // s
  std::uint64_t seed = 42;
  // Real seconds slept per simulated second of boot; 0 skips the sleep.
  double time_scale = 1.0;
  bool precache = false;
  double scheduling_overhead_budget = 0.1;  // s per instance
};

struct ComputeNodeSpec {
  std::string node_id;
  double cpu = 64;
  std::uint64_t mem = 256ull << 30;
};

struct RanConfig {
  double stats_period = 1.0;
  bool work_conserving = true;
  int enforce_max_attempts = 3;
  double enforce_backoff = 0.05;
  double ack_timeout = 2.0;
  // Simulated subframes advanced per real tick by each eNodeB's traffic loop.
  int subframes_per_tick = 100;
  double traffic_tick = 0.1;
  bool traffic_enabled = true;
};

struct NssfConfig {
  std::string policy = "ROUND_ROBIN";
  int worker_threads = 64;
  double injected_delay = 0.0;  // s, fault injection on /nssf/select
};

struct ListenConfig {
  HostPort nbi{"127.0.0.1", 8080};
  HostPort nssf{"127.0.0.1", 8081};
  HostPort southbound{"127.0.0.1", 2210};
  HostPort default_mme{"127.0.0.1", 0};
};

struct RunConfig {
  std::filesystem::path catalogue_dir;
  std::filesystem::path topology_path;
  std::filesystem::path journal_path;
  bool journal_fsync = false;
  double timer_tick = 1.0;
  std::string default_template = "default-epc";
  double default_floor = 0.1;
  NssfConfig nssf;
  ListenConfig listen;
  LatencyModelConfig latency_model;
  std::vector<ComputeNodeSpec> compute_nodes;
  std::map<std::string, std::uint64_t> images;
  RanConfig ran;
  int s1_max_attempts = 3;
  double s1_backoff = 0.05;
  double t3410 = 15.0;
  CategoryTable category_defaults;
  std::vector<std::string> nssmf_selectors{"sim-nfvo-a"};
  std::string external_gw = "internet-gw";
  // Test hook: terminate the process right after this many journal appends.
  std::optional<int> crash_after_events;

  // Paths are resolved against `base_dir`; E2ES_*_LISTEN env vars override
  // listen addresses. Throws Error(ConfigError).
  static RunConfig from_json(const Json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);
  void check_paths() const;
};

struct TemplateSummary {
  std::string template_id;
  SliceType slice_type;
  std::string core_nssmf_selector;
  VirtualizationKind virtualization_kind;
  std::size_t vnf_count;
};

void to_json(Json& j, const TemplateSummary& s);

class TemplateCatalogue {
 public:
  TemplateCatalogue(CategoryTable defaults, std::set<std::string> registered_nssmfs);

  // Loads every *.json file in `dir`, one template per file.
  void load_dir(const std::filesystem::path& dir);
  // Validates and inserts (or replaces) a template.
  void add(const SliceTemplate& t);

  std::optional<SliceTemplate> find(const std::string& template_id) const;
  std::vector<TemplateSummary> summaries() const;
  std::size_t size() const;
  const CategoryTable& category_defaults() const { return defaults_; }

 private:
  CategoryTable defaults_;
  std::set<std::string> registered_;
  mutable std::shared_mutex mu_;
  std::map<std::string, SliceTemplate> templates_;
};

}  // namespace e2es

#pragma once

// Benchmark harness: open-loop attach load against the NSSF, slice
// instantiation timing, the Mann-Kendall trend test and CSV output.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "e2es/config.hpp"
#include "e2es/domain.hpp"

namespace e2es {

class System;

struct LoadRow {
  double offered_rate = 0.0;  // requests/s
  int concurrency = 0;        // peak requests in flight
  double p50 = 0.0, p90 = 0.0, p99 = 0.0;  // s
  std::uint64_t error_count = 0;
  double window = 0.0;  // s, first send to last completion
  // Not in the CSV; goes to the metadata sidecar.
  double achieved_rate = 0.0;
  std::uint64_t samples = 0;
};

struct LoadReport {
  std::vector<LoadRow> rows;
  bool incomplete = false;
  std::string error;
  unsigned cpu_count = 0;
};

struct AttachLoadOptions {
  HostPort target;  // NSSF
  std::vector<double> rates;
  double duration = 30.0;  // s per rate
  int connections = 32;    // connection cap
  // (ue_id, enb_id) pairs cycled through in order.
  std::vector<std::pair<std::string, std::string>> queries;
  double request_timeout = 30.0;
};

// Open-loop: request i is due at start + i/rate and its response time is
// measured from that due time, so backlog shows up as latency.
LoadReport run_attach_load(const AttachLoadOptions& opts);

// Nearest-rank percentile of an unsorted sample; 0 for an empty one.
double percentile(std::vector<double> values, double q);

struct MannKendall {
  double s = 0.0;
  double z = 0.0;
  double p_value = 1.0;  // one-sided, increasing trend
};

MannKendall mann_kendall(const std::vector<double>& series);

struct Breakdown {
  double t_core = 0.0;
  double t_enb_notify = 0.0;
  double t_ran_config = 0.0;
};

struct InstantiationRow {
  std::uint64_t image_size = 0;
  VirtualizationKind kind = VirtualizationKind::Vm;
  bool cached = false;
  double deploy_duration = 0.0;  // s, REQUEST_ACCEPTED to ACTIVATED
  Breakdown breakdown;
};

struct InstantiationReport {
  std::vector<InstantiationRow> rows;
  bool incomplete = false;
  std::string error;
};

// Deploys one single-MME slice per size and repetition on a running system,
// terminating each afterwards. Images and templates are registered on the fly.
InstantiationReport run_instantiation_bench(System& sys, const std::vector<std::uint64_t>& sizes,
                                            VirtualizationKind kind, bool cached, int repetitions,
                                            const std::string& area_id);

// RFC 4180 writers; numbers are locale independent. Throw Error(IoError).
std::string to_csv(const LoadReport& r);
std::string to_csv(const InstantiationReport& r);
void write_file(const std::filesystem::path& path, const std::string& content);
Json load_metadata(const LoadReport& r);

// Splits one RFC 4180 document into records of fields.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

// "19G", "512M", "0.5G", "1024" (bytes). Binary multiples.
std::uint64_t parse_size(const std::string& text);
// "0.5G..19G" with `count` points, evenly spaced; or a comma list.
std::vector<std::uint64_t> parse_sizes(const std::string& text, int count);

}  // namespace e2es

#pragma once

// Transport sub-slice bookkeeping: VLAN-tagged segments stitching the RAN
// endpoints through the vEPC chain to the external gateway.

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "e2es/core_nssmf.hpp"

namespace e2es {

struct PathSegment {
  std::string from_endpoint;
  std::string to_endpoint;
  int vlan_tag = 0;

  bool operator==(const PathSegment&) const = default;
};

struct TransportPath {
  std::string path_id;
  std::string slice_id;
  std::vector<PathSegment> segments;
  std::string external_gw;
  int vlan_tag = 0;
};

void to_json(Json& j, const PathSegment& s);
void from_json(const Json& j, PathSegment& s);
void to_json(Json& j, const TransportPath& p);
void from_json(const Json& j, TransportPath& p);

// Builds the segment list without allocating anything. Each eNodeB gets an
// access segment to the first VNF; consecutive VNFs are linked through their
// first replica; the last VNF egresses to `external_gw`.
std::vector<PathSegment> build_segments(const std::set<std::string>& enb_endpoints, const VepcRecord& vepc,
                                        const std::vector<std::string>& chain, const std::string& external_gw,
                                        int vlan_tag);

class TransportNssmf {
 public:
  static constexpr int kDefaultVlan = 1;
  static constexpr int kMinVlan = 2;
  static constexpr int kMaxVlan = 4094;

  explicit TransportNssmf(std::string external_gw);

  // Throws Error(VepcNotReady) or Error(VlanExhausted).
  TransportPath stitch(const std::string& slice_id, const std::set<std::string>& enb_endpoints,
                       const VepcRecord& vepc, const std::vector<std::string>& chain);
  // Path on the reserved tag for the default slice.
  TransportPath stitch_default(const std::string& slice_id, const std::set<std::string>& enb_endpoints,
                               const VepcRecord& vepc, const std::vector<std::string>& chain);
  // Idempotent for paths torn down earlier; Error(UnknownPath) for ids never issued.
  void teardown_path(const std::string& path_id);

  std::optional<TransportPath> path(const std::string& path_id) const;
  std::vector<TransportPath> live_paths() const;
  std::set<int> tags_in_use() const;

 private:
  TransportPath make_path(const std::string& slice_id, const std::set<std::string>& enb_endpoints,
                          const VepcRecord& vepc, const std::vector<std::string>& chain, int tag);

  mutable std::mutex mu_;
  std::string external_gw_;
  std::set<int> used_;
  std::map<std::string, TransportPath> live_;
  std::set<std::string> retired_;
  std::uint64_t next_path_ = 1;
};

}  // namespace e2es

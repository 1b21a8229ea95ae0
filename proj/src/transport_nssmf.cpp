#include "e2es/transport_nssmf.hpp"

#include "e2es/error.hpp"

namespace e2es {

void to_json(Json& j, const PathSegment& s) {
  j = Json{{"from_endpoint", s.from_endpoint}, {"to_endpoint", s.to_endpoint}, {"vlan_tag", s.vlan_tag}};
}

void from_json(const Json& j, PathSegment& s) {
  s.from_endpoint = j.at("from_endpoint").get<std::string>();
  s.to_endpoint = j.at("to_endpoint").get<std::string>();
  s.vlan_tag = j.at("vlan_tag").get<int>();
}

void to_json(Json& j, const TransportPath& p) {
  j = Json{{"path_id", p.path_id},
           {"slice_id", p.slice_id},
           {"segments", p.segments},
           {"external_gw", p.external_gw},
           {"vlan_tag", p.vlan_tag}};
}

void from_json(const Json& j, TransportPath& p) {
  p.path_id = j.at("path_id").get<std::string>();
  p.slice_id = j.at("slice_id").get<std::string>();
  p.segments = j.at("segments").get<std::vector<PathSegment>>();
  p.external_gw = j.at("external_gw").get<std::string>();
  p.vlan_tag = j.at("vlan_tag").get<int>();
}

std::vector<PathSegment> build_segments(const std::set<std::string>& enb_endpoints, const VepcRecord& vepc,
                                        const std::vector<std::string>& chain, const std::string& external_gw,
                                        int vlan_tag) {
  auto endpoint_of = [&](const std::string& vnf) {
    const VnfInstance* best = nullptr;
    for (const auto& inst : vepc.vnf_instances) {
      if (inst.vnf_name == vnf && (!best || inst.replica_index < best->replica_index)) best = &inst;
    }
    if (!best) throw Error(ErrorCode::VepcNotReady, "no running instance of " + vnf);
    return best->endpoint;
  };

  std::vector<PathSegment> out;
  if (chain.empty()) {
    for (const auto& enb : enb_endpoints) out.push_back({enb, external_gw, vlan_tag});
    return out;
  }
  const std::string head = endpoint_of(chain.front());
  for (const auto& enb : enb_endpoints) out.push_back({enb, head, vlan_tag});
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    out.push_back({endpoint_of(chain[i]), endpoint_of(chain[i + 1]), vlan_tag});
  }
  out.push_back({endpoint_of(chain.back()), external_gw, vlan_tag});
  return out;
}

TransportNssmf::TransportNssmf(std::string external_gw) : external_gw_(std::move(external_gw)) {}

TransportPath TransportNssmf::make_path(const std::string& slice_id, const std::set<std::string>& enb_endpoints,
                                        const VepcRecord& vepc, const std::vector<std::string>& chain, int tag) {
  TransportPath p;
  p.path_id = "path-" + std::to_string(next_path_++);
  p.slice_id = slice_id;
  p.external_gw = external_gw_;
  p.vlan_tag = tag;
  p.segments = build_segments(enb_endpoints, vepc, chain, external_gw_, tag);
  return p;
}

TransportPath TransportNssmf::stitch(const std::string& slice_id, const std::set<std::string>& enb_endpoints,
                                     const VepcRecord& vepc, const std::vector<std::string>& chain) {
  if (vepc.status != VepcStatus::Ready) throw Error(ErrorCode::VepcNotReady, slice_id);
  std::lock_guard lock(mu_);
  int tag = kMinVlan;
  while (tag <= kMaxVlan && used_.count(tag)) ++tag;
  if (tag > kMaxVlan) throw Error(ErrorCode::VlanExhausted, slice_id);
  TransportPath p = make_path(slice_id, enb_endpoints, vepc, chain, tag);
  used_.insert(tag);
  live_[p.path_id] = p;
  return p;
}

TransportPath TransportNssmf::stitch_default(const std::string& slice_id, const std::set<std::string>& enb_endpoints,
                                             const VepcRecord& vepc, const std::vector<std::string>& chain) {
  if (vepc.status != VepcStatus::Ready) throw Error(ErrorCode::VepcNotReady, slice_id);
  std::lock_guard lock(mu_);
  TransportPath p = make_path(slice_id, enb_endpoints, vepc, chain, kDefaultVlan);
  live_[p.path_id] = p;
  return p;
}

void TransportNssmf::teardown_path(const std::string& path_id) {
  std::lock_guard lock(mu_);
  auto it = live_.find(path_id);
  if (it == live_.end()) {
    if (retired_.count(path_id)) return;
    throw Error(ErrorCode::UnknownPath, path_id);
  }
  if (it->second.vlan_tag != kDefaultVlan) used_.erase(it->second.vlan_tag);
  retired_.insert(path_id);
  live_.erase(it);
}

std::optional<TransportPath> TransportNssmf::path(const std::string& path_id) const {
  std::lock_guard lock(mu_);
  auto it = live_.find(path_id);
  if (it == live_.end()) return std::nullopt;
  return it->second;
}

std::vector<TransportPath> TransportNssmf::live_paths() const {
  std::lock_guard lock(mu_);
  std::vector<TransportPath> out;
  for (const auto& [id, p] : live_) out.push_back(p);
  return out;
}

std::set<int> TransportNssmf::tags_in_use() const {
  std::lock_guard lock(mu_);
  return used_;
}

}  // namespace e2es

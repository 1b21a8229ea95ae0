#pragma once

// Shared domain model: slice categories, templates, requirements, service
// areas and the lifecycle phase relation. Pure data, no I/O.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace e2es {

using Json = nlohmann::json;

enum class SliceType { Xmbb, Urllc, Mmtc };
enum class VnfRole { Mme, SgwPgw, Hss, Other };
enum class VirtualizationKind { Vm, Container };
enum class LatencyClass { Strict, Relaxed };
enum class SliceKind { Default, Dedicated };
enum class ReliabilityLevel { Standard, High };

enum class Phase {
  Requested,
  CoreDeploying,
  CoreReady,
  S1Associating,
  RanConfiguring,
  Active,
  Terminating,
  Terminated,
  Failed,
};

NLOHMANN_JSON_SERIALIZE_ENUM(SliceType, {{SliceType::Xmbb, "XMBB"},
                                         {SliceType::Urllc, "URLLC"},
                                         {SliceType::Mmtc, "MMTC"}})
NLOHMANN_JSON_SERIALIZE_ENUM(VnfRole, {{VnfRole::Mme, "MME"},
                                       {VnfRole::SgwPgw, "SGW_PGW"},
                                       {VnfRole::Hss, "HSS"},
                                       {VnfRole::Other, "OTHER"}})
NLOHMANN_JSON_SERIALIZE_ENUM(VirtualizationKind, {{VirtualizationKind::Vm, "VM"},
                                                  {VirtualizationKind::Container, "CONTAINER"}})
NLOHMANN_JSON_SERIALIZE_ENUM(LatencyClass, {{LatencyClass::Strict, "STRICT"},
                                            {LatencyClass::Relaxed, "RELAXED"}})
NLOHMANN_JSON_SERIALIZE_ENUM(SliceKind, {{SliceKind::Default, "DEFAULT"},
                                         {SliceKind::Dedicated, "DEDICATED"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ReliabilityLevel, {{ReliabilityLevel::Standard, "STANDARD"},
                                                {ReliabilityLevel::High, "HIGH"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Phase, {{Phase::Requested, "REQUESTED"},
                                     {Phase::CoreDeploying, "CORE_DEPLOYING"},
                                     {Phase::CoreReady, "CORE_READY"},
                                     {Phase::S1Associating, "S1_ASSOCIATING"},
                                     {Phase::RanConfiguring, "RAN_CONFIGURING"},
                                     {Phase::Active, "ACTIVE"},
                                     {Phase::Terminating, "TERMINATING"},
                                     {Phase::Terminated, "TERMINATED"},
                                     {Phase::Failed, "FAILED"}})

// Parses an enum from its wire name; throws Error(InvalidArgument) on an
// unknown name instead of silently mapping to the first enumerator.
template <typename E>
E enum_from_string(const std::string& name);

template <typename E>
std::string enum_name(E value) {
  return Json(value).template get<std::string>();
}

struct RanRequirement {
  double min_rrb_fraction = 0.0;
  double weight = 1.0;
  LatencyClass latency_class = LatencyClass::Relaxed;
  double per_ue_bitrate = 0.0;  // bits/s

  bool operator==(const RanRequirement&) const = default;
};

// Field-wise partial requirement; set fields win over the base.
struct RanRequirementOverride {
  std::optional<double> min_rrb_fraction;
  std::optional<double> weight;
  std::optional<LatencyClass> latency_class;
  std::optional<double> per_ue_bitrate;

  RanRequirement apply(RanRequirement base) const;
};

struct VnfDescriptor {
  std::string name;
  VnfRole role = VnfRole::Other;
  std::string image_id;
  std::uint64_t image_size = 0;  // bytes
  double cpu_demand = 1.0;       // vCPUs
  std::uint64_t mem_demand = 0;  // bytes
  int min_replicas = 1;

  bool operator==(const VnfDescriptor&) const = default;
};

struct ElasticityBounds {
  int min_replicas = 1;
  int max_replicas = 1;

  bool operator==(const ElasticityBounds&) const = default;
};

struct SliceTemplate {
  std::string template_id;
  SliceType slice_type = SliceType::Xmbb;
  std::vector<VnfDescriptor> vnfs;
  std::vector<std::pair<std::string, std::string>> forwarding_graph;
  std::string core_nssmf_selector;
  VirtualizationKind virtualization_kind = VirtualizationKind::Vm;
  RanRequirement ran_requirements;
  double default_lifespan = 0.0;  // seconds
  std::map<VnfRole, ElasticityBounds> elasticity;
  std::vector<std::string> locations;  // carried, never used for placement

  const VnfDescriptor* find_vnf(const std::string& name) const;
};

struct ServiceArea {
  std::string area_id;
  std::set<std::string> enb_ids;
};

// Default RAN requirement per slice category, loaded from configuration.
using CategoryTable = std::map<SliceType, RanRequirement>;

RanRequirement classify_requirements(SliceType type, const CategoryTable& table);

struct Violation {
  std::string code;    // e.g. "unknown VNF reference"
  std::string detail;  // offending item

  auto operator<=>(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;  // sorted, duplicates removed

  bool ok() const { return violations.empty(); }
  bool has(const std::string& code) const;
};

ValidationReport validate_template(const SliceTemplate& t);

// Orders the VNFs of a template along its forwarding graph. VNFs not named in
// the graph follow in declaration order. Requires an acyclic graph.
std::vector<std::string> forwarding_chain(const SliceTemplate& t);

bool is_terminal(Phase p);
bool is_valid_transition(Phase from, Phase to);
// Checks that `path` (starting from REQUESTED) follows the lifecycle relation.
bool is_valid_phase_path(const std::vector<Phase>& path);

void to_json(Json& j, const RanRequirement& r);
void from_json(const Json& j, RanRequirement& r);
void to_json(Json& j, const RanRequirementOverride& r);
void from_json(const Json& j, RanRequirementOverride& r);
void to_json(Json& j, const VnfDescriptor& v);
void from_json(const Json& j, VnfDescriptor& v);
void to_json(Json& j, const ElasticityBounds& e);
void from_json(const Json& j, ElasticityBounds& e);
void to_json(Json& j, const SliceTemplate& t);
// Requires a complete ran_requirements object; use parse_template() to merge
// a partial one over the category defaults.
void from_json(const Json& j, SliceTemplate& t);
void to_json(Json& j, const ServiceArea& a);
void from_json(const Json& j, ServiceArea& a);

SliceTemplate parse_template(const Json& j, const CategoryTable& defaults);
CategoryTable parse_category_table(const Json& j);

}  // namespace e2es

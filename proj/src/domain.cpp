#include "e2es/domain.hpp"

#include <algorithm>
#include <functional>

#include "e2es/error.hpp"

namespace e2es {

template <typename E>
E enum_from_string(const std::string& name) {
  const Json j = name;
  E value = j.get<E>();
  if (Json(value).get<std::string>() != name) {
    throw Error(ErrorCode::InvalidArgument, "unknown enum value '" + name + "'");
  }
  return value;
}

template SliceType enum_from_string<SliceType>(const std::string&);
template VnfRole enum_from_string<VnfRole>(const std::string&);
template VirtualizationKind enum_from_string<VirtualizationKind>(const std::string&);
template LatencyClass enum_from_string<LatencyClass>(const std::string&);
template SliceKind enum_from_string<SliceKind>(const std::string&);
template ReliabilityLevel enum_from_string<ReliabilityLevel>(const std::string&);
template Phase enum_from_string<Phase>(const std::string&);

namespace {

template <typename E>
E strict_enum(const Json& j, const char* field) {
  if (!j.is_string()) {
    throw Error(ErrorCode::InvalidArgument, std::string(field) + " must be a string");
  }
  return enum_from_string<E>(j.get<std::string>());
}

}  // namespace

RanRequirement RanRequirementOverride::apply(RanRequirement base) const {
  if (min_rrb_fraction) base.min_rrb_fraction = *min_rrb_fraction;
  if (weight) base.weight = *weight;
  if (latency_class) base.latency_class = *latency_class;
  if (per_ue_bitrate) base.per_ue_bitrate = *per_ue_bitrate;
  return base;
}

const VnfDescriptor* SliceTemplate::find_vnf(const std::string& name) const {
  auto it = std::find_if(vnfs.begin(), vnfs.end(), [&](const VnfDescriptor& v) { return v.name == name; });
  return it == vnfs.end() ? nullptr : &*it;
}

RanRequirement classify_requirements(SliceType type, const CategoryTable& table) {
  auto it = table.find(type);
  if (it == table.end()) {
    throw Error(ErrorCode::ConfigError, "no default requirement for category " + enum_name(type));
  }
  return it->second;
}

bool ValidationReport::has(const std::string& code) const {
  return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.code == code; });
}

namespace {

// Kahn's algorithm over the declared names; returns nullopt on a cycle.
std::optional<std::vector<std::string>> topo_order(const SliceTemplate& t) {
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& v : t.vnfs) indegree.emplace(v.name, 0);
  for (const auto& [from, to] : t.forwarding_graph) {
    if (!indegree.count(from) || !indegree.count(to)) continue;
    out[from].push_back(to);
    ++indegree[to];
  }
  // Ready set is visited in declaration order so the result is stable.
  std::vector<std::string> order;
  std::vector<std::string> ready;
  for (const auto& v : t.vnfs) {
    if (indegree[v.name] == 0 && std::find(ready.begin(), ready.end(), v.name) == ready.end()) {
      ready.push_back(v.name);
    }
  }
  while (!ready.empty()) {
    std::string n = ready.front();
    ready.erase(ready.begin());
    order.push_back(n);
    for (const auto& m : out[n]) {
      if (--indegree[m] == 0) ready.push_back(m);
    }
  }
  if (order.size() != indegree.size()) return std::nullopt;
  return order;
}

}  // namespace

ValidationReport validate_template(const SliceTemplate& t) {
  ValidationReport report;
  auto add = [&](std::string code, std::string detail) {
    report.violations.push_back({std::move(code), std::move(detail)});
  };

  if (t.template_id.empty()) add("empty template id", "");
  if (t.vnfs.empty()) add("empty VNF set", t.template_id);
  if (t.core_nssmf_selector.empty()) add("missing NSSMF selector", t.template_id);
  if (!(t.default_lifespan > 0.0)) add("non-positive lifespan", std::to_string(t.default_lifespan));

  std::map<std::string, int> names;
  for (const auto& v : t.vnfs) {
    if (++names[v.name] == 2) add("duplicate VNF name", v.name);
    if (v.name.empty()) add("empty VNF name", "");
    if (v.image_size == 0) add("non-positive image size", v.name);
    if (v.min_replicas < 1) add("min_replicas below 1", v.name);
    if (v.cpu_demand < 0.0) add("negative cpu demand", v.name);
  }

  bool dangling = false;
  for (const auto& [from, to] : t.forwarding_graph) {
    for (const auto* end : {&from, &to}) {
      if (!names.count(*end)) {
        add("unknown VNF reference", *end);
        dangling = true;
      }
    }
  }
  if (!dangling && !topo_order(t)) add("cyclic forwarding graph", t.template_id);

  const auto& r = t.ran_requirements;
  if (!(r.min_rrb_fraction >= 0.0 && r.min_rrb_fraction <= 1.0)) {
    add("min_rrb_fraction out of range", std::to_string(r.min_rrb_fraction));
  }
  if (!(r.weight > 0.0)) add("non-positive weight", std::to_string(r.weight));
  if (r.per_ue_bitrate < 0.0) add("negative bitrate", std::to_string(r.per_ue_bitrate));

  for (const auto& [role, bounds] : t.elasticity) {
    if (bounds.min_replicas < 1 || bounds.max_replicas < bounds.min_replicas) {
      add("invalid elasticity bounds", enum_name(role));
    }
  }

  std::sort(report.violations.begin(), report.violations.end());
  report.violations.erase(std::unique(report.violations.begin(), report.violations.end()),
                          report.violations.end());
  return report;
}

std::vector<std::string> forwarding_chain(const SliceTemplate& t) {
  auto order = topo_order(t);
  if (!order) throw Error(ErrorCode::InvalidArgument, "forwarding graph of " + t.template_id + " is cyclic");
  std::set<std::string> in_graph;
  for (const auto& [from, to] : t.forwarding_graph) in_graph.insert({from, to});
  std::stable_partition(order->begin(), order->end(), [&](const std::string& n) { return in_graph.count(n) > 0; });
  return *order;
}

bool is_terminal(Phase p) { return p == Phase::Terminated || p == Phase::Failed; }

bool is_valid_transition(Phase from, Phase to) {
  if (to == Phase::Failed) return !is_terminal(from);
  switch (from) {
    case Phase::Requested: return to == Phase::CoreDeploying;
    case Phase::CoreDeploying: return to == Phase::CoreReady;
    case Phase::CoreReady: return to == Phase::S1Associating;
    case Phase::S1Associating: return to == Phase::RanConfiguring;
    case Phase::RanConfiguring: return to == Phase::Active;
    case Phase::Active: return to == Phase::Terminating;
    case Phase::Terminating: return to == Phase::Terminated;
    case Phase::Terminated:
    case Phase::Failed: return false;
  }
  return false;
}

bool is_valid_phase_path(const std::vector<Phase>& path) {
  if (path.empty() || path.front() != Phase::Requested) return false;
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (!is_valid_transition(path[i - 1], path[i])) return false;
  }
  return true;
}

// --- JSON -------------------------------------------------------------------

void to_json(Json& j, const RanRequirement& r) {
  j = Json{{"min_rrb_fraction", r.min_rrb_fraction},
           {"weight", r.weight},
           {"latency_class", r.latency_class},
           {"per_ue_bitrate", r.per_ue_bitrate}};
}

void from_json(const Json& j, RanRequirement& r) {
  r.min_rrb_fraction = j.at("min_rrb_fraction").get<double>();
  r.weight = j.at("weight").get<double>();
  r.latency_class = strict_enum<LatencyClass>(j.at("latency_class"), "latency_class");
  r.per_ue_bitrate = j.value("per_ue_bitrate", 0.0);
}

void to_json(Json& j, const RanRequirementOverride& r) {
  j = Json::object();
  if (r.min_rrb_fraction) j["min_rrb_fraction"] = *r.min_rrb_fraction;
  if (r.weight) j["weight"] = *r.weight;
  if (r.latency_class) j["latency_class"] = *r.latency_class;
  if (r.per_ue_bitrate) j["per_ue_bitrate"] = *r.per_ue_bitrate;
}

void from_json(const Json& j, RanRequirementOverride& r) {
  r = {};
  if (j.contains("min_rrb_fraction")) r.min_rrb_fraction = j["min_rrb_fraction"].get<double>();
  if (j.contains("weight")) r.weight = j["weight"].get<double>();
  if (j.contains("latency_class")) r.latency_class = strict_enum<LatencyClass>(j["latency_class"], "latency_class");
  if (j.contains("per_ue_bitrate")) r.per_ue_bitrate = j["per_ue_bitrate"].get<double>();
}

void to_json(Json& j, const VnfDescriptor& v) {
  j = Json{{"name", v.name},
           {"function_role", v.role},
           {"image_id", v.image_id},
           {"image_size", v.image_size},
           {"cpu_demand", v.cpu_demand},
           {"mem_demand", v.mem_demand},
           {"min_replicas", v.min_replicas}};
}

void from_json(const Json& j, VnfDescriptor& v) {
  v.name = j.at("name").get<std::string>();
  v.role = strict_enum<VnfRole>(j.at("function_role"), "function_role");
  v.image_id = j.at("image_id").get<std::string>();
  v.image_size = j.at("image_size").get<std::uint64_t>();
  v.cpu_demand = j.value("cpu_demand", 1.0);
  v.mem_demand = j.value("mem_demand", std::uint64_t{0});
  v.min_replicas = j.value("min_replicas", 1);
}

void to_json(Json& j, const ElasticityBounds& e) {
  j = Json{{"min_replicas", e.min_replicas}, {"max_replicas", e.max_replicas}};
}

void from_json(const Json& j, ElasticityBounds& e) {
  e.min_replicas = j.at("min_replicas").get<int>();
  e.max_replicas = j.at("max_replicas").get<int>();
}

void to_json(Json& j, const SliceTemplate& t) {
  Json elasticity = Json::object();
  for (const auto& [role, bounds] : t.elasticity) elasticity[enum_name(role)] = bounds;
  Json graph = Json::array();
  for (const auto& [from, to] : t.forwarding_graph) graph.push_back({from, to});
  j = Json{{"template_id", t.template_id},
           {"slice_type", t.slice_type},
           {"vnfs", t.vnfs},
           {"forwarding_graph", graph},
           {"core_nssmf_selector", t.core_nssmf_selector},
           {"virtualization_kind", t.virtualization_kind},
           {"ran_requirements", t.ran_requirements},
           {"default_lifespan", t.default_lifespan},
           {"elasticity", elasticity},
           {"locations", t.locations}};
}

namespace {

void read_template_common(const Json& j, SliceTemplate& t) {
  t.template_id = j.at("template_id").get<std::string>();
  t.slice_type = strict_enum<SliceType>(j.at("slice_type"), "slice_type");
  t.vnfs = j.at("vnfs").get<std::vector<VnfDescriptor>>();
  t.forwarding_graph.clear();
  for (const auto& edge : j.value("forwarding_graph", Json::array())) {
    if (!edge.is_array() || edge.size() != 2) {
      throw Error(ErrorCode::InvalidArgument, "forwarding_graph edges must be [from, to] pairs");
    }
    t.forwarding_graph.emplace_back(edge[0].get<std::string>(), edge[1].get<std::string>());
  }
  t.core_nssmf_selector = j.at("core_nssmf_selector").get<std::string>();
  t.virtualization_kind = strict_enum<VirtualizationKind>(j.at("virtualization_kind"), "virtualization_kind");
  t.default_lifespan = j.at("default_lifespan").get<double>();
  t.elasticity.clear();
  const Json elasticity = j.value("elasticity", Json::object());
  for (const auto& [role, bounds] : elasticity.items()) {
    t.elasticity[enum_from_string<VnfRole>(role)] = bounds.get<ElasticityBounds>();
  }
  t.locations = j.value("locations", std::vector<std::string>{});
}

}  // namespace

void from_json(const Json& j, SliceTemplate& t) {
  read_template_common(j, t);
  t.ran_requirements = j.at("ran_requirements").get<RanRequirement>();
}

SliceTemplate parse_template(const Json& j, const CategoryTable& defaults) {
  SliceTemplate t;
  read_template_common(j, t);
  RanRequirement base = classify_requirements(t.slice_type, defaults);
  if (j.contains("ran_requirements")) {
    base = j["ran_requirements"].get<RanRequirementOverride>().apply(base);
  }
  t.ran_requirements = base;
  return t;
}

CategoryTable parse_category_table(const Json& j) {
  CategoryTable table;
  for (const auto& [name, req] : j.items()) {
    table[enum_from_string<SliceType>(name)] = req.get<RanRequirement>();
  }
  return table;
}

void to_json(Json& j, const ServiceArea& a) { j = Json{{"area_id", a.area_id}, {"enb_ids", a.enb_ids}}; }

void from_json(const Json& j, ServiceArea& a) {
  a.area_id = j.at("area_id").get<std::string>();
  a.enb_ids = j.at("enb_ids").get<std::set<std::string>>();
  if (a.enb_ids.empty()) throw Error(ErrorCode::InvalidArgument, "service area " + a.area_id + " has no eNodeBs");
}

}  // namespace e2es

#include "e2es/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <mutex>

#include "e2es/error.hpp"

namespace fs = std::filesystem;

namespace e2es {

namespace {

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

HostPort HostPort::parse(const std::string& text) {
  auto colon = text.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::ConfigError, "address '" + text + "' lacks a port");
  HostPort hp;
  hp.host = text.substr(0, colon);
  try {
    hp.port = std::stoi(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "bad port in '" + text + "'");
  }
  if (hp.port < 0 || hp.port > 65535) throw Error(ErrorCode::ConfigError, "port out of range in '" + text + "'");
  return hp;
}

const EnbSpec* Topology::find_enb(const std::string& id) const {
  auto it = std::find_if(enbs.begin(), enbs.end(), [&](const EnbSpec& e) { return e.enb_id == id; });
  return it == enbs.end() ? nullptr : &*it;
}

const UeSpec* Topology::find_ue(const std::string& id) const {
  auto it = std::find_if(ues.begin(), ues.end(), [&](const UeSpec& u) { return u.ue_id == id; });
  return it == ues.end() ? nullptr : &*it;
}

Topology Topology::from_json(const Json& j) {
  Topology t;
  try {
    for (const auto& e : j.at("enbs")) {
      EnbSpec spec{e.at("enb_id").get<std::string>(), e.value("total_rrb", 100)};
      if (spec.total_rrb <= 0) throw Error(ErrorCode::ConfigError, "total_rrb must be positive for " + spec.enb_id);
      if (t.find_enb(spec.enb_id)) throw Error(ErrorCode::ConfigError, "duplicate eNodeB " + spec.enb_id);
      t.enbs.push_back(spec);
    }
    for (const auto& a : j.value("service_areas", Json::array())) {
      auto area = a.get<ServiceArea>();
      for (const auto& enb : area.enb_ids) {
        if (!t.find_enb(enb)) throw Error(ErrorCode::ConfigError, "area " + area.area_id + " names unknown eNodeB " + enb);
      }
      t.areas[area.area_id] = area;
    }
    for (const auto& u : j.value("ues", Json::array())) {
      UeSpec ue{u.at("ue_id").get<std::string>(), u.at("home_enb").get<std::string>(),
                u.value("subscribed_slice", std::string{}), u.value("channel_quality", 10)};
      if (!t.find_enb(ue.home_enb)) throw Error(ErrorCode::ConfigError, "UE " + ue.ue_id + " homed on unknown eNodeB");
      t.ues.push_back(ue);
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("topology: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    throw Error(ErrorCode::ConfigError, std::string("topology: ") + e.what());
  }
  return t;
}

Topology Topology::load(const fs::path& path) { return from_json(read_json_file(path)); }

RunConfig RunConfig::from_json(const Json& j, const fs::path& base) {
  RunConfig c;
  try {
    c.catalogue_dir = resolve(base, j.at("catalogue_dir").get<std::string>());
    c.topology_path = resolve(base, j.at("topology_path").get<std::string>());
    c.journal_path = resolve(base, j.value("journal_path", std::string("journal.ndjson")));
    c.journal_fsync = j.value("journal_fsync", std::string("never")) == "every_event";
    c.timer_tick = j.value("timer_tick", c.timer_tick);
    c.default_template = j.value("default_template", c.default_template);
    c.default_floor = j.value("default_floor", c.default_floor);
    c.t3410 = j.value("t3410", c.t3410);
    c.external_gw = j.value("external_gw", c.external_gw);
    c.nssmf_selectors = j.value("nssmf_selectors", c.nssmf_selectors);
    if (j.contains("crash_after_events")) c.crash_after_events = j["crash_after_events"].get<int>();

    if (j.contains("nssf")) {
      const auto& n = j["nssf"];
      c.nssf.policy = n.value("policy", c.nssf.policy);
      c.nssf.worker_threads = n.value("worker_threads", c.nssf.worker_threads);
      c.nssf.injected_delay = n.value("injected_delay", c.nssf.injected_delay);
    }
    if (j.contains("listen")) {
      const auto& l = j["listen"];
      if (l.contains("nbi")) c.listen.nbi = HostPort::parse(l["nbi"]);
      if (l.contains("nssf")) c.listen.nssf = HostPort::parse(l["nssf"]);
      if (l.contains("southbound")) c.listen.southbound = HostPort::parse(l["southbound"]);
      if (l.contains("default_mme")) c.listen.default_mme = HostPort::parse(l["default_mme"]);
    }
    if (j.contains("latency_model")) {
      const auto& m = j["latency_model"];
      auto& lm = c.latency_model;
      lm.store_bandwidth = m.value("store_bandwidth", lm.store_bandwidth);
      if (m.contains("base_boot_time")) {
        lm.vm_base_boot = m["base_boot_time"].value("VM", lm.vm_base_boot);
        lm.container_base_boot = m["base_boot_time"].value("CONTAINER", lm.container_base_boot);
      }
      lm.jitter_max = m.value("jitter_max", lm.jitter_max);
      lm.seed = m.value("seed", lm.seed);
      lm.time_scale = m.value("time_scale", lm.time_scale);
      lm.precache = m.value("precache", lm.precache);
      lm.scheduling_overhead_budget = m.value("scheduling_overhead_budget", lm.scheduling_overhead_budget);
      if (!(lm.store_bandwidth > 0)) throw Error(ErrorCode::ConfigError, "store_bandwidth must be positive");
    }
    for (const auto& n : j.value("compute_nodes", Json::array())) {
      ComputeNodeSpec spec;
      spec.node_id = n.at("node_id").get<std::string>();
      spec.cpu = n.value("cpu", spec.cpu);
      spec.mem = n.value("mem", spec.mem);
      c.compute_nodes.push_back(spec);
    }
    if (c.compute_nodes.empty()) c.compute_nodes.push_back({"node-1"});
    c.images = j.value("images", c.images);
    if (j.contains("ran")) {
      const auto& r = j["ran"];
      c.ran.stats_period = r.value("stats_period", c.ran.stats_period);
      c.ran.work_conserving = r.value("work_conserving", c.ran.work_conserving);
      c.ran.enforce_max_attempts = r.value("enforce_max_attempts", c.ran.enforce_max_attempts);
      c.ran.enforce_backoff = r.value("enforce_backoff", c.ran.enforce_backoff);
      c.ran.ack_timeout = r.value("ack_timeout", c.ran.ack_timeout);
      c.ran.subframes_per_tick = r.value("subframes_per_tick", c.ran.subframes_per_tick);
      c.ran.traffic_tick = r.value("traffic_tick", c.ran.traffic_tick);
      c.ran.traffic_enabled = r.value("traffic_enabled", c.ran.traffic_enabled);
    }
    if (j.contains("s1")) {
      c.s1_max_attempts = j["s1"].value("max_attempts", c.s1_max_attempts);
      c.s1_backoff = j["s1"].value("backoff", c.s1_backoff);
    }
    c.category_defaults = parse_category_table(j.at("category_defaults"));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }

  if (const char* v = std::getenv("E2ES_NBI_LISTEN")) c.listen.nbi = HostPort::parse(v);
  if (const char* v = std::getenv("E2ES_NSSF_LISTEN")) c.listen.nssf = HostPort::parse(v);
  if (const char* v = std::getenv("E2ES_SOUTHBOUND_LISTEN")) c.listen.southbound = HostPort::parse(v);
  if (const char* v = std::getenv("E2ES_DEFAULT_MME_LISTEN")) c.listen.default_mme = HostPort::parse(v);
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  auto base = fs::absolute(path).parent_path();
  return from_json(read_json_file(path), base);
}

void RunConfig::check_paths() const {
  if (!fs::is_directory(catalogue_dir)) throw Error(ErrorCode::ConfigError, "catalogue dir missing: " + catalogue_dir.string());
  if (!fs::is_regular_file(topology_path)) throw Error(ErrorCode::ConfigError, "topology file missing: " + topology_path.string());
  auto parent = journal_path.parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw Error(ErrorCode::ConfigError, "journal directory missing: " + parent.string());
  }
}

void to_json(Json& j, const TemplateSummary& s) {
  j = Json{{"template_id", s.template_id},
           {"slice_type", s.slice_type},
           {"core_nssmf_selector", s.core_nssmf_selector},
           {"virtualization_kind", s.virtualization_kind},
           {"vnf_count", s.vnf_count}};
}

TemplateCatalogue::TemplateCatalogue(CategoryTable defaults, std::set<std::string> registered_nssmfs)
    : defaults_(std::move(defaults)), registered_(std::move(registered_nssmfs)) {}

void TemplateCatalogue::load_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::ConfigError, "catalogue dir missing: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      add(parse_template(read_json_file(f), defaults_));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ConfigError, f.string() + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigError, f.string() + ": " + e.what());
    }
  }
}

void TemplateCatalogue::add(const SliceTemplate& t) {
  auto report = validate_template(t);
  if (!registered_.count(t.core_nssmf_selector)) {
    report.violations.push_back({"unregistered NSSMF", t.core_nssmf_selector});
  }
  if (!report.ok()) {
    std::string msg = "template " + t.template_id + " invalid:";
    for (const auto& v : report.violations) msg += " [" + v.code + (v.detail.empty() ? "" : ": " + v.detail) + "]";
    throw Error(ErrorCode::InvalidArgument, msg);
  }
  std::unique_lock lock(mu_);
  templates_[t.template_id] = t;
}

std::optional<SliceTemplate> TemplateCatalogue::find(const std::string& template_id) const {
  std::shared_lock lock(mu_);
  auto it = templates_.find(template_id);
  if (it == templates_.end()) return std::nullopt;
  return it->second;
}

std::vector<TemplateSummary> TemplateCatalogue::summaries() const {
  std::shared_lock lock(mu_);
  std::vector<TemplateSummary> out;
  for (const auto& [id, t] : templates_) {
    out.push_back({id, t.slice_type, t.core_nssmf_selector, t.virtualization_kind, t.vnfs.size()});
  }
  return out;
}

std::size_t TemplateCatalogue::size() const {
  std::shared_lock lock(mu_);
  return templates_.size();
}

}  // namespace e2es

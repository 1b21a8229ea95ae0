// e2es: run the orchestrator, drive it over the NBI, and run benchmarks.

#include <httplib.h>
#include <signal.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "e2es/bench.hpp"
#include "e2es/error.hpp"
#include "e2es/platform.hpp"

using namespace e2es;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitUnreachable = 2;
constexpr int kExitErrorBase = 10;  // + ErrorCode index

int exit_code(ErrorCode code) { return kExitErrorBase + static_cast<int>(code); }

struct Output {
  bool json = false;

  void line(const Json& j, const std::string& human) const {
    if (json) std::cout << j.dump() << std::endl;
    else std::cout << human << std::endl;
  }
  int fail(const Error& e) const {
    if (json) std::cout << Json{{"error", std::string(to_string(e.code()))}, {"message", e.detail()}}.dump() << std::endl;
    else std::cerr << "error: " << e.what() << std::endl;
    return e.code() == ErrorCode::TargetUnreachable ? kExitUnreachable : exit_code(e.code());
  }
};

HostPort env_addr(const char* var, HostPort fallback) {
  if (const char* v = std::getenv(var)) return HostPort::parse(v);
  return fallback;
}

// Thin NBI client; transport failures become TARGET_UNREACHABLE.
Json nbi_call(const HostPort& nbi, const std::string& method, const std::string& path, const Json& body = {}) {
  httplib::Client cli(nbi.host, nbi.port);
  cli.set_connection_timeout(std::chrono::seconds(5));
  cli.set_read_timeout(std::chrono::seconds(600));
  httplib::Result res;
  if (method == "GET") res = cli.Get(path);
  else if (method == "POST") res = cli.Post(path, body.dump(), "application/json");
  else res = cli.Delete(path);
  if (!res) throw Error(ErrorCode::TargetUnreachable, "NBI at " + nbi.str() + ": " + httplib::to_string(res.error()));
  Json j = Json::parse(res->body, nullptr, false);
  if (res->status >= 300) {
    if (!j.is_discarded() && j.is_object() && j.contains("error")) {
      throw Error(error_code_from_string(j.value("error", "INTERNAL")), j.value("message", ""));
    }
    throw Error(ErrorCode::Internal, "HTTP " + std::to_string(res->status));
  }
  if (j.is_discarded()) throw Error(ErrorCode::Internal, "NBI returned non-JSON body");
  return j;
}

std::string url_encode(const std::string& s) { return httplib::detail::encode_url(s); }

sigset_t shutdown_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  return set;
}

int wait_for_signal() {
  sigset_t set = shutdown_signals();
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

int cmd_run(const Output& out, const std::string& config_path, const std::string& only,
            const std::string& remote_nssf, std::optional<int> crash_after, const std::string& journal) {
  RunConfig cfg = RunConfig::load(config_path);
  if (crash_after) cfg.crash_after_events = *crash_after;
  if (!journal.empty()) cfg.journal_path = std::filesystem::absolute(journal);

  if (only == "nssf") {
    StandaloneNssf nssf(cfg);
    HostPort addr = nssf.start();
    out.line(Json{{"component", "nssf"}, {"ready", true}, {"listen", addr.str()}}, "nssf ready on " + addr.str());
    wait_for_signal();
    nssf.stop();
    return 0;
  }
  if (only != "all") throw Error(ErrorCode::InvalidArgument, "--only must be 'all' or 'nssf'");

  std::optional<HostPort> remote;
  if (!remote_nssf.empty()) remote = HostPort::parse(remote_nssf);
  System sys(cfg, remote);
  sys.start();
  auto ready = [&](const std::string& name, const std::string& addr) {
    out.line(Json{{"component", name}, {"ready", true}, {"listen", addr}}, name + " ready" + (addr.empty() ? "" : " on " + addr));
  };
  ready("nssf", sys.nssf_addr().str());
  ready("ran-nssmf", sys.southbound_addr().str());
  ready("core-nssmf", "");
  ready("transport-nssmf", "");
  ready("enb-fleet", "");
  ready("nsmf", sys.nbi_addr().str());
  const std::string def = sys.nsmf().default_slice_id();
  out.line(Json{{"default_slice", def}, {"state", sys.nsmf().status(def).phase}}, "default slice " + def + " ACTIVE");

  wait_for_signal();
  sys.stop();
  out.line(Json{{"shutdown", true}}, "stopped");
  return 0;
}

void print_status(const Output& out, const Json& st) {
  if (out.json) {
    out.line(st, "");
    return;
  }
  std::cout << st.value("slice_id", "") << "  " << st.value("state", "") << "  template=" << st.value("template_id", "")
            << "  kind=" << st.value("kind", "") << std::endl;
  for (const auto& e : st.value("events", Json::array())) {
    std::cout << "  #" << e.value("seq", 0) << " " << e.value("kind", "") << " t=" << e.value("timestamp", 0.0)
              << std::endl;
  }
}

std::vector<double> parse_rates(const std::string& text) {
  std::vector<double> rates;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    try {
      rates.push_back(std::stod(text.substr(pos, comma - pos)));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad rate list '" + text + "'");
    }
    pos = comma + 1;
  }
  return rates;
}

}  // namespace

int main(int argc, char** argv) {
  // Shutdown signals are handled synchronously by `run`; block them before
  // any thread exists so every thread inherits the mask.
  sigset_t set = shutdown_signals();
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  signal(SIGPIPE, SIG_IGN);

  CLI::App app{"End-to-end network slice orchestrator"};
  app.require_subcommand(1);
  Output out;
  app.add_flag("--json", out.json, "Line-oriented JSON output");
  std::string nbi_text;
  app.add_option("--nbi", nbi_text, "NBI address (default $E2ES_NBI_LISTEN or 127.0.0.1:8080)");

  std::string config_path = "config/e2es.json";
  std::string only = "all", remote_nssf, journal;
  std::optional<int> crash_after;
  auto* run = app.add_subcommand("run", "Start all components and serve until interrupted");
  run->add_option("-c,--config", config_path, "Run configuration")->check(CLI::ExistingFile);
  run->add_option("--only", only, "Run one component in this process")->check(CLI::IsMember({"all", "nssf"}));
  run->add_option("--nssf-remote", remote_nssf, "Use an NSSF started with --only nssf");
  run->add_option("--journal", journal, "Override the journal path");
  run->add_option("--crash-after", crash_after, "Test hook: exit abruptly after N journal appends");

  auto* slice = app.add_subcommand("slice", "Manage slices through the NBI");
  slice->require_subcommand(1);
  std::string template_id, owner, reliability = "standard";
  std::vector<std::string> areas;
  std::optional<double> lifespan;
  auto* submit = slice->add_subcommand("submit", "Request a dedicated slice");
  submit->add_option("-t,--template", template_id)->required();
  submit->add_option("-a,--area", areas, "Service area (repeatable)")->required();
  submit->add_option("--lifespan", lifespan, "Seconds");
  submit->add_option("--owner", owner);
  submit->add_option("--reliability", reliability)->check(CLI::IsMember({"standard", "high"}, CLI::ignore_case));
  std::string slice_id;
  auto* status = slice->add_subcommand("status", "Show a slice and its events");
  status->add_option("slice_id", slice_id)->required();
  auto* terminate = slice->add_subcommand("terminate", "Terminate an active slice");
  terminate->add_option("slice_id", slice_id)->required();
  auto* list = slice->add_subcommand("list", "List slices");

  auto* catalogue = app.add_subcommand("catalogue", "Template catalogue");
  catalogue->require_subcommand(1);
  auto* cat_list = catalogue->add_subcommand("list", "List templates");

  auto* bench = app.add_subcommand("bench", "Benchmarks (CSV output)");
  bench->require_subcommand(1);
  std::string rates_text = "10,50,100,150,200", out_path, nssf_text;
  double duration = 30.0;
  int connections = 32;
  auto* attach = bench->add_subcommand("attach", "Open-loop load on the NSSF selection endpoint");
  attach->add_option("--rates", rates_text, "Offered rates, requests/s");
  attach->add_option("--duration", duration, "Seconds per rate");
  attach->add_option("--connections", connections, "Connection cap");
  attach->add_option("--nssf", nssf_text, "NSSF address (default from config)");
  attach->add_option("-c,--config", config_path, "Run configuration (topology UEs)")->check(CLI::ExistingFile);
  attach->add_option("--out", out_path)->required();

  std::string sizes_text = "0.5G..19G", kind_text = "VM", area = "A1";
  int count = 10, reps = 1;
  bool cached = false;
  double time_scale = 0.0;
  auto* inst = bench->add_subcommand("instantiate", "Slice instantiation timing per image size");
  inst->add_option("--sizes", sizes_text, "Range lo..hi or comma list (K/M/G suffixes)");
  inst->add_option("--count", count, "Points in a range");
  inst->add_option("--cached", cached, "Pre-cache images (true/false)");
  inst->add_option("--kind", kind_text)->check(CLI::IsMember({"VM", "CONTAINER"}));
  inst->add_option("--reps", reps, "Repetitions per size");
  inst->add_option("--area", area, "Service area for the slices");
  inst->add_option("--time-scale", time_scale, "Real seconds per simulated boot second");
  inst->add_option("-c,--config", config_path, "Run configuration")->check(CLI::ExistingFile);
  inst->add_option("--out", out_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    HostPort nbi = nbi_text.empty() ? env_addr("E2ES_NBI_LISTEN", HostPort{"127.0.0.1", 8080}) : HostPort::parse(nbi_text);

    if (run->parsed()) return cmd_run(out, config_path, only, remote_nssf, crash_after, journal);

    if (submit->parsed()) {
      Json body{{"template_id", template_id}, {"service_area_ids", areas}, {"owner", owner},
                {"reliability_level", reliability == "high" || reliability == "HIGH" ? "HIGH" : "STANDARD"}};
      if (lifespan) body["lifespan"] = *lifespan;
      Json r = nbi_call(nbi, "POST", "/slices", body);
      out.line(r, r.value("slice_id", ""));
      return 0;
    }
    if (status->parsed()) {
      print_status(out, nbi_call(nbi, "GET", "/slices/" + url_encode(slice_id)));
      return 0;
    }
    if (terminate->parsed()) {
      Json r = nbi_call(nbi, "DELETE", "/slices/" + url_encode(slice_id));
      if (out.json) {
        out.line(r, "");
      } else {
        std::cout << r.value("slice_id", "") << " " << r.value("state", "")
                  << (r.value("already_terminated", false) ? " (already terminated)" : "") << std::endl;
        for (const auto& s : r.value("steps", Json::array())) {
          std::cout << "  " << s.value("step", "") << " " << s.value("duration", 0.0) << " s"
                    << (s.value("ok", true) ? "" : " FAILED: " + s.value("error", "")) << std::endl;
        }
      }
      return 0;
    }
    if (list->parsed()) {
      for (const auto& s : nbi_call(nbi, "GET", "/slices")) {
        out.line(s, s.value("slice_id", "") + "  " + s.value("state", "") + "  " + s.value("template_id", ""));
      }
      return 0;
    }
    if (cat_list->parsed()) {
      for (const auto& t : nbi_call(nbi, "GET", "/catalogue")) {
        out.line(t, t.value("template_id", "") + "  " + t.value("slice_type", "") + "  " +
                        t.value("virtualization_kind", "") + "  vnfs=" + std::to_string(t.value("vnf_count", 0)));
      }
      return 0;
    }
    if (attach->parsed()) {
      RunConfig cfg = RunConfig::load(config_path);
      Topology topo = Topology::load(cfg.topology_path);
      AttachLoadOptions opts;
      opts.target = nssf_text.empty() ? cfg.listen.nssf : HostPort::parse(nssf_text);
      opts.rates = parse_rates(rates_text);
      opts.duration = duration;
      opts.connections = connections;
      for (const auto& ue : topo.ues) opts.queries.emplace_back(ue.ue_id, ue.home_enb);
      LoadReport r = run_attach_load(opts);
      write_file(out_path, to_csv(r));
      write_file(out_path + ".meta.json", load_metadata(r).dump(2) + "\n");
      for (const auto& row : r.rows) {
        out.line(Json{{"offered_rate", row.offered_rate}, {"achieved_rate", row.achieved_rate}, {"p50", row.p50},
                      {"p99", row.p99}, {"error_count", row.error_count}},
                 "rate " + std::to_string(row.offered_rate) + "/s  p50 " + std::to_string(row.p50) + " s  p99 " +
                     std::to_string(row.p99) + " s  errors " + std::to_string(row.error_count));
      }
      if (r.incomplete) throw Error(ErrorCode::TargetUnreachable, r.error);
      return 0;
    }
    if (inst->parsed()) {
      RunConfig cfg = RunConfig::load(config_path);
      // Private instance on ephemeral ports with its own journal.
      auto dir = std::filesystem::temp_directory_path() / ("e2es-bench-" + std::to_string(::getpid()));
      std::filesystem::create_directories(dir);
      cfg.journal_path = dir / "journal.ndjson";
      cfg.listen = ListenConfig{{"127.0.0.1", 0}, {"127.0.0.1", 0}, {"127.0.0.1", 0}, {"127.0.0.1", 0}};
      cfg.latency_model.time_scale = time_scale;
      cfg.latency_model.precache = false;
      cfg.compute_nodes = {{"node-1", 1e6, ~0ull}};
      System sys(cfg);
      sys.start();
      InstantiationReport r = run_instantiation_bench(sys, parse_sizes(sizes_text, count),
                                                      enum_from_string<VirtualizationKind>(kind_text), cached, reps, area);
      sys.stop();
      std::filesystem::remove_all(dir);
      write_file(out_path, to_csv(r));
      for (const auto& row : r.rows) {
        out.line(Json{{"image_size", row.image_size}, {"deploy_duration", row.deploy_duration},
                      {"t_core", row.breakdown.t_core}, {"t_enb_notify", row.breakdown.t_enb_notify},
                      {"t_ran_config", row.breakdown.t_ran_config}},
                 std::to_string(row.image_size) + " B  " + std::to_string(row.deploy_duration) + " s");
      }
      if (r.incomplete) throw Error(ErrorCode::Internal, r.error);
      return 0;
    }
  } catch (const Error& e) {
    return out.fail(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitUsage;
  }
  return kExitUsage;
}

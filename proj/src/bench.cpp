#include "e2es/bench.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "e2es/error.hpp"
#include "e2es/platform.hpp"

namespace e2es {

using SteadyClock = std::chrono::steady_clock;

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

MannKendall mann_kendall(const std::vector<double>& x) {
  MannKendall r;
  const std::size_t n = x.size();
  if (n < 3) return r;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) r.s += (x[j] > x[i]) - (x[j] < x[i]);
  }
  // Tie correction on the variance.
  std::map<double, int> ties;
  for (double v : x) ++ties[v];
  const double nn = static_cast<double>(n);
  double var = nn * (nn - 1) * (2 * nn + 5);
  for (const auto& [v, t] : ties) var -= static_cast<double>(t) * (t - 1) * (2 * t + 5);
  var /= 18.0;
  if (var <= 0) return r;  // all values tied: p stays 1
  if (r.s > 0) r.z = (r.s - 1) / std::sqrt(var);
  else if (r.s < 0) r.z = (r.s + 1) / std::sqrt(var);
  r.p_value = 0.5 * std::erfc(r.z / std::sqrt(2.0));
  return r;
}

namespace {

LoadRow run_one_rate(const AttachLoadOptions& opts, double rate, std::string& fatal) {
  const auto total = static_cast<std::uint64_t>(std::llround(rate * opts.duration));
  std::vector<double> latencies(total, -1.0);
  std::atomic<std::uint64_t> next{0}, errors{0};
  std::atomic<int> in_flight{0}, peak{0};
  std::atomic<bool> abort{false};
  std::mutex fatal_mu;
  SteadyClock::time_point last_done{};
  std::mutex done_mu;

  const auto start = SteadyClock::now() + std::chrono::milliseconds(20);
  const int workers = std::max(1, static_cast<int>(std::min<std::uint64_t>(opts.connections, std::max<std::uint64_t>(total, 1))));
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      httplib::Client client(opts.target.host, opts.target.port);
      client.set_keep_alive(true);
      client.set_tcp_nodelay(true);
      const auto to = std::chrono::duration<double>(opts.request_timeout);
      client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(to));
      client.set_connection_timeout(std::chrono::seconds(5));
      SteadyClock::time_point my_last{};
      for (;;) {
        const std::uint64_t i = next.fetch_add(1);
        if (i >= total || abort) break;
        const auto due = start + std::chrono::duration_cast<SteadyClock::duration>(
                                     std::chrono::duration<double>(static_cast<double>(i) / rate));
        std::this_thread::sleep_until(due);
        const int now_in = ++in_flight;
        int seen = peak.load();
        while (now_in > seen && !peak.compare_exchange_weak(seen, now_in)) {
        }
        const auto& q = opts.queries[i % opts.queries.size()];
        auto res = client.Get("/nssf/select", httplib::Params{{"ue", q.first}, {"enb", q.second}}, httplib::Headers{});
        const auto done = SteadyClock::now();
        --in_flight;
        my_last = done;
        if (!res) {
          if (res.error() == httplib::Error::Connection) {
            std::lock_guard lock(fatal_mu);
            fatal = "cannot connect to " + opts.target.str();
            abort = true;
            break;
          }
          ++errors;
        } else if (res->status != 200) {
          ++errors;
        }
        latencies[i] = std::chrono::duration<double>(done - due).count();
      }
      std::lock_guard lock(done_mu);
      last_done = std::max(last_done, my_last);
    });
  }
  for (auto& t : threads) t.join();

  LoadRow row;
  row.offered_rate = rate;
  row.concurrency = peak.load();
  row.error_count = errors.load();
  std::vector<double> samples;
  samples.reserve(total);
  for (double l : latencies) {
    if (l >= 0) samples.push_back(l);
  }
  row.samples = samples.size();
  row.p50 = percentile(samples, 0.50);
  row.p90 = percentile(samples, 0.90);
  row.p99 = percentile(samples, 0.99);
  row.window = last_done > start ? std::chrono::duration<double>(last_done - start).count() : 0.0;
  row.achieved_rate = row.window > 0 ? static_cast<double>(row.samples) / row.window : 0.0;
  return row;
}

}  // namespace

LoadReport run_attach_load(const AttachLoadOptions& opts) {
  if (opts.queries.empty()) throw Error(ErrorCode::InvalidArgument, "no (ue, enb) pairs to query");
  if (!(opts.duration > 0)) throw Error(ErrorCode::InvalidArgument, "duration must be positive");
  LoadReport report;
  report.cpu_count = std::thread::hardware_concurrency();
  std::vector<double> rates = opts.rates;
  std::sort(rates.begin(), rates.end());
  for (double rate : rates) {
    if (!(rate > 0)) throw Error(ErrorCode::InvalidArgument, "rates must be positive");
    std::string fatal;
    LoadRow row = run_one_rate(opts, rate, fatal);
    if (!fatal.empty()) {
      report.incomplete = true;
      report.error = std::string(to_string(ErrorCode::TargetUnreachable)) + ": " + fatal;
      break;
    }
    report.rows.push_back(row);
  }
  return report;
}

InstantiationReport run_instantiation_bench(System& sys, const std::vector<std::uint64_t>& sizes,
                                            VirtualizationKind kind, bool cached, int repetitions,
                                            const std::string& area_id) {
  InstantiationReport report;
  const auto selectors = sys.cores().selectors();
  if (selectors.empty()) throw Error(ErrorCode::NssmfUnregistered, "no core NSSMF");
  const std::string kind_name = enum_name(kind);
  for (std::uint64_t size : sizes) {
    const std::string image = "bench-" + std::to_string(size);
    sys.images().add_image(image, size);
    SliceTemplate t;
    t.template_id = "bench-" + kind_name + "-" + std::to_string(size);
    t.slice_type = SliceType::Xmbb;
    t.vnfs.push_back({"mme", VnfRole::Mme, image, size, 1.0, 1ull << 30, 1});
    t.core_nssmf_selector = *selectors.begin();
    t.virtualization_kind = kind;
    t.ran_requirements = classify_requirements(SliceType::Xmbb, sys.catalogue().category_defaults());
    t.default_lifespan = 86400.0;
    sys.catalogue().add(t);

    for (int rep = 0; rep < repetitions; ++rep) {
      if (cached) sys.images().cache_everywhere(sys.compute().node_ids());
      else sys.images().clear_cache();
      SliceRequest req;
      req.template_id = t.template_id;
      req.service_area_ids = {area_id};
      req.owner = "bench";
      const std::string id = sys.nsmf().submit(req);
      sys.nsmf().wait_for(id, {Phase::Active, Phase::Failed}, 3600.0);
      SliceStatus st = sys.nsmf().status(id);
      if (st.phase != Phase::Active) {
        report.incomplete = true;
        report.error = id + " " + (st.failure.is_null() ? std::string("did not activate") : st.failure.dump());
        return report;
      }
      std::map<EventKind, double> ts;
      for (const auto& e : st.events) ts[e.kind] = e.timestamp;
      InstantiationRow row;
      row.image_size = size;
      row.kind = kind;
      row.cached = cached;
      row.deploy_duration = ts[EventKind::Activated] - ts[EventKind::RequestAccepted];
      row.breakdown.t_core = ts[EventKind::CoreReady] - ts[EventKind::CoreDeployStarted];
      row.breakdown.t_enb_notify = ts[EventKind::S1Associated] - ts[EventKind::CoreReady];
      row.breakdown.t_ran_config = ts[EventKind::RanPartitionApplied] - ts[EventKind::S1Associated];
      report.rows.push_back(row);
      sys.nsmf().terminate(id, TerminationCause::Explicit);
    }
  }
  return report;
}

namespace {

std::string num(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string num(std::uint64_t v) { return std::to_string(v); }

std::string field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  return out + "\"";
}

std::string line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += field(fields[i]);
  }
  return out + "\r\n";
}

}  // namespace

std::string to_csv(const LoadReport& r) {
  std::string out = line({"offered_rate", "concurrency", "p50", "p90", "p99", "error_count", "window"});
  for (const auto& row : r.rows) {
    out += line({num(row.offered_rate), num(static_cast<std::uint64_t>(row.concurrency)), num(row.p50), num(row.p90),
                 num(row.p99), num(row.error_count), num(row.window)});
  }
  return out;
}

std::string to_csv(const InstantiationReport& r) {
  std::string out =
      line({"image_size", "kind", "cached", "deploy_duration", "t_core", "t_enb_notify", "t_ran_config"});
  for (const auto& row : r.rows) {
    out += line({num(row.image_size), enum_name(row.kind), row.cached ? "true" : "false", num(row.deploy_duration),
                 num(row.breakdown.t_core), num(row.breakdown.t_enb_notify), num(row.breakdown.t_ran_config)});
  }
  return out;
}

Json load_metadata(const LoadReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    rows.push_back(Json{{"offered_rate", row.offered_rate}, {"achieved_rate", row.achieved_rate}, {"samples", row.samples}});
  }
  return Json{{"cpu_count", r.cpu_count}, {"incomplete", r.incomplete}, {"error", r.error}, {"rows", rows}};
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out << content;
  out.close();
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cur;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(cur));
      cur.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(cur));
      cur.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      cur += c;
      any = true;
    }
  }
  if (any || !cur.empty()) {
    row.push_back(std::move(cur));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::uint64_t parse_size(const std::string& text) {
  if (text.empty()) throw Error(ErrorCode::InvalidArgument, "empty size");
  double mult = 1;
  std::string digits = text;
  switch (text.back()) {
    case 'K': case 'k': mult = 1024.0; break;
    case 'M': case 'm': mult = 1024.0 * 1024; break;
    case 'G': case 'g': mult = 1024.0 * 1024 * 1024; break;
    default: break;
  }
  if (mult != 1) digits.pop_back();
  double v = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || !(v > 0)) {
    throw Error(ErrorCode::InvalidArgument, "bad size '" + text + "'");
  }
  return static_cast<std::uint64_t>(std::llround(v * mult));
}

std::vector<std::uint64_t> parse_sizes(const std::string& text, int count) {
  std::vector<std::uint64_t> out;
  if (auto dots = text.find(".."); dots != std::string::npos) {
    const double lo = static_cast<double>(parse_size(text.substr(0, dots)));
    const double hi = static_cast<double>(parse_size(text.substr(dots + 2)));
    if (count < 1 || hi < lo) throw Error(ErrorCode::InvalidArgument, "bad size range '" + text + "'");
    if (count == 1) return {static_cast<std::uint64_t>(lo)};
    for (int i = 0; i < count; ++i) {
      out.push_back(static_cast<std::uint64_t>(std::llround(lo + (hi - lo) * i / (count - 1))));
    }
    return out;
  }
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    out.push_back(parse_size(text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

}  // namespace e2es

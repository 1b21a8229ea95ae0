#include "e2es/journal.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include "e2es/error.hpp"

namespace e2es {

const std::vector<EventKind>& success_sequence() {
  static const std::vector<EventKind> seq{EventKind::RequestAccepted, EventKind::CoreDeployStarted,
                                          EventKind::CoreReady,       EventKind::S1Associated,
                                          EventKind::RanPartitionApplied, EventKind::Activated};
  return seq;
}

namespace {

EventKind strict_event_kind(const Json& j) {
  const auto name = j.get<std::string>();
  const EventKind kind = j.get<EventKind>();
  if (Json(kind).get<std::string>() != name) throw Error(ErrorCode::InvalidArgument, "unknown event kind " + name);
  return kind;
}

}  // namespace

void to_json(Json& j, const SliceEvent& e) {
  j = Json{{"slice_id", e.slice_id},
           {"seq", e.seq},
           {"kind", e.kind},
           {"timestamp", e.timestamp},
           {"payload", e.payload}};
}

void from_json(const Json& j, SliceEvent& e) {
  e.slice_id = j.at("slice_id").get<std::string>();
  e.seq = j.at("seq").get<std::uint64_t>();
  e.kind = strict_event_kind(j.at("kind"));
  e.timestamp = j.at("timestamp").get<double>();
  e.payload = j.value("payload", Json::object());
}

std::optional<Phase> phase_after(Phase current, EventKind kind, bool first_event) {
  if (first_event) {
    if (kind == EventKind::RequestAccepted) return Phase::Requested;
    return std::nullopt;
  }
  auto step = [&](Phase to) -> std::optional<Phase> {
    if (is_valid_transition(current, to)) return to;
    return std::nullopt;
  };
  switch (kind) {
    case EventKind::RequestAccepted: return std::nullopt;
    case EventKind::CoreDeployStarted: return step(Phase::CoreDeploying);
    case EventKind::CoreReady: return step(Phase::CoreReady);
    case EventKind::S1Associated:
      // The association step spans S1_ASSOCIATING and ends with the RAN
      // configuration starting.
      if (current != Phase::CoreReady) return std::nullopt;
      return Phase::RanConfiguring;
    case EventKind::RanPartitionApplied:
      if (current != Phase::RanConfiguring) return std::nullopt;
      return current;
    case EventKind::Activated: return step(Phase::Active);
    case EventKind::TerminationStarted: return step(Phase::Terminating);
    case EventKind::Terminated: return step(Phase::Terminated);
    case EventKind::Failed: return step(Phase::Failed);
  }
  return std::nullopt;
}

std::vector<Phase> phase_path(const std::vector<SliceEvent>& events) {
  std::vector<Phase> path;
  for (std::size_t i = 0; i < events.size(); ++i) {
    auto next = phase_after(path.empty() ? Phase::Requested : path.back(), events[i].kind, i == 0);
    if (!next) throw Error(ErrorCode::InvalidArgument, "events out of lifecycle order");
    if (events[i].kind == EventKind::S1Associated) path.push_back(Phase::S1Associating);
    if (path.empty() || path.back() != *next || i == 0) path.push_back(*next);
  }
  return path;
}

void to_json(Json& j, const SliceStatus& s) {
  j = Json{{"slice_id", s.slice_id},
           {"template_id", s.template_id},
           {"kind", s.kind},
           {"state", s.phase},
           {"service_areas", s.service_areas},
           {"ran_subslice_id", s.ran_subslice_id},
           {"enb_set", s.enb_set},
           {"core_record", s.core_record ? Json(*s.core_record) : Json()},
           {"transport_path", s.transport_path ? Json(*s.transport_path) : Json()},
           {"activation_time", s.activation_time ? Json(*s.activation_time) : Json()},
           {"termination_time", s.termination_time ? Json(*s.termination_time) : Json()},
           {"failure", s.failure},
           {"events", s.events}};
}

SliceStatus status_from_events(const std::vector<SliceEvent>& events) {
  if (events.empty()) throw Error(ErrorCode::InvalidArgument, "no events");
  SliceStatus s;
  s.slice_id = events.front().slice_id;
  std::uint64_t last_seq = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.slice_id != s.slice_id) throw Error(ErrorCode::InvalidArgument, "mixed slice ids in event list");
    if (i > 0 && e.seq <= last_seq) throw Error(ErrorCode::InvalidArgument, "non-increasing seq for " + s.slice_id);
    last_seq = e.seq;
    auto next = phase_after(s.phase, e.kind, i == 0);
    if (!next) {
      throw Error(ErrorCode::InvalidArgument,
                  "event " + Json(e.kind).get<std::string>() + " out of order for " + s.slice_id);
    }
    s.phase = *next;
    const Json& p = e.payload;
    switch (e.kind) {
      case EventKind::RequestAccepted:
        s.template_id = p.value("template_id", "");
        s.kind = p.value("kind", SliceKind::Dedicated);
        s.service_areas = p.value("service_areas", std::vector<std::string>{});
        s.enb_set = p.value("enb_set", std::vector<std::string>{});
        s.ran_subslice_id = p.value("ran_subslice_id", "");
        break;
      case EventKind::CoreReady:
        if (p.contains("vepc")) s.core_record = p.at("vepc").get<VepcRecord>();
        break;
      case EventKind::Activated:
        if (p.contains("transport_path") && !p.at("transport_path").is_null()) {
          s.transport_path = p.at("transport_path").get<TransportPath>();
        }
        if (p.contains("activation_time")) s.activation_time = p.at("activation_time").get<double>();
        if (p.contains("termination_time") && !p.at("termination_time").is_null()) {
          s.termination_time = p.at("termination_time").get<double>();
        }
        break;
      case EventKind::Terminated:
      case EventKind::Failed:
        // Terminal: compensation or teardown released the substrate.
        if (s.core_record) s.core_record->status = VepcStatus::Down;
        s.transport_path.reset();
        if (e.kind == EventKind::Failed) s.failure = p;
        if (e.kind == EventKind::Terminated) s.termination_time = e.timestamp;
        break;
      default:
        break;
    }
    s.events.push_back(e);
  }
  return s;
}

Journal::Journal(std::filesystem::path path, bool fsync_each, std::optional<int> crash_after)
    : path_(std::move(path)), fsync_each_(fsync_each), crash_after_(crash_after) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  // Continue numbering after whatever a previous run left behind.
  for (const auto& e : read(path_)) seq_ = std::max(seq_, e.seq);
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorCode::IoError, "open " + path_.string() + ": " + std::strerror(errno));
  // A torn tail would glue onto the next record; terminate it first.
  std::ifstream in(path_, std::ios::binary | std::ios::ate);
  if (in && in.tellg() > 0) {
    in.seekg(-1, std::ios::end);
    char last = 0;
    in.get(last);
    if (last != '\n') {
      if (::write(fd_, "\n", 1) != 1) throw Error(ErrorCode::IoError, "write " + path_.string());
    }
  }
}

Journal::~Journal() {
  if (fd_ >= 0) {
    ::fsync(fd_);
    ::close(fd_);
  }
}

SliceEvent Journal::append(SliceEvent e) {
  std::lock_guard lock(mu_);
  e.seq = ++seq_;
  std::string line = Json(e).dump();
  line.push_back('\n');
  std::size_t off = 0;
  while (off < line.size()) {
    ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoError, "write " + path_.string() + ": " + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
  if (fsync_each_) ::fsync(fd_);
  if (crash_after_ && ++appended_ >= *crash_after_) ::_exit(86);
  return e;
}

void Journal::flush() {
  std::lock_guard lock(mu_);
  if (fd_ >= 0) ::fsync(fd_);
}

std::uint64_t Journal::last_seq() const {
  std::lock_guard lock(mu_);
  return seq_;
}

std::vector<SliceEvent> Journal::read(const std::filesystem::path& path) {
  std::vector<SliceEvent> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    Json j = Json::parse(lines[i], nullptr, false);
    bool ok = !j.is_discarded();
    SliceEvent e;
    if (ok) {
      try {
        e = j.get<SliceEvent>();
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      if (i + 1 == lines.size()) break;
      // Earlier torn tails are left behind by crashes and then terminated
      // by the next run; they never parse as JSON.
      if (j.is_discarded()) continue;
      throw Error(ErrorCode::IoError, path.string() + ": malformed event on line " + std::to_string(i + 1));
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace e2es

#pragma once

// Slice lifecycle events, the append-only NDJSON journal and the pure fold
// that turns a slice's events into its externally visible status.

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "e2es/core_nssmf.hpp"
#include "e2es/domain.hpp"
#include "e2es/transport_nssmf.hpp"

namespace e2es {

enum class EventKind {
  RequestAccepted,
  CoreDeployStarted,
  CoreReady,
  S1Associated,
  RanPartitionApplied,
  Activated,
  TerminationStarted,
  Terminated,
  Failed,
};

NLOHMANN_JSON_SERIALIZE_ENUM(EventKind, {{EventKind::RequestAccepted, "REQUEST_ACCEPTED"},
                                         {EventKind::CoreDeployStarted, "CORE_DEPLOY_STARTED"},
                                         {EventKind::CoreReady, "CORE_READY"},
                                         {EventKind::S1Associated, "S1_ASSOCIATED"},
                                         {EventKind::RanPartitionApplied, "RAN_PARTITION_APPLIED"},
                                         {EventKind::Activated, "ACTIVATED"},
                                         {EventKind::TerminationStarted, "TERMINATION_STARTED"},
                                         {EventKind::Terminated, "TERMINATED"},
                                         {EventKind::Failed, "FAILED"}})

// The six-event success sequence of an activated slice.
const std::vector<EventKind>& success_sequence();

struct SliceEvent {
  std::string slice_id;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::RequestAccepted;
  double timestamp = 0.0;  // s since the Unix epoch, on the slice's simulated timeline
  Json payload = Json::object();
};

void to_json(Json& j, const SliceEvent& e);
void from_json(const Json& j, SliceEvent& e);

// Phase reached after applying `kind` in `current`; nullopt if the event is
// out of lifecycle order.
std::optional<Phase> phase_after(Phase current, EventKind kind, bool first_event);

// Every phase the events pass through, starting at REQUESTED; S1_ASSOCIATED
// covers both S1_ASSOCIATING and the start of RAN_CONFIGURING.
std::vector<Phase> phase_path(const std::vector<SliceEvent>& events);

struct SliceStatus {
  std::string slice_id;
  std::string template_id;
  SliceKind kind = SliceKind::Dedicated;
  Phase phase = Phase::Requested;
  std::vector<std::string> service_areas;
  std::string ran_subslice_id;
  std::vector<std::string> enb_set;
  std::optional<VepcRecord> core_record;
  std::optional<TransportPath> transport_path;
  std::optional<double> activation_time;
  std::optional<double> termination_time;
  Json failure;  // FAILED payload, null otherwise
  std::vector<SliceEvent> events;
};

void to_json(Json& j, const SliceStatus& s);

// Pure fold over one slice's events. Throws Error(InvalidArgument) if the
// events break lifecycle order or mix slice ids.
SliceStatus status_from_events(const std::vector<SliceEvent>& events);

class Journal {
 public:
  // Opens (creating if needed) for append. `crash_after` terminates the
  // process right after that many appends by this instance.
  Journal(std::filesystem::path path, bool fsync_each, std::optional<int> crash_after = std::nullopt);
  ~Journal();
  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  // Assigns the next sequence number and persists the event.
  SliceEvent append(SliceEvent e);
  void flush();
  std::uint64_t last_seq() const;
  const std::filesystem::path& path() const { return path_; }

  // Reads every complete event. A torn final line (crash mid-write) is
  // ignored; corruption elsewhere throws Error(IoError).
  static std::vector<SliceEvent> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  bool fsync_each_;
  std::optional<int> crash_after_;
  mutable std::mutex mu_;
  int fd_ = -1;
  std::uint64_t seq_ = 0;
  int appended_ = 0;
};

}  // namespace e2es

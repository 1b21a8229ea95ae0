#pragma once

// Wires the NSMF, NSSF, NSSMFs and the simulated eNodeB fleet into one
// running system.

#include <memory>
#include <optional>

#include "e2es/config.hpp"
#include "e2es/core_nssmf.hpp"
#include "e2es/nsmf.hpp"
#include "e2es/nssf.hpp"
#include "e2es/ran_nssmf.hpp"
#include "e2es/ran_sim.hpp"
#include "e2es/transport_nssmf.hpp"

namespace e2es {

class System {
 public:
  // With `remote_nssf` set, selection is served by an NSSF in another process
  // and this system only administers it.
  explicit System(RunConfig config, std::optional<HostPort> remote_nssf = std::nullopt);
  ~System();
  System(const System&) = delete;
  System& operator=(const System&) = delete;

  // Brings everything up, recovers the journal and creates the default slice.
  // Throws Error(ConfigError / IoError / AgentUnreachable).
  void start();
  void stop();

  Nsmf& nsmf() { return *nsmf_; }
  Nssf* local_nssf() { return nssf_.get(); }
  NssfServer* nssf_server() { return nssf_server_.get(); }
  RanNssmf& ran() { return *ran_; }
  EnbFleet& fleet() { return *fleet_; }
  TransportNssmf& transport() { return *transport_; }
  CoreNssmfRegistry& cores() { return cores_; }
  SimNfvo& nfvo(const std::string& selector);
  ImageStore& images() { return *images_; }
  ComputePool& compute() { return *compute_; }
  TemplateCatalogue& catalogue() { return *catalogue_; }
  const Topology& topology() const { return topology_; }
  const RunConfig& config() const { return config_; }

  HostPort nbi_addr() const { return nbi_addr_; }
  HostPort nssf_addr() const { return nssf_addr_; }
  HostPort southbound_addr() const { return southbound_addr_; }

 private:
  RunConfig config_;
  std::optional<HostPort> remote_nssf_;
  Topology topology_;
  std::unique_ptr<TemplateCatalogue> catalogue_;
  std::shared_ptr<ImageStore> images_;
  std::shared_ptr<ComputePool> compute_;
  std::map<std::string, std::shared_ptr<SimNfvo>> nfvos_;
  CoreNssmfRegistry cores_;
  std::unique_ptr<TransportNssmf> transport_;
  std::unique_ptr<Nssf> nssf_;
  std::unique_ptr<NssfServer> nssf_server_;
  std::unique_ptr<NssfClient> nssf_client_;
  std::unique_ptr<RanNssmf> ran_;
  std::unique_ptr<EnbFleet> fleet_;
  std::shared_ptr<Journal> journal_;
  std::unique_ptr<Nsmf> nsmf_;
  std::unique_ptr<NbiServer> nbi_;
  HostPort nbi_addr_, nssf_addr_, southbound_addr_;
  bool started_ = false;
  bool stopped_ = false;
};

// The NSSF on its own, for split deployments.
class StandaloneNssf {
 public:
  explicit StandaloneNssf(const RunConfig& config);
  HostPort start();
  void stop();
  Nssf& nssf() { return nssf_; }

 private:
  RunConfig config_;
  Nssf nssf_;
  NssfServer server_;
};

}  // namespace e2es

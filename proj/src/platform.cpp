#include "e2es/platform.hpp"

#include "e2es/error.hpp"

namespace e2es {

System::System(RunConfig config, std::optional<HostPort> remote_nssf)
    : config_(std::move(config)), remote_nssf_(std::move(remote_nssf)) {}

System::~System() { stop(); }

SimNfvo& System::nfvo(const std::string& selector) {
  auto it = nfvos_.find(selector);
  if (it == nfvos_.end()) throw Error(ErrorCode::NssmfUnregistered, selector);
  return *it->second;
}

void System::start() {
  if (started_) return;
  started_ = true;
  config_.check_paths();
  topology_ = Topology::load(config_.topology_path);

  const std::set<std::string> selectors(config_.nssmf_selectors.begin(), config_.nssmf_selectors.end());
  catalogue_ = std::make_unique<TemplateCatalogue>(config_.category_defaults, selectors);
  catalogue_->load_dir(config_.catalogue_dir);

  images_ = std::make_shared<ImageStore>(config_.latency_model);
  for (const auto& [id, size] : config_.images) images_->add_image(id, size);
  compute_ = std::make_shared<ComputePool>(config_.compute_nodes);
  if (config_.latency_model.precache) images_->cache_everywhere(compute_->node_ids());
  for (const auto& sel : config_.nssmf_selectors) {
    auto nfvo = std::make_shared<SimNfvo>(images_, compute_);
    nfvos_[sel] = nfvo;
    cores_.add(sel, nfvo);
  }
  transport_ = std::make_unique<TransportNssmf>(config_.external_gw);

  if (remote_nssf_) {
    nssf_addr_ = *remote_nssf_;
    nssf_client_ = std::make_unique<RemoteNssfClient>(*remote_nssf_);
  } else {
    nssf_ = std::make_unique<Nssf>(make_policy(config_.nssf.policy));
    nssf_server_ = std::make_unique<NssfServer>(*nssf_, config_.nssf);
    nssf_addr_ = nssf_server_->listen(config_.listen.nssf);
    nssf_client_ = std::make_unique<LocalNssfClient>(*nssf_);
  }
  // Replica changes after scaling reach the NSSF through the NFVO.
  for (auto& [sel, nfvo] : nfvos_) {
    nfvo->set_pool_listener([client = nssf_client_.get()](const std::string& slice_id,
                                                          const std::vector<std::string>& endpoints) {
      try {
        client->update_pool(slice_id, endpoints);
      } catch (const Error&) {
        // Pool not registered yet; registration will carry the new endpoints.
      }
    });
  }

  ran_ = std::make_unique<RanNssmf>(config_.ran, config_.default_floor);
  southbound_addr_ = ran_->listen(config_.listen.southbound);
  fleet_ = std::make_unique<EnbFleet>(topology_, config_);
  fleet_->set_nssf(nssf_addr_);
  fleet_->connect_all(southbound_addr_);
  std::set<std::string> enb_ids;
  for (const auto& e : topology_.enbs) enb_ids.insert(e.enb_id);
  if (!ran_->wait_for_agents(enb_ids, 10.0)) throw Error(ErrorCode::AgentUnreachable, "eNodeB agents did not connect");

  for (const auto& e : topology_.enbs) nssf_client_->register_enb(e.enb_id);
  for (const auto& ue : topology_.ues) {
    if (!ue.subscribed_slice.empty()) nssf_client_->subscribe(ue.ue_id, ue.subscribed_slice);
  }

  journal_ = std::make_shared<Journal>(config_.journal_path, config_.journal_fsync, config_.crash_after_events);
  NsmfDeps deps{catalogue_.get(), &topology_, &cores_, ran_.get(), fleet_.get(), transport_.get(), nssf_client_.get()};
  nsmf_ = std::make_unique<Nsmf>(deps, config_, journal_);
  nbi_ = std::make_unique<NbiServer>(*nsmf_, *catalogue_);
  nbi_addr_ = nbi_->bind(config_.listen.nbi);

  nsmf_->recover(Journal::read(config_.journal_path));
  nsmf_->bootstrap_default();
  nsmf_->start_timer();
  nbi_->start();
}

void System::stop() {
  if (!started_ || stopped_) return;
  stopped_ = true;
  if (nbi_) nbi_->stop();
  // Cores first: aborting in-flight boots lets workflows unwind quickly.
  for (auto& [sel, nfvo] : nfvos_) nfvo->shutdown();
  if (nsmf_) nsmf_->stop();
  if (fleet_) fleet_->stop();
  if (ran_) ran_->stop();
  if (nssf_server_) nssf_server_->stop();
}

StandaloneNssf::StandaloneNssf(const RunConfig& config)
    : config_(config), nssf_(make_policy(config.nssf.policy)), server_(nssf_, config.nssf) {}

HostPort StandaloneNssf::start() { return server_.listen(config_.listen.nssf); }

void StandaloneNssf::stop() { server_.stop(); }

}  // namespace e2es

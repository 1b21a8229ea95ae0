#include <doctest.h>
#include <httplib.h>

#include <chrono>

#include "e2es/error.hpp"
#include "e2es/nssf.hpp"

using namespace e2es;

TEST_SUITE("test_nssf") {

namespace {

std::unique_ptr<Nssf> make_nssf(const std::string& policy = "ROUND_ROBIN") {
  auto n = std::make_unique<Nssf>(make_policy(policy));
  n->register_enb("enb-1");
  n->register_enb("enb-2");
  n->register_pool("default", {"d1"}, "default-epc");
  n->set_default_slice("default");
  return n;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Internal;
}

}  // namespace

TEST_CASE("round robin cycles through replicas") {
  auto owner = make_nssf();
  Nssf& n = *owner;
  n.register_pool("s1", {"m1", "m2"}, "urllc-v1");
  n.subscribe("ue", "s1");
  std::vector<std::string> got;
  for (int i = 0; i < 4; ++i) got.push_back(n.select_core("ue", "enb-1").mme_endpoint);
  CHECK(got == std::vector<std::string>{"m1", "m2", "m1", "m2"});
}

TEST_CASE("round robin spreads 300 selections evenly over 3 replicas") {
  auto owner = make_nssf();
  Nssf& n = *owner;
  n.register_pool("s1", {"m1", "m2", "m3"});
  n.subscribe("ue", "s1");
  for (int i = 0; i < 300; ++i) n.select_core("ue", "enb-1");
  CHECK(n.pool("s1")->assigned_counts == std::vector<std::uint64_t>{100, 100, 100});
}

TEST_CASE("least loaded picks the argmin and evens out after a scale-out") {
  auto owner = make_nssf("LEAST_LOADED");
  Nssf& n = *owner;
  n.register_pool("s1", {"m1", "m2"});
  n.subscribe("ue", "s1");
  for (int i = 0; i < 10; ++i) n.select_core("ue", "enb-1");
  CHECK(n.pool("s1")->assigned_counts == std::vector<std::uint64_t>{5, 5});
  n.update_pool("s1", {"m1", "m2", "m3"});
  // The fresh replica has the lowest count and absorbs new UEs until level.
  for (int i = 0; i < 5; ++i) CHECK(n.select_core("ue", "enb-1").mme_endpoint == "m3");
  for (int i = 0; i < 30; ++i) {
    auto before = n.pool("s1")->assigned_counts;
    auto ep = n.select_core("ue", "enb-1").mme_endpoint;
    const auto min = *std::min_element(before.begin(), before.end());
    const auto eps = n.pool("s1")->endpoints;
    auto idx = std::find(eps.begin(), eps.end(), ep) - eps.begin();
    CHECK(before[idx] == min);
  }
  auto counts = n.pool("s1")->assigned_counts;
  CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);
}

TEST_CASE("resolution: slice id, then template, then default") {
  auto owner = make_nssf();
  Nssf& n = *owner;
  n.register_pool("slice-1", {"a1"}, "embb-v1", {"enb-1"});
  n.register_pool("slice-2", {"b1"}, "embb-v1");
  n.subscribe("by-slice", "slice-2");
  n.subscribe("by-template", "embb-v1");
  n.subscribe("dangling", "mmtc-v1");

  auto s = n.select_core("by-slice", "enb-1");
  CHECK(s.slice_id == "slice-2");
  CHECK_FALSE(s.fallback);

  // Oldest live pool of the template that covers the eNodeB.
  CHECK(n.select_core("by-template", "enb-1").slice_id == "slice-1");
  CHECK(n.select_core("by-template", "enb-2").slice_id == "slice-2");

  s = n.select_core("dangling", "enb-1");
  CHECK(s.slice_id == "default");
  CHECK(s.fallback);

  s = n.select_core("nobody", "enb-1");
  CHECK(s.slice_id == "default");
  CHECK_FALSE(s.fallback);
}

TEST_CASE("deregistered slice falls back to the default") {
  auto owner = make_nssf();
  Nssf& n = *owner;
  n.register_pool("s1", {"m1"});
  n.subscribe("ue", "s1");
  CHECK(n.select_core("ue", "enb-1").slice_id == "s1");
  n.deregister_pool("s1");
  auto s = n.select_core("ue", "enb-1");
  CHECK(s.slice_id == "default");
  CHECK(s.mme_endpoint == "d1");
  CHECK(s.fallback);
}

TEST_CASE("registration errors") {
  auto owner = make_nssf();
  Nssf& n = *owner;
  n.register_pool("s1", {"m1"});
  CHECK(code_of([&] { n.register_pool("s1", {"m2"}); }) == ErrorCode::DuplicatePool);
  CHECK(code_of([&] { n.update_pool("zz", {"m2"}); }) == ErrorCode::UnknownPool);
  CHECK(code_of([&] { n.register_pool("s2", {}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { n.select_core("ue", "enb-9"); }) == ErrorCode::UnknownEnb);
  CHECK(code_of([] { make_policy("RANDOM"); }) == ErrorCode::ConfigError);

  Nssf bare(make_policy("ROUND_ROBIN"));
  bare.register_enb("enb-1");
  CHECK(code_of([&] { bare.select_core("ue", "enb-1"); }) == ErrorCode::NoDefaultSlice);
}

TEST_CASE("update keeps counters of surviving endpoints") {
  auto owner = make_nssf();
  Nssf& n = *owner;
  n.register_pool("s1", {"m1", "m2"});
  n.subscribe("ue", "s1");
  for (int i = 0; i < 4; ++i) n.select_core("ue", "enb-1");
  n.update_pool("s1", {"m2", "m3"});
  auto p = n.pool("s1");
  CHECK(p->endpoints == std::vector<std::string>{"m2", "m3"});
  CHECK(p->assigned_counts == std::vector<std::uint64_t>{2, 0});
}

TEST_CASE("HTTP select and remote administration") {
  Nssf n(make_policy("ROUND_ROBIN"));
  NssfConfig cfg;
  cfg.worker_threads = 4;
  NssfServer server(n, cfg);
  HostPort addr = server.listen({"127.0.0.1", 0});

  RemoteNssfClient admin(addr);
  admin.register_enb("enb-1");
  admin.register_pool("default", {"d1"}, "default-epc", {});
  admin.set_default_slice("default");
  admin.register_pool("s1", {"m1", "m2"}, "urllc-v1", {});
  admin.subscribe("ue-1", "s1");
  CHECK_THROWS_WITH_AS(admin.register_pool("s1", {"m9"}, "", {}), doctest::Contains("DUPLICATE_POOL"), Error);

  httplib::Client http(addr.host, addr.port);
  auto res = http.Get("/nssf/select?ue=ue-1&enb=enb-1");
  REQUIRE(res);
  CHECK(res->status == 200);
  auto body = Json::parse(res->body);
  CHECK(body.at("slice_id") == "s1");
  CHECK(body.at("mme_endpoint") == "m1");
  CHECK(body.at("fallback") == false);

  res = http.Get("/nssf/select?ue=ue-1&enb=enb-7");
  REQUIRE(res);
  CHECK(res->status == 404);
  CHECK(Json::parse(res->body).at("error") == "UNKNOWN_ENB");

  admin.update_pool("s1", {"m1", "m2", "m3"});
  CHECK(admin.assigned_counts("s1") == std::map<std::string, std::uint64_t>{{"m1", 1}, {"m2", 0}, {"m3", 0}});
  admin.deregister_pool("s1");
  CHECK_FALSE(n.pool("s1"));

  server.set_injected_delay(0.3);
  const auto t0 = std::chrono::steady_clock::now();
  res = http.Get("/nssf/select?ue=ue-1&enb=enb-1");
  REQUIRE(res);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= 0.3);
  CHECK(Json::parse(res->body).at("fallback") == true);
  server.stop();
}

}  // TEST_SUITE

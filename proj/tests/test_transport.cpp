#include <doctest.h>

#include "e2es/error.hpp"
#include "e2es/transport_nssmf.hpp"

using namespace e2es;

TEST_SUITE("test_transport") {

namespace {

VepcRecord ready_vepc(const std::string& slice_id) {
  VepcRecord r;
  r.slice_id = slice_id;
  r.status = VepcStatus::Ready;
  r.vnf_instances = {{"mme", VnfRole::Mme, 0, "127.0.0.1:4001", 0, "n1"},
                     {"mme", VnfRole::Mme, 1, "127.0.0.1:4002", 0, "n1"},
                     {"spgw", VnfRole::SgwPgw, 0, "127.0.0.1:4003", 0, "n2"}};
  r.mme_endpoints = {"127.0.0.1:4001", "127.0.0.1:4002"};
  return r;
}

const std::vector<std::string> kChain{"mme", "spgw"};
const std::set<std::string> kEnbs{"enb-1", "enb-2"};

}  // namespace

TEST_CASE("segments: access per eNodeB, inter-VNF via first replica, egress") {
  auto segs = build_segments(kEnbs, ready_vepc("s"), kChain, "gw", 7);
  const std::vector<PathSegment> expected{{"enb-1", "127.0.0.1:4001", 7},
                                          {"enb-2", "127.0.0.1:4001", 7},
                                          {"127.0.0.1:4001", "127.0.0.1:4003", 7},
                                          {"127.0.0.1:4003", "gw", 7}};
  CHECK(segs == expected);
}

TEST_CASE("first tag is 2 and freed tags are reused lowest first") {
  TransportNssmf t("gw");
  auto a = t.stitch("a", kEnbs, ready_vepc("a"), kChain);
  auto b = t.stitch("b", kEnbs, ready_vepc("b"), kChain);
  auto c = t.stitch("c", kEnbs, ready_vepc("c"), kChain);
  CHECK(a.vlan_tag == 2);
  CHECK(b.vlan_tag == 3);
  CHECK(c.vlan_tag == 4);
  for (const auto& s : b.segments) CHECK(s.vlan_tag == 3);
  t.teardown_path(b.path_id);
  t.teardown_path(a.path_id);
  CHECK(t.stitch("d", kEnbs, ready_vepc("d"), kChain).vlan_tag == 2);
  CHECK(t.stitch("e", kEnbs, ready_vepc("e"), kChain).vlan_tag == 3);
  CHECK(t.tags_in_use() == std::set<int>{2, 3, 4});
}

TEST_CASE("default slice rides the reserved tag") {
  TransportNssmf t("gw");
  auto d = t.stitch_default("default", kEnbs, ready_vepc("default"), kChain);
  CHECK(d.vlan_tag == TransportNssmf::kDefaultVlan);
  CHECK(t.stitch("a", kEnbs, ready_vepc("a"), kChain).vlan_tag == 2);
}

TEST_CASE("teardown is idempotent; unknown ids are rejected") {
  TransportNssmf t("gw");
  auto a = t.stitch("a", kEnbs, ready_vepc("a"), kChain);
  t.teardown_path(a.path_id);
  CHECK_NOTHROW(t.teardown_path(a.path_id));
  CHECK(t.live_paths().empty());
  CHECK_FALSE(t.path(a.path_id));
  try {
    t.teardown_path("nope");
    FAIL("expected UNKNOWN_PATH");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownPath);
  }
}

TEST_CASE("vEPC must be ready") {
  TransportNssmf t("gw");
  auto v = ready_vepc("a");
  v.status = VepcStatus::Deploying;
  CHECK_THROWS_WITH_AS(t.stitch("a", kEnbs, v, kChain), doctest::Contains("VEPC_NOT_READY"), Error);
  CHECK(t.tags_in_use().empty());
}

TEST_CASE("tags run out after 4093 live paths and stay distinct") {
  TransportNssmf t("gw");
  auto v = ready_vepc("x");
  std::set<int> seen;
  for (int i = TransportNssmf::kMinVlan; i <= TransportNssmf::kMaxVlan; ++i) {
    auto p = t.stitch("s" + std::to_string(i), kEnbs, v, kChain);
    CHECK(seen.insert(p.vlan_tag).second);
  }
  CHECK(seen.size() == 4093);
  try {
    t.stitch("overflow", kEnbs, v, kChain);
    FAIL("expected VLAN_EXHAUSTED");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VlanExhausted);
  }
  CHECK(t.live_paths().size() == 4093);
}

}  // TEST_SUITE

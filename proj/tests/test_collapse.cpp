#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "netemu/collapse.hpp"
#include "netemu/topology.hpp"
#include "oracles.hpp"

namespace {

std::string experiment(const std::string& name) {
  std::ifstream in(std::string(EXPERIMENTS_DIR) + "/" + name);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

netemu::GraphState chain_graph() {
  // a-0 --(10ms, j3, loss .1, 50M)--> b1 --(10ms, j4, loss .1, 100M)--> b2
  //   --(5ms, j0, loss 0, 10M)--> c-0, plus reverse links with the same
  // properties but their own ids.
  const std::string text =
      "experiment:\n"
      "  services:\n"
      "    - name: a\n"
      "    - name: c\n"
      "  bridges:\n"
      "    - name: b1\n"
      "    - name: b2\n"
      "  links:\n"
      "    - orig: a\n"
      "      dest: b1\n"
      "      latency: 10\n"
      "      jitter: 3\n"
      "      loss: 0.1\n"
      "      up: 50Mbps\n"
      "      down: 50Mbps\n"
      "    - orig: b1\n"
      "      dest: b2\n"
      "      latency: 10\n"
      "      jitter: 4\n"
      "      loss: 0.1\n"
      "      up: 100Mbps\n"
      "      down: 100Mbps\n"
      "    - orig: c\n"
      "      dest: b2\n"
      "      latency: 5\n"
      "      up: 10Mbps\n"
      "      down: 10Mbps\n";
  return netemu::parse_experiment(text).initial_state();
}

}  // namespace

TEST_CASE("path composition identities") {
  const netemu::PathProperties empty = netemu::compose_path(std::vector<netemu::Link>{});
  CHECK(empty.latency_ms == 0.0);
  CHECK(empty.jitter_ms == 0.0);
  CHECK(empty.loss == 0.0);
  CHECK(empty.max_bandwidth_bps == netemu::kUnboundedBps);

  std::vector<netemu::Link> links(2);
  links[0] = {0, "a", "b", 10.0, 3.0, 0.1, 50000000, 0};
  links[1] = {1, "b", "c", 10.0, 4.0, 0.1, 100000000, 1};
  const auto p = netemu::compose_path(links);
  CHECK(p.latency_ms == 20.0);
  CHECK(p.jitter_ms == 5.0);  // sqrt(3^2 + 4^2)
  CHECK_THAT(p.loss, Catch::Matchers::WithinAbs(0.19, 1e-15));
  CHECK(p.max_bandwidth_bps == 50000000);
}

TEST_CASE("jitter composition is permutation invariant") {
  std::vector<netemu::Link> links(3);
  links[0] = {0, "a", "b", 1.0, 0.3, 0.0, 1000, 0};
  links[1] = {1, "b", "c", 1.0, 1.7, 0.0, 1000, 1};
  links[2] = {2, "c", "d", 1.0, 0.9, 0.0, 1000, 2};
  const double j1 = netemu::compose_path(links).jitter_ms;
  std::swap(links[0], links[2]);
  const double j2 = netemu::compose_path(links).jitter_ms;
  CHECK_THAT(j1, Catch::Matchers::WithinRel(j2, 1e-12));
}

TEST_CASE("collapse of a bridge chain") {
  const auto g = chain_graph();
  const auto ct = netemu::collapse_topology(g);
  const auto* p = ct.find("a-0", "c-0");
  REQUIRE(p != nullptr);
  CHECK(p->latency_ms == 25.0);
  CHECK(p->jitter_ms == 5.0);
  CHECK_THAT(p->loss, Catch::Matchers::WithinAbs(0.19, 1e-15));
  CHECK(p->max_bandwidth_bps == 10000000);
  CHECK(p->rtt_ms == 50.0);
  CHECK(p->link_ids.size() == 3);
  // Both directions exist, nothing else.
  CHECK(ct.find("c-0", "a-0") != nullptr);
  CHECK(ct.paths.size() == 2);
  CHECK(ct.find("a-0", "a-0") == nullptr);
}

TEST_CASE("figure1 collapses to all instance pairs") {
  const auto t = netemu::parse_experiment(experiment("figure1.yaml"));
  const auto ct = netemu::collapse_topology(t.initial_state());
  // 3 instances, ordered pairs = 6. sv-0 <-> sv-1 route through s2.
  CHECK(ct.paths.size() == 6);
  const auto* p = ct.find("c1-0", "sv-0");
  REQUIRE(p != nullptr);
  CHECK(p->latency_ms == 25.0);
  CHECK(p->rtt_ms == 50.0);
  CHECK(p->max_bandwidth_bps == 10000000);
  CHECK(p->jitter_ms == 0.25);
  const auto* pp = ct.find("sv-0", "sv-1");
  REQUIRE(pp != nullptr);
  CHECK(pp->latency_ms == 10.0);
}

TEST_CASE("services do not transit traffic") {
  // a - b - c in a line where b is a *service*: a and c must not reach
  // each other through it.
  const std::string text =
      "experiment:\n"
      "  services:\n"
      "    - name: a\n"
      "    - name: b\n"
      "    - name: c\n"
      "  links:\n"
      "    - orig: a\n"
      "      dest: b\n"
      "      latency: 5\n"
      "      up: 10Mbps\n"
      "      down: 10Mbps\n"
      "    - orig: b\n"
      "      dest: c\n"
      "      latency: 5\n"
      "      up: 10Mbps\n"
      "      down: 10Mbps\n";
  const auto ct =
      netemu::collapse_topology(netemu::parse_experiment(text).initial_state());
  CHECK(ct.find("a-0", "b-0") != nullptr);
  CHECK(ct.find("b-0", "c-0") != nullptr);
  CHECK(ct.find("a-0", "c-0") == nullptr);
  CHECK(ct.paths.size() == 4);
}

TEST_CASE("disconnected destinations are absent") {
  const std::string text =
      "experiment:\n"
      "  services:\n"
      "    - name: a\n"
      "    - name: b\n"
      "    - name: island\n"
      "  bridges:\n"
      "    - name: s\n"
      "    - name: lone\n"
      "  links:\n"
      "    - orig: a\n"
      "      dest: s\n"
      "      latency: 5\n"
      "      up: 10Mbps\n"
      "      down: 10Mbps\n"
      "    - orig: b\n"
      "      dest: s\n"
      "      latency: 5\n"
      "      up: 10Mbps\n"
      "      down: 10Mbps\n"
      "    - orig: island\n"
      "      dest: lone\n"
      "      latency: 5\n"
      "      up: 10Mbps\n"
      "      down: 10Mbps\n";
  const auto ct =
      netemu::collapse_topology(netemu::parse_experiment(text).initial_state());
  CHECK(ct.find("a-0", "b-0") != nullptr);
  CHECK(ct.find("a-0", "island-0") == nullptr);
  CHECK(ct.find("island-0", "a-0") == nullptr);
  CHECK(ct.paths.size() == 2);
}

TEST_CASE("latency ties break on hops then lexicographic link ids") {
  // Two routes a -> c with equal latency: via b1 (ids 0,1 direction-wise
  // first in file) and via b2. The documented tie-break picks the
  // lexicographically smaller id sequence.
  const std::string text =
      "experiment:\n"
      "  services:\n"
      "    - name: a\n"
      "    - name: c\n"
      "  bridges:\n"
      "    - name: b1\n"
      "    - name: b2\n"
      "  links:\n"
      "    - orig: a\n"
      "      dest: b1\n"
      "      latency: 5\n"
      "      up: 10Mbps\n"
      "      down: 10Mbps\n"
      "    - orig: b1\n"
      "      dest: c\n"
      "      latency: 5\n"
      "      up: 10Mbps\n"
      "      down: 10Mbps\n"
      "    - orig: a\n"
      "      dest: b2\n"
      "      latency: 5\n"
      "      up: 10Mbps\n"
      "      down: 10Mbps\n"
      "    - orig: b2\n"
      "      dest: c\n"
      "      latency: 5\n"
      "      up: 10Mbps\n"
      "      down: 10Mbps\n";
  const auto g = netemu::parse_experiment(text).initial_state();
  const auto ct = netemu::collapse_topology(g);
  const auto* p = ct.find("a-0", "c-0");
  REQUIRE(p != nullptr);
  REQUIRE(p->link_ids.size() == 2);
  CHECK(p->link_ids[0] == 0);  // a->b1 comes first in the file
  CHECK(p->link_ids[1] == 2);  // b1->c
}

TEST_CASE("rtt covers both directions on asymmetric routes") {
  const std::string text =
      "experiment:\n"
      "  services:\n"
      "    - name: a\n"
      "    - name: b\n"
      "  bridges:\n"
      "    - name: s\n"
      "  links:\n"
      "    - orig: a\n"
      "      dest: s\n"
      "      latency: 7\n"
      "      up: 10Mbps\n"
      "      down: 10Mbps\n"
      "    - orig: b\n"
      "      dest: s\n"
      "      latency: 3\n"
      "      up: 10Mbps\n"
      "      down: 10Mbps\n";
  const auto ct =
      netemu::collapse_topology(netemu::parse_experiment(text).initial_state());
  const auto* fwd = ct.find("a-0", "b-0");
  const auto* rev = ct.find("b-0", "a-0");
  REQUIRE(fwd != nullptr);
  REQUIRE(rev != nullptr);
  CHECK(fwd->latency_ms == 10.0);
  CHECK(rev->latency_ms == 10.0);
  CHECK(fwd->rtt_ms == 20.0);
  CHECK(fwd->rtt_ms == rev->rtt_ms);
}

TEST_CASE("streaming collapse matches the materialized one") {
  const auto g = oracle::random_connected_graph(30, 7);
  const auto ct = netemu::collapse_topology(g);
  std::size_t count = 0;
  netemu::for_each_collapsed_path(g, [&](const netemu::CollapsedPath& p) {
    ++count;
    const auto* q = ct.find(p.src, p.dst);
    REQUIRE(q != nullptr);
    CHECK(p.latency_ms == q->latency_ms);
    CHECK(p.jitter_ms == q->jitter_ms);
    CHECK(p.loss == q->loss);
    CHECK(p.max_bandwidth_bps == q->max_bandwidth_bps);
    CHECK(p.rtt_ms == q->rtt_ms);
    CHECK(p.link_ids == q->link_ids);
  });
  CHECK(count == ct.paths.size());
}

TEST_CASE("random graphs agree exactly with the relaxation oracle") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto g = oracle::random_connected_graph(25, seed);
    const auto ct = netemu::collapse_topology(g);
    for (const auto& src : g.instances) {
      const auto expect = oracle::shortest_paths(g, src);
      for (const auto& dst : g.instances) {
        if (dst == src) continue;
        const auto* got = ct.find(src, dst);
        auto it = expect.find(dst);
        INFO("seed " << seed << " " << src << "->" << dst);
        REQUIRE(got != nullptr);
        REQUIRE(it != expect.end());
        CHECK(got->link_ids == it->second.link_ids);
        CHECK(got->latency_ms == it->second.latency_ms);
      }
    }
  }
}

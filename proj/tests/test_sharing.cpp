#include <catch2/catch_amalgamated.hpp>

#include <limits>
#include <random>

#include "netemu/sharing.hpp"
#include "oracles.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

netemu::FlowRecord flow(std::string src, std::string dst, double rtt_ms,
                        std::vector<std::uint32_t> links,
                        std::int64_t demand = netemu::kUnboundedBps) {
  netemu::FlowRecord f;
  f.src = std::move(src);
  f.dst = std::move(dst);
  f.demand_bps = demand;
  f.rtt_ms = rtt_ms;
  f.link_ids = std::move(links);
  return f;
}

// The six-client dumbbell: access links into b1/b2 at 50/50/10 Mb/s, the
// b1->b2 bottleneck at 50, b2->b3 at 100. RTTs 70/60/60/50/40/40 ms.
struct Dumbbell {
  netemu::CollapsedTopology ct;
  std::vector<netemu::FlowRecord> flows;

  Dumbbell() {
    ct.link_capacity[0] = 50000000;   // b1->b2
    ct.link_capacity[1] = 100000000;  // b2->b3
    ct.link_capacity[2] = 10000000;   // c3 access
    ct.link_capacity[3] = 50000000;   // c1 access
    ct.link_capacity[4] = 50000000;   // c2 access
    ct.link_capacity[5] = 50000000;   // c4 access
    ct.link_capacity[6] = 50000000;   // c5 access
    ct.link_capacity[7] = 10000000;   // c6 access
    flows.push_back(flow("c1", "srv1", 70.0, {3, 0, 1}));
    flows.push_back(flow("c2", "srv2", 60.0, {4, 0, 1}));
    flows.push_back(flow("c3", "srv3", 60.0, {2, 0, 1}));
    flows.push_back(flow("c4", "srv4", 50.0, {5, 1}));
    flows.push_back(flow("c5", "srv5", 40.0, {6, 1}));
    flows.push_back(flow("c6", "srv6", 40.0, {7, 1}));
  }

  std::vector<netemu::FlowRecord> first(std::size_t n) const {
    return {flows.begin(), flows.begin() + n};
  }
};

std::vector<double> waterfill_of(const netemu::CollapsedTopology& ct,
                                 const std::vector<netemu::FlowRecord>& flows) {
  std::vector<oracle::Flow> of;
  for (const auto& f : flows) {
    oracle::Flow o;
    o.weight = 1.0 / f.rtt_ms;
    if (f.demand_bps != netemu::kUnboundedBps)
      o.demand = static_cast<double>(f.demand_bps);
    o.links = f.link_ids;
    of.push_back(std::move(o));
  }
  std::map<std::uint32_t, std::int64_t> caps(ct.link_capacity.begin(),
                                             ct.link_capacity.end());
  return oracle::waterfill(of, caps);
}

}  // namespace

TEST_CASE("per-link shares are inverse to RTT and sum to capacity") {
  const auto two = netemu::rtt_min_max_shares({70.0, 60.0}, 50000000);
  REQUIRE(two.size() == 2);
  CHECK_THAT(two[0], WithinRel(23076923.0769230769, 1e-12));
  CHECK_THAT(two[1], WithinRel(26923076.9230769231, 1e-12));
  CHECK_THAT(two[0] + two[1], WithinRel(50000000.0, 1e-12));

  const auto three = netemu::rtt_min_max_shares({70.0, 60.0, 60.0}, 50000000);
  CHECK_THAT(three[0], WithinRel(15000000.0, 1e-12));
  CHECK_THAT(three[1], WithinRel(17500000.0, 1e-12));
  CHECK_THAT(three[2], WithinRel(17500000.0, 1e-12));

  const auto sole = netemu::rtt_min_max_shares({123.0}, 50000000);
  CHECK_THAT(sole[0], WithinRel(50000000.0, 1e-12));

  CHECK_THROWS_AS(netemu::rtt_min_max_shares({70.0, 0.0}, 50000000),
                  netemu::SharingError);
  CHECK_THROWS_AS(netemu::rtt_min_max_shares({70.0, -1.0}, 50000000),
                  netemu::SharingError);
  CHECK_THROWS_AS(netemu::rtt_min_max_shares({70.0}, 0), netemu::SharingError);
}

TEST_CASE("maximization redistributes capped shares proportionally") {
  const double inf = std::numeric_limits<double>::infinity();
  const auto alloc = netemu::maximize_allocation({15e6, 17.5e6, 17.5e6},
                                                 {inf, inf, 10e6}, 50000000);
  REQUIRE(alloc.size() == 3);
  CHECK_THAT(alloc[0], WithinRel(18461538.4615384615, 1e-12));
  CHECK_THAT(alloc[1], WithinRel(21538461.5384615385, 1e-12));
  CHECK_THAT(alloc[2], WithinRel(10000000.0, 1e-12));

  // No caps bind: shares come back unchanged.
  const auto free_alloc =
      netemu::maximize_allocation({15e6, 35e6}, {inf, inf}, 50000000);
  CHECK_THAT(free_alloc[0], WithinRel(15e6, 1e-12));
  CHECK_THAT(free_alloc[1], WithinRel(35e6, 1e-12));

  // All caps bind: everyone lands on their cap, capacity goes unused.
  const auto tight =
      netemu::maximize_allocation({25e6, 25e6}, {5e6, 8e6}, 50000000);
  CHECK_THAT(tight[0], WithinRel(5e6, 1e-12));
  CHECK_THAT(tight[1], WithinRel(8e6, 1e-12));

  // Cascading: the first redistribution pushes another flow over its cap.
  const auto cascade =
      netemu::maximize_allocation({10e6, 20e6, 20e6}, {1e6, 21e6, inf}, 50000000);
  CHECK_THAT(cascade[0], WithinRel(1e6, 1e-12));
  CHECK_THAT(cascade[1], WithinRel(21e6, 1e-12));
  CHECK_THAT(cascade[2], WithinRel(28e6, 1e-12));

  CHECK_THROWS_AS(netemu::maximize_allocation({1.0}, {1.0, 2.0}, 10),
                  netemu::SharingError);
  CHECK_THROWS_AS(netemu::maximize_allocation({1.0}, {-1.0}, 10),
                  netemu::SharingError);
}

TEST_CASE("dumbbell steady state reproduces the phase plateaus") {
  const Dumbbell d;

  auto solve = [&](std::size_t n) {
    return netemu::steady_state_allocations(d.ct, d.first(n));
  };

  SECTION("one flow gets the full bottleneck") {
    const auto r = solve(1);
    CHECK_THAT(r[0].allocated_exact_bps, WithinRel(50e6, 1e-9));
  }
  SECTION("two flows") {
    const auto r = solve(2);
    CHECK_THAT(r[0].allocated_exact_bps, WithinRel(23076923.0769, 1e-6));
    CHECK_THAT(r[1].allocated_exact_bps, WithinRel(26923076.9231, 1e-6));
  }
  SECTION("three flows, one capped by its access link") {
    const auto r = solve(3);
    CHECK_THAT(r[0].allocated_exact_bps, WithinRel(18461538.4615, 1e-6));
    CHECK_THAT(r[1].allocated_exact_bps, WithinRel(21538461.5385, 1e-6));
    CHECK_THAT(r[2].allocated_exact_bps, WithinRel(10e6, 1e-6));
  }
  SECTION("fourth flow rides the second bottleneck alone") {
    const auto r = solve(4);
    CHECK_THAT(r[0].allocated_exact_bps, WithinRel(18461538.4615, 1e-6));
    CHECK_THAT(r[1].allocated_exact_bps, WithinRel(21538461.5385, 1e-6));
    CHECK_THAT(r[2].allocated_exact_bps, WithinRel(10e6, 1e-6));
    CHECK_THAT(r[3].allocated_exact_bps, WithinRel(50e6, 1e-6));
  }
  SECTION("five and six flows match the water-filling oracle") {
    for (std::size_t n : {std::size_t(5), std::size_t(6)}) {
      const auto r = solve(n);
      const auto expect = waterfill_of(d.ct, d.first(n));
      for (std::size_t i = 0; i < n; ++i) {
        INFO("n=" << n << " flow " << i);
        CHECK_THAT(r[i].allocated_exact_bps, WithinRel(expect[i], 1e-6));
      }
    }
    // Frozen reference points for the five-flow phase.
    const auto r = solve(5);
    CHECK_THAT(r[0].allocated_exact_bps, WithinAbs(16.93e6, 0.05e6));
    CHECK_THAT(r[1].allocated_exact_bps, WithinAbs(19.75e6, 0.05e6));
    CHECK_THAT(r[2].allocated_exact_bps, WithinAbs(10.00e6, 0.05e6));
    CHECK_THAT(r[3].allocated_exact_bps, WithinAbs(23.70e6, 0.05e6));
    CHECK_THAT(r[4].allocated_exact_bps, WithinAbs(29.62e6, 0.05e6));
  }
}

TEST_CASE("zero-demand flows take no share, bounded demand caps a flow") {
  Dumbbell d;
  auto flows = d.first(2);
  flows[0].demand_bps = 0;
  auto r = netemu::steady_state_allocations(d.ct, flows);
  CHECK(r[0].allocated_bps == 0);
  CHECK_THAT(r[1].allocated_exact_bps, WithinRel(50e6, 1e-9));

  flows = d.first(2);
  flows[1].demand_bps = 5000000;
  r = netemu::steady_state_allocations(d.ct, flows);
  CHECK_THAT(r[1].allocated_exact_bps, WithinRel(5e6, 1e-9));
  CHECK_THAT(r[0].allocated_exact_bps, WithinRel(45e6, 1e-9));
}

TEST_CASE("a flow with no finite constraint reports unbounded") {
  netemu::CollapsedTopology ct;
  auto r = netemu::steady_state_allocations(
      ct, {flow("a", "b", 10.0, {} /* no links */)});
  CHECK(r[0].allocated_bps == netemu::kUnboundedBps);
}

TEST_CASE("congestion loss kicks in past capacity") {
  const auto none = netemu::congestion_loss_rates({20000000, 30000000}, {60.0, 60.0},
                                                  50000000);
  CHECK(none[0] == 0.0);
  CHECK(none[1] == 0.0);

  const auto over = netemu::congestion_loss_rates({60000000}, {60.0}, 50000000);
  CHECK_THAT(over[0], WithinRel(1.0 / 6.0, 1e-12));

  // Elastic senders adapt instead of dropping a fixed fraction.
  const auto elastic = netemu::congestion_loss_rates(
      {netemu::kUnboundedBps, 60000000}, {60.0, 60.0}, 50000000);
  CHECK(elastic[0] == 0.0);
  CHECK(elastic[1] > 0.0);

  CHECK_THROWS_AS(netemu::congestion_loss_rates({1}, {60.0, 60.0}, 50), netemu::SharingError);
}

TEST_CASE("sharing properties on random single links") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> n_flows(1, 12);
  std::uniform_real_distribution<double> rtt(1.0, 500.0);
  std::uniform_int_distribution<std::int64_t> cap(1000000, 1000000000);
  for (int it = 0; it < 200; ++it) {
    const int n = n_flows(rng);
    const std::int64_t c = cap(rng);
    std::vector<double> rtts(n);
    for (auto& r : rtts) r = rtt(rng);
    const auto shares = netemu::rtt_min_max_shares(rtts, c);

    double sum = 0.0;
    for (double s : shares) sum += s;
    CHECK_THAT(sum, WithinRel(static_cast<double>(c), 1e-9));

    // Lower RTT never gets the smaller share.
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (rtts[i] < rtts[j]) CHECK(shares[i] >= shares[j]);

    std::uniform_real_distribution<double> capf(0.0, 2.0 * static_cast<double>(c) / n);
    std::vector<double> caps(n);
    for (auto& x : caps) x = capf(rng);
    const auto alloc = netemu::maximize_allocation(shares, caps, c);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(alloc[i] <= caps[i] * (1 + 1e-9) + 1e-6);
      total += alloc[i];
    }
    CHECK(total <= static_cast<double>(c) * (1 + 1e-9));
  }
}

TEST_CASE("removing a flow never hurts the others") {
  Dumbbell d;
  const auto base = netemu::steady_state_allocations(d.ct, d.flows);
  for (std::size_t drop = 0; drop < d.flows.size(); ++drop) {
    auto flows = d.flows;
    flows.erase(flows.begin() + drop);
    const auto r = netemu::steady_state_allocations(d.ct, flows);
    std::size_t k = 0;
    for (std::size_t i = 0; i < d.flows.size(); ++i) {
      if (i == drop) continue;
      CHECK(r[k].allocated_exact_bps >= base[i].allocated_exact_bps * (1 - 1e-6));
      ++k;
    }
  }
}

TEST_CASE("network steady state equals water filling on random topologies") {
  std::mt19937_64 rng(4242);
  for (int it = 0; it < 50; ++it) {
    const auto g = oracle::random_connected_graph(18, 1000 + it);
    const auto ct = netemu::collapse_topology(g);
    if (ct.paths.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, ct.paths.size() - 1);
    std::uniform_int_distribution<int> n_flows(1, 8);
    std::uniform_int_distribution<int> bounded(0, 3);
    std::vector<netemu::FlowRecord> flows;
    std::set<std::pair<std::string, std::string>> used;
    const int n = n_flows(rng);
    for (int i = 0; i < n; ++i) {
      const auto& p = ct.paths[pick(rng)];
      if (!used.insert({p.src, p.dst}).second) continue;
      auto f = flow(p.src, p.dst, p.rtt_ms, p.link_ids);
      if (bounded(rng) == 0)
        f.demand_bps = std::uniform_int_distribution<std::int64_t>(
            1000000, 80000000)(rng);
      flows.push_back(std::move(f));
    }
    if (flows.empty()) continue;
    const auto r = netemu::steady_state_allocations(ct, flows);
    const auto expect = waterfill_of(ct, flows);
    for (std::size_t i = 0; i < flows.size(); ++i) {
      INFO("case " << it << " flow " << i << " " << flows[i].src << "->" << flows[i].dst);
      CHECK_THAT(r[i].allocated_exact_bps, WithinRel(expect[i], 1e-5));
    }
  }
}

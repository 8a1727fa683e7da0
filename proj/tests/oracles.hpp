// Independent reference implementations used only by tests. These must
// stay structurally different from the library code paths they check:
// shortest paths by exhaustive edge relaxation instead of a priority
// queue, bandwidth sharing by weighted progressive filling instead of
// the per-link fixpoint.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "netemu/collapse.hpp"
#include "netemu/topology.hpp"
#include "netemu/units.hpp"

namespace oracle {

struct Path {
  bool reached = false;
  double latency_ms = 0.0;
  int hops = 0;
  std::vector<std::uint32_t> link_ids;
};

inline bool path_less(double d1, int h1, const std::vector<std::uint32_t>& p1, double d2,
                      int h2, const std::vector<std::uint32_t>& p2) {
  if (d1 != d2) return d1 < d2;
  if (h1 != h2) return h1 < h2;
  return p1 < p2;
}

// Bellman-Ford-style relaxation to a fixpoint under the total order
// (latency, hops, lexicographic link ids). Services never forward.
inline std::map<std::string, Path> shortest_paths(const netemu::GraphState& g,
                                                  const std::string& src) {
  std::map<std::string, Path> best;
  best[src] = Path{true, 0.0, 0, {}};
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& l : g.links) {
      auto from = best.find(l.src);
      if (from == best.end() || !from->second.reached) continue;
      const bool from_is_instance = g.has_instance(l.src);
      if (from_is_instance && l.src != src) continue;  // terminal node
      Path cand = from->second;
      cand.latency_ms += l.latency_ms;
      cand.hops += 1;
      cand.link_ids.push_back(l.id);
      auto& cur = best[l.dst];
      if (!cur.reached || path_less(cand.latency_ms, cand.hops, cand.link_ids,
                                    cur.latency_ms, cur.hops, cur.link_ids)) {
        cur = std::move(cand);
        cur.reached = true;
        changed = true;
      }
    }
  }
  best.erase(src);
  return best;
}

struct Flow {
  double weight = 0.0;  // 1/RTT
  double demand = std::numeric_limits<double>::infinity();
  std::vector<std::uint32_t> links;
};

// Weighted max-min via progressive filling: every unfrozen flow grows at
// rate weight * t until a link it crosses saturates or its demand is met.
inline std::vector<double> waterfill(const std::vector<Flow>& flows,
                                     const std::map<std::uint32_t, std::int64_t>& capacity) {
  const std::size_t n = flows.size();
  std::vector<double> rate(n, 0.0);
  std::vector<bool> frozen(n, false);
  const double kInf = std::numeric_limits<double>::infinity();

  for (;;) {
    bool any_unfrozen = false;
    for (std::size_t i = 0; i < n; ++i)
      if (!frozen[i]) any_unfrozen = true;
    if (!any_unfrozen) break;

    double t_star = kInf;
    // Link saturation levels.
    std::map<std::uint32_t, double> t_link;
    for (const auto& [id, cap] : capacity) {
      double sum_w = 0.0;
      double used = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        bool crosses = false;
        for (auto lid : flows[i].links)
          if (lid == id) crosses = true;
        if (!crosses) continue;
        if (frozen[i])
          used += rate[i];
        else
          sum_w += flows[i].weight;
      }
      if (sum_w > 0.0) {
        const double t = (static_cast<double>(cap) - used) / sum_w;
        t_link[id] = t;
        t_star = std::min(t_star, t);
      }
    }
    // Demand exhaustion levels.
    for (std::size_t i = 0; i < n; ++i)
      if (!frozen[i] && std::isfinite(flows[i].demand))
        t_star = std::min(t_star, flows[i].demand / flows[i].weight);

    if (!std::isfinite(t_star)) {
      for (std::size_t i = 0; i < n; ++i)
        if (!frozen[i]) {
          rate[i] = kInf;
          frozen[i] = true;
        }
      break;
    }

    const double eps = 1e-9 * std::max(1.0, std::abs(t_star));
    bool froze = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (frozen[i]) continue;
      bool limited = false;
      if (std::isfinite(flows[i].demand) && flows[i].demand / flows[i].weight <= t_star + eps)
        limited = true;
      for (auto lid : flows[i].links) {
        auto it = t_link.find(lid);
        if (it != t_link.end() && it->second <= t_star + eps) limited = true;
      }
      if (limited) {
        rate[i] = std::min(flows[i].weight * t_star,
                           std::isfinite(flows[i].demand) ? flows[i].demand : kInf);
        frozen[i] = true;
        froze = true;
      }
    }
    if (!froze) break;  // numerical stall; should not happen
  }
  return rate;
}

// Random connected test graph: a bridge core with a spanning tree plus
// extra edges, instances hanging off random bridges. All links come in
// directed pairs with equal properties.
inline netemu::GraphState random_connected_graph(int n_nodes, std::uint64_t seed,
                                                 double max_bandwidth_mbps = 100.0) {
  std::mt19937_64 rng(seed);
  const int n_bridges = std::max(2, n_nodes / 3);
  const int n_instances = std::max(2, n_nodes - n_bridges);
  std::uniform_real_distribution<double> lat(0.5, 20.0);
  std::uniform_real_distribution<double> jit(0.0, 2.0);
  std::uniform_real_distribution<double> loss(0.0, 0.05);
  std::uniform_real_distribution<double> bw_mbps(1.0, max_bandwidth_mbps);

  netemu::GraphState g;
  for (int i = 0; i < n_bridges; ++i) g.bridges.push_back("b" + std::to_string(i));
  for (int i = 0; i < n_instances; ++i) {
    const std::string name = "svc" + std::to_string(i) + "-0";
    g.instances.push_back(name);
    netemu::ServiceSpec s;
    s.name = "svc" + std::to_string(i);
    g.service_instances[s.name] = {name};
    g.services.push_back(std::move(s));
  }

  auto add_pair = [&](const std::string& a, const std::string& b) {
    const double l = lat(rng), j = jit(rng), p = loss(rng);
    const auto bw = static_cast<std::int64_t>(bw_mbps(rng) * 1e6);
    netemu::Link fwd{g.next_link_id++, a, b, l, j, p, bw, -1};
    netemu::Link rev{g.next_link_id++, b, a, l, j, p, bw, -1};
    g.links.push_back(fwd);
    g.links.push_back(rev);
  };

  for (int i = 1; i < n_bridges; ++i) {
    std::uniform_int_distribution<int> pick(0, i - 1);
    add_pair(g.bridges[i], g.bridges[pick(rng)]);
  }
  std::uniform_int_distribution<int> pick_bridge(0, n_bridges - 1);
  for (int i = 0; i < n_instances; ++i) add_pair(g.instances[i], g.bridges[pick_bridge(rng)]);
  // A few shortcut edges to create latency ties and alternative routes.
  const int extra = n_bridges / 2;
  for (int i = 0; i < extra; ++i) {
    const int a = pick_bridge(rng), b = pick_bridge(rng);
    if (a != b) add_pair(g.bridges[a], g.bridges[b]);
  }
  return g;
}

}  // namespace oracle

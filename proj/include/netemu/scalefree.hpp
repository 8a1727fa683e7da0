#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "netemu/topology.hpp"

namespace netemu {

// Scale-free test topology via preferential attachment: a bridge
// backbone grown one attachment at a time (new bridge picks an existing
// one with probability proportional to its degree), then end hosts
// attached to bridges with the same degree bias. Two thirds of the
// elements become services, one third bridges. Deterministic per seed.
inline Topology gen_scalefree(int n_elements, std::uint64_t seed) {
  if (n_elements < 3) throw std::invalid_argument("scale-free topology needs >= 3 elements");
  const int n_services = (2 * n_elements) / 3;
  const int n_bridges = n_elements - n_services;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> latency_ms(1, 10);

  Topology t;
  for (int i = 0; i < n_bridges; ++i) t.bridges.push_back({"sw" + std::to_string(i)});
  for (int i = 0; i < n_services; ++i) {
    ServiceSpec s;
    s.name = "h" + std::to_string(i);
    s.image = "workload";
    t.services.push_back(std::move(s));
  }

  // Repeated-endpoint list: drawing uniformly from it is the
  // degree-proportional choice.
  std::vector<int> endpoints;
  auto attach = [&](const std::string& from, int to_bridge) {
    LinkSpec l;
    l.id = static_cast<int>(t.link_specs.size());
    l.orig = from;
    l.dest = "sw" + std::to_string(to_bridge);
    l.latency_ms = latency_ms(rng);
    l.up_bps = 100000000;
    l.down_bps = 100000000;
    t.link_specs.push_back(std::move(l));
  };

  for (int i = 1; i < n_bridges; ++i) {
    int target;
    if (endpoints.empty()) {
      target = 0;
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, endpoints.size() - 1);
      target = endpoints[pick(rng)];
    }
    attach("sw" + std::to_string(i), target);
    endpoints.push_back(i);
    endpoints.push_back(target);
  }
  for (int i = 0; i < n_services; ++i) {
    int target = 0;
    if (!endpoints.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, endpoints.size() - 1);
      target = endpoints[pick(rng)];
    }
    attach("h" + std::to_string(i), target);
    endpoints.push_back(target);  // hosts add degree to the bridge only
  }

  // Normalize exactly like the parser does.
  GraphState g = t.initial_state();
  g.links.clear();
  g.next_link_id = 0;
  for (const auto& spec : t.link_specs) detail::expand_link_spec(g, spec);
  t.links = std::move(g.links);
  return t;
}

}  // namespace netemu

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "netemu/topology.hpp"
#include "netemu/units.hpp"

namespace netemu {

// End-to-end properties of one source->destination shortest path.
struct CollapsedPath {
  std::string src;
  std::string dst;
  double latency_ms = 0.0;
  double jitter_ms = 0.0;
  double loss = 0.0;
  std::int64_t max_bandwidth_bps = kUnboundedBps;
  std::vector<std::uint32_t> link_ids;
  double rtt_ms = 0.0;
};

struct PathProperties {
  double latency_ms = 0.0;
  double jitter_ms = 0.0;
  double loss = 0.0;
  std::int64_t max_bandwidth_bps = kUnboundedBps;
};

// Latency adds, jitter adds in variance, loss composes multiplicatively,
// bandwidth is the narrowest link. Empty path yields the identity.
inline PathProperties compose_path(std::span<const Link* const> links) {
  PathProperties p;
  double var = 0.0;
  double pass = 1.0;
  for (const Link* l : links) {
    p.latency_ms += l->latency_ms;
    var += l->jitter_ms * l->jitter_ms;
    pass *= 1.0 - l->loss;
    p.max_bandwidth_bps = std::min(p.max_bandwidth_bps, l->bandwidth_bps);
  }
  p.jitter_ms = std::sqrt(var);
  p.loss = 1.0 - pass;
  return p;
}

inline PathProperties compose_path(const std::vector<Link>& links) {
  std::vector<const Link*> ptrs;
  ptrs.reserve(links.size());
  for (const auto& l : links) ptrs.push_back(&l);
  return compose_path(std::span<const Link* const>(ptrs));
}

struct ShortestPath {
  double latency_ms = 0.0;
  int hops = 0;
  std::vector<std::uint32_t> link_ids;
};

namespace detail {

// Indexed view of a GraphState for traversal. Nodes are instances first,
// bridges after, both in insertion order.
struct IndexedGraph {
  std::vector<std::string> names;
  std::vector<bool> is_instance;
  std::unordered_map<std::string, int> index;
  struct Edge {
    int to;
    double latency_ms;
    std::uint32_t link_id;
  };
  std::vector<std::vector<Edge>> adj;
  std::unordered_map<std::uint32_t, const Link*> links_by_id;

  explicit IndexedGraph(const GraphState& g) {
    for (const auto& n : g.instances) {
      index[n] = static_cast<int>(names.size());
      names.push_back(n);
      is_instance.push_back(true);
    }
    for (const auto& n : g.bridges) {
      index[n] = static_cast<int>(names.size());
      names.push_back(n);
      is_instance.push_back(false);
    }
    adj.resize(names.size());
    for (const auto& l : g.links) {
      auto s = index.find(l.src);
      auto d = index.find(l.dst);
      if (s == index.end() || d == index.end()) continue;  // dangling after events
      adj[s->second].push_back({d->second, l.latency_ms, l.id});
      links_by_id[l.id] = &l;
    }
  }
};

// Total order on candidate paths: latency, then hop count, then the
// lexicographically smallest link-id sequence. Makes tie-breaking
// reproducible across runs and platforms.
inline bool path_better(double d1, int h1, const std::vector<std::uint32_t>& p1,
                        double d2, int h2, const std::vector<std::uint32_t>& p2) {
  if (d1 != d2) return d1 < d2;
  if (h1 != h2) return h1 < h2;
  return p1 < p2;
}

// Single-source shortest paths over the indexed graph. Service instances
// are terminal: traversal never continues out of an instance other than
// the source. Label-correcting so that latency ties settle on the
// documented tie-break.
inline std::vector<ShortestPath> single_source(const IndexedGraph& ig, int src,
                                               std::vector<bool>& reached) {
  const int n = static_cast<int>(ig.names.size());
  std::vector<ShortestPath> best(n);
  reached.assign(n, false);
  reached[src] = true;

  using QueueItem = std::pair<double, int>;  // (latency, node)
  std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>> queue;
  queue.push({0.0, src});
  while (!queue.empty()) {
    auto [d, u] = queue.top();
    queue.pop();
    if (!reached[u] || d > best[u].latency_ms) continue;
    if (ig.is_instance[u] && u != src) continue;  // services do not forward
    for (const auto& e : ig.adj[u]) {
      const double nd = best[u].latency_ms + e.latency_ms;
      const int nh = best[u].hops + 1;
      std::vector<std::uint32_t> np = best[u].link_ids;
      np.push_back(e.link_id);
      if (!reached[e.to] ||
          path_better(nd, nh, np, best[e.to].latency_ms, best[e.to].hops,
                      best[e.to].link_ids)) {
        reached[e.to] = true;
        best[e.to] = {nd, nh, std::move(np)};
        queue.push({nd, e.to});
      }
    }
  }
  return best;
}

}  // namespace detail

// Minimum-latency paths from one service instance to every reachable
// destination. Unreachable destinations are absent from the map.
inline std::unordered_map<std::string, ShortestPath> shortest_paths(
    const GraphState& g, const std::string& src) {
  detail::IndexedGraph ig(g);
  auto it = ig.index.find(src);
  if (it == ig.index.end()) return {};
  std::vector<bool> reached;
  auto best = detail::single_source(ig, it->second, reached);
  std::unordered_map<std::string, ShortestPath> out;
  for (int v = 0; v < static_cast<int>(ig.names.size()); ++v)
    if (reached[v]) out.emplace(ig.names[v], std::move(best[v]));
  return out;
}

struct CollapsedTopology {
  std::vector<CollapsedPath> paths;
  std::unordered_map<std::string, std::size_t> pair_index;  // "src\0dst" -> paths idx
  std::unordered_map<std::uint32_t, std::vector<std::size_t>> paths_by_link;
  std::unordered_map<std::uint32_t, std::int64_t> link_capacity;

  static std::string key(const std::string& src, const std::string& dst) {
    return src + '\0' + dst;
  }

  const CollapsedPath* find(const std::string& src, const std::string& dst) const {
    auto it = pair_index.find(key(src, dst));
    return it == pair_index.end() ? nullptr : &paths[it->second];
  }
};

// Collapses the graph into end-to-end virtual links: one CollapsedPath
// per ordered pair of reachable instances, plus a reverse index from link
// id to the paths that cross it.
inline CollapsedTopology collapse_topology(const GraphState& g) {
  CollapsedTopology ct;
  detail::IndexedGraph ig(g);
  const int n = static_cast<int>(ig.names.size());
  std::vector<int> sources;
  for (int v = 0; v < n; ++v)
    if (ig.is_instance[v]) sources.push_back(v);

  // Latency matrix between instances, needed for round-trip times.
  std::unordered_map<int, std::vector<ShortestPath>> per_source;
  std::unordered_map<int, std::vector<bool>> per_source_reached;
  for (int s : sources) {
    std::vector<bool> reached;
    per_source[s] = detail::single_source(ig, s, reached);
    per_source_reached[s] = std::move(reached);
  }

  for (const auto& l : g.links) ct.link_capacity[l.id] = l.bandwidth_bps;

  for (int s : sources) {
    const auto& best = per_source[s];
    const auto& reached = per_source_reached[s];
    for (int d : sources) {
      if (d == s || !reached[d]) continue;
      const ShortestPath& sp = best[d];
      std::vector<const Link*> links;
      links.reserve(sp.link_ids.size());
      for (auto id : sp.link_ids) links.push_back(ig.links_by_id.at(id));
      const PathProperties props = compose_path(links);
      CollapsedPath cp;
      cp.src = ig.names[s];
      cp.dst = ig.names[d];
      cp.latency_ms = props.latency_ms;
      cp.jitter_ms = props.jitter_ms;
      cp.loss = props.loss;
      cp.max_bandwidth_bps = props.max_bandwidth_bps;
      cp.link_ids = sp.link_ids;
      double back = sp.latency_ms;  // fall back to symmetric if one-way
      if (per_source_reached[d][s]) back = per_source[d][s].latency_ms;
      cp.rtt_ms = sp.latency_ms + back;
      const std::size_t idx = ct.paths.size();
      ct.pair_index.emplace(CollapsedTopology::key(cp.src, cp.dst), idx);
      for (auto id : cp.link_ids) ct.paths_by_link[id].push_back(idx);
      ct.paths.push_back(std::move(cp));
    }
  }
  return ct;
}

// Streaming variant for large graphs: runs one source at a time and hands
// each collapsed pair to `fn` without materializing the full topology.
// rtt_ms on the emitted paths uses the reverse one-way latency, computed
// with a second traversal per source pair batch.
inline void for_each_collapsed_path(
    const GraphState& g,
    const std::function<void(const CollapsedPath&)>& fn) {
  detail::IndexedGraph ig(g);
  const int n = static_cast<int>(ig.names.size());
  std::vector<int> sources;
  for (int v = 0; v < n; ++v)
    if (ig.is_instance[v]) sources.push_back(v);

  std::vector<int> source_ordinal(n, -1);
  for (std::size_t i = 0; i < sources.size(); ++i) source_ordinal[sources[i]] = int(i);

  // First pass collects the instance-to-instance latency matrix (needed
  // for round-trip times); paths are dropped to keep memory flat.
  constexpr double kUnreached = -1.0;
  std::vector<std::vector<double>> lat(sources.size(),
                                       std::vector<double>(sources.size(), kUnreached));
  for (std::size_t i = 0; i < sources.size(); ++i) {
    std::vector<bool> reached;
    auto best = detail::single_source(ig, sources[i], reached);
    for (std::size_t j = 0; j < sources.size(); ++j)
      if (j != i && reached[sources[j]]) lat[i][j] = best[sources[j]].latency_ms;
  }

  for (int s : sources) {
    std::vector<bool> reached;
    auto best = detail::single_source(ig, s, reached);
    for (int d : sources) {
      if (d == s || !reached[d]) continue;
      const ShortestPath& sp = best[d];
      std::vector<const Link*> links;
      links.reserve(sp.link_ids.size());
      for (auto id : sp.link_ids) links.push_back(ig.links_by_id.at(id));
      const PathProperties props = compose_path(links);
      CollapsedPath cp;
      cp.src = ig.names[s];
      cp.dst = ig.names[d];
      cp.latency_ms = props.latency_ms;
      cp.jitter_ms = props.jitter_ms;
      cp.loss = props.loss;
      cp.max_bandwidth_bps = props.max_bandwidth_bps;
      cp.link_ids = sp.link_ids;
      const double back = lat[source_ordinal[d]][source_ordinal[s]];
      cp.rtt_ms = sp.latency_ms + (back == kUnreached ? sp.latency_ms : back);
      fn(cp);
    }
  }
}

}  // namespace netemu

#pragma once

#include <string>
#include <vector>

#include "netemu/collapse.hpp"
#include "netemu/topology.hpp"

namespace netemu {

// Topology state effective from a point in time, with its collapsed form
// pre-computed so the emulation loop never pays the collapse cost online.
struct Snapshot {
  double effective_from_s = 0.0;
  GraphState graph;
  CollapsedTopology collapsed;
  std::vector<std::string> changed;  // events folded into this snapshot
};

struct SnapshotSequence {
  std::vector<Snapshot> snapshots;

  // Greatest effective_from_s <= t (piecewise constant, right-continuous).
  const Snapshot& at(double t_s) const {
    std::size_t i = 0;
    while (i + 1 < snapshots.size() && snapshots[i + 1].effective_from_s <= t_s) ++i;
    return snapshots[i];
  }

  std::size_t index_at(double t_s) const {
    std::size_t i = 0;
    while (i + 1 < snapshots.size() && snapshots[i + 1].effective_from_s <= t_s) ++i;
    return i;
  }
};

// Pre-computes the ordered sequence of graphs: the initial state plus one
// snapshot per distinct event time. Events at the same time fold into one
// snapshot, applied in file order.
inline SnapshotSequence build_snapshot_sequence(const Topology& t) {
  SnapshotSequence seq;
  Snapshot initial;
  initial.effective_from_s = 0.0;
  initial.graph = t.initial_state();
  initial.collapsed = collapse_topology(initial.graph);
  seq.snapshots.push_back(std::move(initial));

  std::size_t i = 0;
  while (i < t.events.size()) {
    const double time = t.events[i].time_s;
    Snapshot next;
    next.effective_from_s = time;
    next.graph = seq.snapshots.back().graph;
    while (i < t.events.size() && t.events[i].time_s == time) {
      apply_event(next.graph, t.events[i]);
      next.changed.push_back(t.events[i].describe());
      ++i;
    }
    next.collapsed = collapse_topology(next.graph);
    seq.snapshots.push_back(std::move(next));
  }
  return seq;
}

inline const Snapshot& snapshot_at(const SnapshotSequence& seq, double t_s) {
  return seq.at(t_s);
}

}  // namespace netemu

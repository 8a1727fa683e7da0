#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "netemu/backend.hpp"
#include "netemu/dynamics.hpp"
#include "netemu/sharing.hpp"
#include "netemu/units.hpp"
#include "netemu/wire.hpp"
#include "netemu/workload.hpp"

namespace netemu {

inline constexpr std::uint16_t kDefaultMetadataPort = 7073;
inline constexpr int kPeerSilenceTicks = 10;  // flows of quieter peers age out

// Stable instance -> address mapping across the whole run, covering every
// instance that exists in any snapshot.
class InstanceDirectory {
public:
  explicit InstanceDirectory(const SnapshotSequence& seq) {
    std::set<std::string> names;
    for (const auto& snap : seq.snapshots)
      names.insert(snap.graph.instances.begin(), snap.graph.instances.end());
    for (const auto& n : names) {
      const int idx = static_cast<int>(instances_.size());
      instances_.push_back(n);
      // Last two octets carry the index; they feed the backend's
      // two-level destination table.
      ips_.push_back("10.0." + std::to_string(idx / 256) + "." + std::to_string(idx % 256));
      index_[n] = idx;
    }
  }

  const std::vector<std::string>& instances() const { return instances_; }
  const std::string& ip(const std::string& instance) const {
    return ips_.at(index_.at(instance));
  }
  bool contains(const std::string& instance) const { return index_.count(instance) != 0; }

private:
  std::vector<std::string> instances_;
  std::vector<std::string> ips_;
  std::map<std::string, int> index_;
};

struct TickRow {
  double time_s = 0.0;
  int manager = 0;
  std::string src;
  std::string dst;
  std::int64_t demand_bps = 0;
  std::int64_t allocated_bps = 0;
  double loss = 0.0;
  double latency_ms = 0.0;
  double jitter_ms = 0.0;
};

struct OutgoingMetadata {
  std::vector<std::vector<std::uint8_t>> datagrams;  // envelope + payload
  std::size_t message_bytes = 0;                     // encoded payload only
};

// Transport envelope in front of each encoded metadata message: the
// snapshot index guards against link-id drift across snapshots, the tick
// index supports staleness handling.
inline std::vector<std::uint8_t> wrap_datagram(std::uint16_t snapshot_index,
                                               std::uint32_t tick,
                                               const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> out;
  out.reserve(6 + payload.size());
  detail::put_u16(out, snapshot_index);
  detail::put_u32(out, tick);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

// One emulation manager: owns a subset of instances, shapes only paths
// whose source it owns, and learns about everything else from metadata.
class EmulationManager {
public:
  EmulationManager(int id, std::vector<std::string> owned, const SnapshotSequence* seq,
                   const WorkloadSpec* workload, const InstanceDirectory* dir,
                   double tick_s, int id_width,
                   std::uint16_t control_port = kDefaultMetadataPort)
      : id_(id),
        owned_(std::move(owned)),
        seq_(seq),
        workload_(workload),
        dir_(dir),
        tick_s_(tick_s),
        id_width_(id_width),
        control_port_(control_port) {
    for (const auto& inst : owned_) {
      auto backend = std::make_unique<SimulatedBackend>();
      backend->init(control_port_);
      backends_.emplace(inst, std::move(backend));
    }
    refresh_local_pairs();
  }

  int id() const { return id_; }
  const std::vector<std::string>& owned() const { return owned_; }
  SimulatedBackend& backend(const std::string& instance) { return *backends_.at(instance); }

  // Advances the simulated data plane across [now, now+tick): applies
  // snapshot changes, sets offered load from the workload, delivers
  // traffic subject to the currently enforced caps.
  void begin_tick(double now_s) {
    const std::size_t snap = seq_->index_at(now_s);
    if (snap != snapshot_index_ || !started_) {
      switch_snapshot(snap);
      started_ = true;
    }
    const Snapshot& s = seq_->snapshots[snapshot_index_];
    for (const auto& [pair, segs] : local_pairs_) {
      const auto& [src, dst] = pair;
      auto& backend = *backends_.at(src);
      const std::int64_t demand = workload_->demand_at(src, dst, now_s);
      const CollapsedPath* path = s.collapsed.find(src, dst);
      const std::string& ip = dir_->ip(dst);
      if (demand > 0 && path != nullptr && !backend.has_destination(ip))
        backend.init_destination(ip, path->max_bandwidth_bps, path->latency_ms,
                                 path->jitter_ms, path->loss);
      if (backend.has_destination(ip)) backend.set_offered(ip, demand);
    }
    for (auto& [inst, backend] : backends_) backend->advance(tick_s_);
  }

  // Emulation loop steps 1-3: clears local flow state, reads usage
  // deltas from the backends, and packs the local report.
  OutgoingMetadata collect(double now_s, std::uint32_t tick) {
    local_flows_.clear();
    for (auto& [inst, backend] : backends_) backend->update_usage();

    const Snapshot& s = seq_->snapshots[snapshot_index_];
    MetadataMessage msg;
    msg.sender_id = static_cast<std::uint16_t>(id_);
    for (const auto& [pair, segs] : local_pairs_) {
      const auto& [src, dst] = pair;
      const std::int64_t demand = workload_->demand_at(src, dst, now_s);
      if (demand <= 0) continue;
      LocalFlow f;
      f.src = src;
      f.dst = dst;
      f.demand_bps = demand;
      auto& backend = *backends_.at(src);
      const std::string& ip = dir_->ip(dst);
      if (backend.has_destination(ip)) {
        const std::uint64_t total = backend.query_usage(ip);
        const std::uint64_t prev = usage_baseline_[pair];
        usage_baseline_[pair] = total;
        f.used_bps = static_cast<std::int64_t>(
            static_cast<double>(total - prev) * 8.0 / tick_s_);
      }
      if (const CollapsedPath* path = s.collapsed.find(src, dst)) f.path = path;
      local_flows_.push_back(std::move(f));
    }

    for (const auto& f : local_flows_) {
      if (f.used_bps <= 0 || f.path == nullptr) continue;
      MetadataMessage::Flow wf;
      wf.used_bandwidth_bps = static_cast<std::uint32_t>(
          std::min<std::int64_t>(f.used_bps, 0xffffffffLL));
      for (auto id : f.path->link_ids) wf.link_ids.push_back(static_cast<std::uint16_t>(id));
      msg.flows.push_back(std::move(wf));
    }

    OutgoingMetadata out;
    for (const auto& part : split_for_datagram(msg, id_width_)) {
      auto payload = encode_metadata(part, id_width_);
      out.message_bytes += payload.size();
      out.datagrams.push_back(
          wrap_datagram(static_cast<std::uint16_t>(snapshot_index_), tick, payload));
    }
    return out;
  }

  // Buffers one datagram from a peer; consumed by the next apply().
  void receive(const std::vector<std::uint8_t>& datagram) {
    std::lock_guard<std::mutex> lock(inbox_mutex_);
    inbox_.push_back(datagram);
  }

  // Steps 4-5: merges remote reports, solves the sharing model over the
  // links local flows cross, enforces per destination, reports rows.
  std::vector<TickRow> apply(double now_s, std::uint32_t tick) {
    drain_inbox(tick);
    for (auto it = remote_.begin(); it != remote_.end();) {
      if (tick > it->second.tick + kPeerSilenceTicks)
        it = remote_.erase(it);
      else
        ++it;
    }

    const Snapshot& s = seq_->snapshots[snapshot_index_];
    std::set<std::uint32_t> local_links;
    std::vector<FlowRecord> records;
    for (const auto& f : local_flows_) {
      FlowRecord r;
      r.src = f.src;
      r.dst = f.dst;
      r.demand_bps = f.demand_bps;
      if (f.path != nullptr) {
        r.rtt_ms = f.path->rtt_ms;
        r.link_ids = f.path->link_ids;
        local_links.insert(r.link_ids.begin(), r.link_ids.end());
      }
      records.push_back(std::move(r));
    }
    const std::size_t local_count = records.size();

    for (const auto& [sender, report] : remote_) {
      for (const auto& rf : report.flows) {
        const bool crosses_local =
            std::any_of(rf.link_ids.begin(), rf.link_ids.end(),
                        [&](std::uint32_t id) { return local_links.count(id) != 0; });
        if (!crosses_local) continue;
        FlowRecord r;
        r.src = rf.src;
        r.dst = rf.dst;
        r.demand_bps = rf.used_bps;  // a peer's demand is what it reports using
        r.rtt_ms = rf.rtt_ms;
        r.link_ids = rf.link_ids;
        records.push_back(std::move(r));
      }
    }

    // Flows without a path cannot be solved; they read zero.
    std::vector<FlowRecord> solvable;
    std::vector<std::size_t> solvable_index;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!records[i].link_ids.empty()) {
        solvable.push_back(records[i]);
        solvable_index.push_back(i);
      }
    }
    solvable = steady_state_allocations(s.collapsed, std::move(solvable));
    for (std::size_t k = 0; k < solvable.size(); ++k)
      records[solvable_index[k]] = solvable[k];

    std::vector<TickRow> rows;
    for (std::size_t i = 0; i < local_count; ++i) {
      const auto& r = records[i];
      const auto& f = local_flows_[i];
      TickRow row;
      row.time_s = now_s;
      row.manager = id_;
      row.src = r.src;
      row.dst = r.dst;
      row.demand_bps = r.demand_bps;
      if (f.path != nullptr) {
        row.allocated_bps = r.allocated_bps;
        row.latency_ms = f.path->latency_ms;
        row.jitter_ms = f.path->jitter_ms;
        double congestion = 0.0;
        if (r.demand_bps != kUnboundedBps && r.demand_bps > 0)
          congestion = std::max(
              0.0, 1.0 - r.allocated_exact_bps / static_cast<double>(r.demand_bps));
        row.loss = 1.0 - (1.0 - f.path->loss) * (1.0 - congestion);
        auto& backend = *backends_.at(r.src);
        const std::string& ip = dir_->ip(r.dst);
        try {
          backend.change_bandwidth(ip, r.allocated_bps);
        } catch (const BackendError& ex) {
          throw BackendError("manager " + std::to_string(id_) + ", destination " + r.dst +
                             ": " + ex.what());
        }
      } else {
        // Destination unreachable in this snapshot: nothing gets through.
        row.allocated_bps = 0;
        row.loss = 1.0;
        auto& backend = *backends_.at(r.src);
        const std::string& ip = dir_->ip(r.dst);
        if (backend.has_destination(ip)) backend.change_bandwidth(ip, 0);
      }
      rows.push_back(std::move(row));
    }
    return rows;
  }

  std::size_t snapshot_index() const { return snapshot_index_; }

private:
  struct LocalFlow {
    std::string src;
    std::string dst;
    std::int64_t demand_bps = 0;
    std::int64_t used_bps = 0;
    const CollapsedPath* path = nullptr;
  };

  struct RemoteFlow {
    std::string src;
    std::string dst;
    std::int64_t used_bps = 0;
    double rtt_ms = 0.0;
    std::vector<std::uint32_t> link_ids;
  };

  struct RemoteReport {
    std::uint32_t tick = 0;
    std::vector<RemoteFlow> flows;
  };

  void refresh_local_pairs() {
    local_pairs_.clear();
    for (const auto& [pair, segs] : workload_->pairs)
      if (std::find(owned_.begin(), owned_.end(), pair.first) != owned_.end())
        local_pairs_.emplace_back(pair, &segs);
  }

  void switch_snapshot(std::size_t snap) {
    snapshot_index_ = snap;
    for (auto& [inst, backend] : backends_) {
      backend->tear_down();
      backend->init(control_port_);
    }
    usage_baseline_.clear();
    remote_.clear();  // stale link ids would not resolve anyway
  }

  void drain_inbox(std::uint32_t tick) {
    std::vector<std::vector<std::uint8_t>> pending;
    {
      std::lock_guard<std::mutex> lock(inbox_mutex_);
      pending.swap(inbox_);
    }
    const Snapshot& s = seq_->snapshots[snapshot_index_];
    std::map<std::uint32_t, const Link*> links_by_id;
    for (const auto& l : s.graph.links) links_by_id[l.id] = &l;

    for (const auto& datagram : pending) {
      if (datagram.size() < 6) continue;
      detail::ByteReader r(datagram.data(), 6);
      const std::uint16_t snap_idx = r.u16();
      const std::uint32_t msg_tick = r.u32();
      if (snap_idx != snapshot_index_) continue;  // different graph, ids drifted
      MetadataMessage msg;
      try {
        msg = decode_metadata(
            std::vector<std::uint8_t>(datagram.begin() + 6, datagram.end()), id_width_);
      } catch (const WireError&) {
        continue;  // damaged datagram, the next tick refreshes state
      }
      auto& report = remote_[msg.sender_id];
      if (msg_tick < report.tick) continue;  // late duplicate
      if (msg_tick > report.tick) {
        report.flows.clear();
        report.tick = msg_tick;
      }
      for (const auto& f : msg.flows) {
        if (f.link_ids.empty()) continue;
        auto first = links_by_id.find(f.link_ids.front());
        auto last = links_by_id.find(f.link_ids.back());
        if (first == links_by_id.end() || last == links_by_id.end()) continue;
        RemoteFlow rf;
        rf.src = first->second->src;
        rf.dst = last->second->dst;
        rf.used_bps = f.used_bandwidth_bps;
        for (auto id : f.link_ids) rf.link_ids.push_back(id);
        if (const CollapsedPath* p = s.collapsed.find(rf.src, rf.dst))
          rf.rtt_ms = p->rtt_ms;
        else
          continue;
        report.flows.push_back(std::move(rf));
      }
    }
  }

  int id_;
  std::vector<std::string> owned_;
  const SnapshotSequence* seq_;
  const WorkloadSpec* workload_;
  const InstanceDirectory* dir_;
  double tick_s_;
  int id_width_;
  std::uint16_t control_port_;

  std::map<std::string, std::unique_ptr<SimulatedBackend>> backends_;
  std::vector<std::pair<WorkloadSpec::Pair, const std::vector<WorkloadSpec::Segment>*>>
      local_pairs_;
  std::map<WorkloadSpec::Pair, std::uint64_t> usage_baseline_;
  std::vector<LocalFlow> local_flows_;
  std::map<std::uint16_t, RemoteReport> remote_;
  std::vector<std::vector<std::uint8_t>> inbox_;
  std::mutex inbox_mutex_;
  std::size_t snapshot_index_ = 0;
  bool started_ = false;
};

// Largest directed-link id across all snapshots decides the wire id
// width: one byte while every id fits, two bytes beyond that.
inline int metadata_id_width(const SnapshotSequence& seq) {
  std::uint32_t max_ids = 0;
  for (const auto& s : seq.snapshots) max_ids = std::max(max_ids, s.graph.next_link_id);
  return max_ids <= 256 ? 1 : 2;
}

// Round-robin over the sorted union of instances; covers every instance
// exactly once.
inline std::vector<std::vector<std::string>> partition_instances(
    const InstanceDirectory& dir, int managers) {
  std::vector<std::vector<std::string>> parts(managers);
  int i = 0;
  for (const auto& inst : dir.instances()) parts[i++ % managers].push_back(inst);
  return parts;
}

struct RunResult {
  std::vector<TickRow> rows;
  // message_bytes[tick][manager]: encoded metadata payload produced that tick.
  std::vector<std::vector<std::size_t>> message_bytes;
  std::size_t network_bytes = 0;  // actual datagram bytes on the wire
};

// Drives all managers in lockstep simulated time within one process.
// Metadata still flows between managers, but in-process, so network
// bytes stay at zero.
inline RunResult run_experiment(const Topology& t, const WorkloadSpec& w, int managers,
                                double duration_s, double tick_s) {
  if (managers < 1) throw std::invalid_argument("manager count must be >= 1");
  if (tick_s <= 0) throw std::invalid_argument("tick length must be positive");
  const SnapshotSequence seq = build_snapshot_sequence(t);
  const InstanceDirectory dir(seq);
  const int id_width = metadata_id_width(seq);
  const auto parts = partition_instances(dir, managers);

  std::vector<std::unique_ptr<EmulationManager>> ems;
  for (int m = 0; m < managers; ++m)
    ems.push_back(std::make_unique<EmulationManager>(m, parts[m], &seq, &w, &dir, tick_s,
                                                     id_width));

  RunResult result;
  std::uint32_t tick = 0;
  for (double now = 0.0; now < duration_s; now = ++tick * tick_s) {
    for (auto& em : ems) em->begin_tick(now);
    std::vector<OutgoingMetadata> outs;
    outs.reserve(ems.size());
    result.message_bytes.emplace_back();
    for (auto& em : ems) {
      outs.push_back(em->collect(now, tick));
      result.message_bytes.back().push_back(outs.back().message_bytes);
    }
    for (std::size_t from = 0; from < ems.size(); ++from)
      for (std::size_t to = 0; to < ems.size(); ++to) {
        if (from == to) continue;
        for (const auto& d : outs[from].datagrams) ems[to]->receive(d);
      }
    for (auto& em : ems) {
      auto rows = em->apply(now, tick);
      result.rows.insert(result.rows.end(), rows.begin(), rows.end());
    }
  }
  return result;
}

inline std::string csv_header() {
  return "time_s,manager,src,dst,demand_bps,allocated_bps,loss,latency_ms,jitter_ms";
}

inline std::string to_csv_row(const TickRow& r) {
  char buf[512];
  std::string demand = r.demand_bps == kUnboundedBps ? "inf" : std::to_string(r.demand_bps);
  std::snprintf(buf, sizeof(buf), "%.3f,%d,%s,%s,%s,%lld,%.6f,%.6g,%.6g", r.time_s,
                r.manager, r.src.c_str(), r.dst.c_str(), demand.c_str(),
                static_cast<long long>(r.allocated_bps), r.loss, r.latency_ms, r.jitter_ms);
  return buf;
}

}  // namespace netemu

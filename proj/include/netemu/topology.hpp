#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "netemu/units.hpp"

namespace netemu {

class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class EventError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ServiceSpec {
  std::string name;
  std::string image;  // opaque, never resolved
  int replicas = 1;
  std::map<std::string, std::string> tags;

  bool operator==(const ServiceSpec&) const = default;
};

struct Bridge {
  std::string name;

  bool operator==(const Bridge&) const = default;
};

// A link as written in the experiment file. `up` applies orig->dest,
// `down` applies dest->orig; giving both makes the link bidirectional.
struct LinkSpec {
  int id = 0;
  std::string orig;
  std::string dest;
  double latency_ms = 0.0;
  double jitter_ms = 0.0;
  double loss = 0.0;
  std::optional<std::int64_t> up_bps;
  std::optional<std::int64_t> down_bps;

  bool bidirectional() const { return up_bps && down_bps; }

  bool operator==(const LinkSpec&) const = default;
};

// One directed link of the normalized graph. Endpoints are service
// instances ("<service>-<index>") or bridge names.
struct Link {
  std::uint32_t id = 0;
  std::string src;
  std::string dst;
  double latency_ms = 0.0;
  double jitter_ms = 0.0;
  double loss = 0.0;
  std::int64_t bandwidth_bps = 0;
  int spec_id = -1;  // -1 for links added by dynamic events

  bool operator==(const Link&) const = default;
};

enum class EventKind { LinkChange, Join, Leave };

struct DynamicEvent {
  double time_s = 0.0;
  EventKind kind = EventKind::LinkChange;

  // Link target (link-change, link join/leave).
  std::string orig;
  std::string dest;
  // Named element target (bridge/service join/leave).
  std::string name;

  // Properties; for link-change only the listed ones are touched.
  std::optional<double> latency_ms;
  std::optional<double> jitter_ms;
  std::optional<double> loss;
  std::optional<std::int64_t> up_bps;
  std::optional<std::int64_t> down_bps;

  // Service join payload.
  std::optional<std::string> image;
  std::optional<int> replicas;

  bool targets_link() const { return !orig.empty(); }

  bool operator==(const DynamicEvent&) const = default;

  std::string describe() const {
    std::string what;
    switch (kind) {
      case EventKind::LinkChange: what = "link-change "; break;
      case EventKind::Join: what = "join "; break;
      case EventKind::Leave: what = "leave "; break;
    }
    if (targets_link())
      what += orig + "->" + dest;
    else
      what += name;
    return what;
  }
};

// Mutable graph state: the initial topology, or the topology after some
// prefix of the dynamic events has been applied.
struct GraphState {
  std::vector<ServiceSpec> services;
  std::vector<std::string> bridges;
  std::vector<std::string> instances;  // insertion order, deterministic
  std::map<std::string, std::vector<std::string>> service_instances;
  std::vector<Link> links;
  std::uint32_t next_link_id = 0;

  bool has_bridge(const std::string& n) const {
    return std::find(bridges.begin(), bridges.end(), n) != bridges.end();
  }
  bool has_service(const std::string& n) const {
    return service_instances.count(n) != 0;
  }
  bool has_instance(const std::string& n) const {
    return std::find(instances.begin(), instances.end(), n) != instances.end();
  }

  // Resolves a file-level endpoint name to graph nodes: a service name
  // maps to all its instances, anything else to itself.
  std::vector<std::string> endpoint_nodes(const std::string& n) const {
    auto it = service_instances.find(n);
    if (it != service_instances.end()) return it->second;
    return {n};
  }

  bool operator==(const GraphState&) const = default;

  // Canonical single-line-per-element dump; used for determinism checks
  // and snapshot diffing.
  std::string dump() const {
    std::ostringstream os;
    os.precision(17);
    for (const auto& s : services)
      os << "service " << s.name << " x" << s.replicas << "\n";
    for (const auto& b : bridges) os << "bridge " << b << "\n";
    for (const auto& l : links)
      os << "link " << l.id << " " << l.src << "->" << l.dst << " lat=" << l.latency_ms
         << " jit=" << l.jitter_ms << " loss=" << l.loss << " bw=" << l.bandwidth_bps
         << "\n";
    return os.str();
  }
};

struct Topology {
  std::vector<ServiceSpec> services;
  std::vector<Bridge> bridges;
  std::vector<LinkSpec> link_specs;
  std::vector<Link> links;  // normalized, all directed, dense ids from 0
  std::vector<DynamicEvent> events;  // sorted by time, stable

  bool operator==(const Topology&) const = default;

  std::string instance_name(const std::string& service, int index) const {
    return service + "-" + std::to_string(index);
  }

  GraphState initial_state() const {
    GraphState g;
    g.services = services;
    for (const auto& b : bridges) g.bridges.push_back(b.name);
    for (const auto& s : services) {
      auto& insts = g.service_instances[s.name];
      for (int i = 0; i < s.replicas; ++i) {
        insts.push_back(instance_name(s.name, i));
        g.instances.push_back(insts.back());
      }
    }
    g.links = links;
    for (const auto& l : links) g.next_link_id = std::max(g.next_link_id, l.id + 1);
    return g;
  }
};

namespace detail {

inline void expand_directed(GraphState& g, const std::string& from, const std::string& to,
                            double latency_ms, double jitter_ms, double loss,
                            std::int64_t bandwidth_bps, int spec_id) {
  for (const auto& src : g.endpoint_nodes(from)) {
    for (const auto& dst : g.endpoint_nodes(to)) {
      Link l;
      l.id = g.next_link_id++;
      l.src = src;
      l.dst = dst;
      l.latency_ms = latency_ms;
      l.jitter_ms = jitter_ms;
      l.loss = loss;
      l.bandwidth_bps = bandwidth_bps;
      l.spec_id = spec_id;
      g.links.push_back(std::move(l));
    }
  }
}

inline void expand_link_spec(GraphState& g, const LinkSpec& spec) {
  if (spec.up_bps)
    expand_directed(g, spec.orig, spec.dest, spec.latency_ms, spec.jitter_ms, spec.loss,
                    *spec.up_bps, spec.id);
  if (spec.down_bps)
    expand_directed(g, spec.dest, spec.orig, spec.latency_ms, spec.jitter_ms, spec.loss,
                    *spec.down_bps, spec.id);
}

}  // namespace detail

// Applies a single dynamic event in place. Throws EventError when the
// event is not applicable to the current state.
inline void apply_event(GraphState& g, const DynamicEvent& e) {
  switch (e.kind) {
    case EventKind::LinkChange: {
      const auto srcs = g.endpoint_nodes(e.orig);
      const auto dsts = g.endpoint_nodes(e.dest);
      // `up` modifies orig->dest links, `down` the reverse direction.
      bool touched = false;
      for (auto& l : g.links) {
        const bool fwd = std::find(srcs.begin(), srcs.end(), l.src) != srcs.end() &&
                         std::find(dsts.begin(), dsts.end(), l.dst) != dsts.end();
        const bool rev = std::find(dsts.begin(), dsts.end(), l.src) != dsts.end() &&
                         std::find(srcs.begin(), srcs.end(), l.dst) != srcs.end();
        if (fwd) {
          if (e.latency_ms) l.latency_ms = *e.latency_ms;
          if (e.jitter_ms) l.jitter_ms = *e.jitter_ms;
          if (e.loss) l.loss = *e.loss;
          if (e.up_bps) l.bandwidth_bps = *e.up_bps;
          touched = true;
        } else if (rev && e.down_bps) {
          l.bandwidth_bps = *e.down_bps;
          touched = true;
        }
      }
      if (!touched)
        throw EventError("link-change targets unknown link " + e.orig + "->" + e.dest);
      break;
    }
    case EventKind::Leave: {
      if (e.targets_link()) {
        const auto srcs = g.endpoint_nodes(e.orig);
        const auto dsts = g.endpoint_nodes(e.dest);
        const auto before = g.links.size();
        std::erase_if(g.links, [&](const Link& l) {
          return std::find(srcs.begin(), srcs.end(), l.src) != srcs.end() &&
                 std::find(dsts.begin(), dsts.end(), l.dst) != dsts.end();
        });
        if (g.links.size() == before)
          throw EventError("leave of unknown link " + e.orig + "->" + e.dest);
        break;
      }
      if (g.has_bridge(e.name)) {
        std::erase(g.bridges, e.name);
        std::erase_if(g.links,
                      [&](const Link& l) { return l.src == e.name || l.dst == e.name; });
      } else if (g.has_service(e.name)) {
        const auto insts = g.service_instances[e.name];
        for (const auto& inst : insts) {
          std::erase(g.instances, inst);
          std::erase_if(g.links,
                        [&](const Link& l) { return l.src == inst || l.dst == inst; });
        }
        g.service_instances.erase(e.name);
        std::erase_if(g.services,
                      [&](const ServiceSpec& s) { return s.name == e.name; });
      } else {
        throw EventError("leave of unknown element '" + e.name + "'");
      }
      break;
    }
    case EventKind::Join: {
      if (e.targets_link()) {
        if (g.endpoint_nodes(e.orig).empty() ||
            (!g.has_service(e.orig) && !g.has_bridge(e.orig) && !g.has_instance(e.orig)))
          throw EventError("join link references unknown endpoint '" + e.orig + "'");
        if (!g.has_service(e.dest) && !g.has_bridge(e.dest) && !g.has_instance(e.dest))
          throw EventError("join link references unknown endpoint '" + e.dest + "'");
        if (!e.up_bps && !e.down_bps)
          throw EventError("join link " + e.orig + "->" + e.dest + " has no bandwidth");
        const double lat = e.latency_ms.value_or(0.0);
        const double jit = e.jitter_ms.value_or(0.0);
        const double los = e.loss.value_or(0.0);
        if (e.up_bps)
          detail::expand_directed(g, e.orig, e.dest, lat, jit, los, *e.up_bps, -1);
        if (e.down_bps)
          detail::expand_directed(g, e.dest, e.orig, lat, jit, los, *e.down_bps, -1);
        break;
      }
      if (g.has_bridge(e.name) || g.has_service(e.name) || g.has_instance(e.name))
        throw EventError("join of already existing element '" + e.name + "'");
      if (e.image) {
        ServiceSpec s;
        s.name = e.name;
        s.image = *e.image;
        s.replicas = e.replicas.value_or(1);
        auto& insts = g.service_instances[s.name];
        for (int i = 0; i < s.replicas; ++i) {
          insts.push_back(s.name + "-" + std::to_string(i));
          g.instances.push_back(insts.back());
        }
        g.services.push_back(std::move(s));
      } else {
        g.bridges.push_back(e.name);
      }
      break;
    }
  }
}

namespace detail {

class ExperimentParser {
public:
  ExperimentParser(const std::string& text, std::vector<std::string>* diagnostics)
      : diagnostics_(diagnostics) {
    try {
      root_ = YAML::Load(text);
    } catch (const YAML::ParserException& ex) {
      throw ParseError("syntax error at line " + std::to_string(ex.mark.line + 1) +
                       ", column " + std::to_string(ex.mark.column + 1) + ": " +
                       ex.msg);
    }
  }

  Topology parse() {
    Topology t;
    if (root_ && root_["experiment"]) {
      const YAML::Node exp = root_["experiment"];
      parse_services(exp["services"], t);
      parse_bridges(exp["bridges"], t);
      parse_links(exp["links"], t);
    }
    if (root_ && root_["dynamic"]) parse_dynamic(root_["dynamic"], t);
    std::stable_sort(t.events.begin(), t.events.end(),
                     [](const DynamicEvent& a, const DynamicEvent& b) {
                       return a.time_s < b.time_s;
                     });
    // Normalize: expand replicas and directed links with dense ids.
    GraphState g;
    g.services = t.services;
    for (const auto& b : t.bridges) g.bridges.push_back(b.name);
    for (const auto& s : t.services) {
      auto& insts = g.service_instances[s.name];
      for (int i = 0; i < s.replicas; ++i) insts.push_back(t.instance_name(s.name, i));
    }
    for (const auto& spec : t.link_specs) expand_link_spec(g, spec);
    t.links = std::move(g.links);
    return t;
  }

private:
  void fail(const YAML::Node& where, const std::string& msg) {
    std::string full = msg;
    if (where.Mark().line >= 0)
      full += " (line " + std::to_string(where.Mark().line + 1) + ")";
    if (diagnostics_) {
      diagnostics_->push_back(full);
      return;
    }
    throw ParseError(full);
  }

  void parse_services(const YAML::Node& node, Topology& t) {
    if (!node) return;
    for (const auto& item : node) {
      ServiceSpec s;
      if (!item["name"]) {
        fail(item, "service without a name");
        continue;
      }
      s.name = item["name"].as<std::string>();
      if (item["image"]) s.image = item["image"].as<std::string>();
      if (item["replicas"]) s.replicas = item["replicas"].as<int>();
      if (item["tags"])
        for (const auto& kv : item["tags"])
          s.tags[kv.first.as<std::string>()] = kv.second.as<std::string>();
      if (s.replicas < 1) fail(item, "service '" + s.name + "' has replicas < 1");
      for (const auto& other : t.services)
        if (other.name == s.name) fail(item, "duplicate service name '" + s.name + "'");
      t.services.push_back(std::move(s));
    }
  }

  void parse_bridges(const YAML::Node& node, Topology& t) {
    if (!node) return;
    for (const auto& item : node) {
      Bridge b;
      if (!item["name"]) {
        fail(item, "bridge without a name");
        continue;
      }
      b.name = item["name"].as<std::string>();
      for (const auto& other : t.bridges)
        if (other.name == b.name) fail(item, "duplicate bridge name '" + b.name + "'");
      for (const auto& s : t.services)
        if (s.name == b.name)
          fail(item, "bridge name '" + b.name + "' collides with a service name");
      t.bridges.push_back(std::move(b));
    }
  }

  bool known_endpoint(const Topology& t, const std::string& n) const {
    for (const auto& s : t.services)
      if (s.name == n) return true;
    for (const auto& b : t.bridges)
      if (b.name == n) return true;
    return false;
  }

  void parse_links(const YAML::Node& node, Topology& t) {
    if (!node) return;
    for (const auto& item : node) {
      LinkSpec l;
      l.id = static_cast<int>(t.link_specs.size());
      if (!item["orig"] || !item["dest"]) {
        fail(item, "link without orig/dest");
        continue;
      }
      l.orig = item["orig"].as<std::string>();
      l.dest = item["dest"].as<std::string>();
      if (l.orig == l.dest) fail(item, "link endpoints must differ ('" + l.orig + "')");
      if (!known_endpoint(t, l.orig))
        fail(item, "unknown endpoint name '" + l.orig + "'");
      if (!known_endpoint(t, l.dest))
        fail(item, "unknown endpoint name '" + l.dest + "'");
      if (item["latency"]) l.latency_ms = item["latency"].as<double>();
      if (item["jitter"]) l.jitter_ms = item["jitter"].as<double>();
      if (item["loss"]) l.loss = item["loss"].as<double>();
      if (l.latency_ms < 0) fail(item, "negative latency");
      if (l.jitter_ms < 0) fail(item, "negative jitter");
      if (l.loss < 0 || l.loss > 1) fail(item, "loss outside [0,1]");
      try {
        if (item["up"]) l.up_bps = parse_bandwidth(item["up"].as<std::string>());
        if (item["down"]) l.down_bps = parse_bandwidth(item["down"].as<std::string>());
      } catch (const UnitError& ex) {
        fail(item, ex.what());
      }
      if (!l.up_bps && !l.down_bps)
        fail(item, "link " + l.orig + "->" + l.dest + " has no bandwidth");
      if ((l.up_bps && *l.up_bps <= 0) || (l.down_bps && *l.down_bps <= 0))
        fail(item, "bandwidth must be positive on link " + l.orig + "->" + l.dest);
      t.link_specs.push_back(std::move(l));
    }
  }

  void parse_dynamic(const YAML::Node& node, Topology& t) {
    for (const auto& item : node) {
      DynamicEvent e;
      if (!item["time"]) {
        fail(item, "dynamic event without a time");
        continue;
      }
      e.time_s = item["time"].as<double>();
      if (e.time_s < 0) fail(item, "negative event time");
      std::string action = "link-change";
      if (item["action"]) action = item["action"].as<std::string>();
      if (action == "leave")
        e.kind = EventKind::Leave;
      else if (action == "join")
        e.kind = EventKind::Join;
      else if (action == "link-change")
        e.kind = EventKind::LinkChange;
      else {
        fail(item, "unknown action '" + action + "'");
        continue;
      }
      if (item["orig"]) e.orig = item["orig"].as<std::string>();
      if (item["dest"]) e.dest = item["dest"].as<std::string>();
      if (item["name"]) e.name = item["name"].as<std::string>();
      if (item["latency"]) e.latency_ms = item["latency"].as<double>();
      if (item["jitter"]) e.jitter_ms = item["jitter"].as<double>();
      if (item["loss"]) e.loss = item["loss"].as<double>();
      try {
        if (item["up"]) e.up_bps = parse_bandwidth(item["up"].as<std::string>());
        if (item["down"]) e.down_bps = parse_bandwidth(item["down"].as<std::string>());
      } catch (const UnitError& ex) {
        fail(item, ex.what());
      }
      if (e.loss && (*e.loss < 0 || *e.loss > 1)) fail(item, "loss outside [0,1]");
      if (e.kind == EventKind::LinkChange && (e.orig.empty() || e.dest.empty()))
        fail(item, "link-change without orig/dest");
      if (e.kind != EventKind::LinkChange && e.name.empty() && !e.targets_link())
        fail(item, "join/leave without a target");
      t.events.push_back(std::move(e));
    }
  }

  YAML::Node root_;
  std::vector<std::string>* diagnostics_;
};

}  // namespace detail

// Strict parse: throws ParseError on the first problem.
inline Topology parse_experiment(const std::string& text) {
  return detail::ExperimentParser(text, nullptr).parse();
}

// Lenient parse: semantic problems are collected into `diagnostics` and
// parsing continues best-effort. Syntax errors still throw.
inline Topology parse_experiment(const std::string& text,
                                 std::vector<std::string>& diagnostics) {
  return detail::ExperimentParser(text, &diagnostics).parse();
}

// Checks all topology invariants plus a dry run of the dynamic events in
// time order. Returns diagnostics; empty means valid.
inline std::vector<std::string> validate(const Topology& t) {
  std::vector<std::string> out;
  std::set<std::string> names;
  for (const auto& s : t.services) {
    if (!names.insert(s.name).second) out.push_back("duplicate service name '" + s.name + "'");
    if (s.replicas < 1)
      out.push_back("service '" + s.name + "' has replicas < 1");
  }
  for (const auto& b : t.bridges)
    if (!names.insert(b.name).second)
      out.push_back("duplicate or service-colliding bridge name '" + b.name + "'");
  for (const auto& l : t.link_specs) {
    if (l.orig == l.dest)
      out.push_back("link endpoints must differ ('" + l.orig + "')");
    if (!names.count(l.orig)) out.push_back("unknown endpoint name '" + l.orig + "'");
    if (!names.count(l.dest)) out.push_back("unknown endpoint name '" + l.dest + "'");
    if (l.loss < 0 || l.loss > 1) out.push_back("loss outside [0,1]");
    if (l.latency_ms < 0) out.push_back("negative latency");
    if ((l.up_bps && *l.up_bps <= 0) || (l.down_bps && *l.down_bps <= 0))
      out.push_back("bandwidth must be positive on link " + l.orig + "->" + l.dest);
    if (!l.up_bps && !l.down_bps)
      out.push_back("link " + l.orig + "->" + l.dest + " has no bandwidth");
  }
  if (!std::is_sorted(t.events.begin(), t.events.end(),
                      [](const DynamicEvent& a, const DynamicEvent& b) {
                        return a.time_s < b.time_s;
                      }))
    out.push_back("dynamic events are not sorted by time");
  if (!out.empty()) return out;

  GraphState g = t.initial_state();
  for (const auto& e : t.events) {
    try {
      apply_event(g, e);
    } catch (const EventError& ex) {
      out.push_back(std::string(ex.what()) + " (t=" + std::to_string(e.time_s) + ")");
    }
  }
  return out;
}

// Serializes back to the canonical experiment-file form. Parsing the
// result reproduces the Topology field by field.
inline std::string to_yaml(const Topology& t) {
  YAML::Emitter em;
  em.SetDoublePrecision(17);
  em << YAML::BeginMap;
  em << YAML::Key << "experiment" << YAML::Value << YAML::BeginMap;
  em << YAML::Key << "services" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : t.services) {
    em << YAML::BeginMap;
    em << YAML::Key << "name" << YAML::Value << s.name;
    if (!s.image.empty()) em << YAML::Key << "image" << YAML::Value << s.image;
    if (s.replicas != 1) em << YAML::Key << "replicas" << YAML::Value << s.replicas;
    if (!s.tags.empty()) {
      em << YAML::Key << "tags" << YAML::Value << YAML::BeginMap;
      for (const auto& [k, v] : s.tags) em << YAML::Key << k << YAML::Value << v;
      em << YAML::EndMap;
    }
    em << YAML::EndMap;
  }
  em << YAML::EndSeq;
  em << YAML::Key << "bridges" << YAML::Value << YAML::BeginSeq;
  for (const auto& b : t.bridges) {
    em << YAML::BeginMap << YAML::Key << "name" << YAML::Value << b.name << YAML::EndMap;
  }
  em << YAML::EndSeq;
  em << YAML::Key << "links" << YAML::Value << YAML::BeginSeq;
  for (const auto& l : t.link_specs) {
    em << YAML::BeginMap;
    em << YAML::Key << "orig" << YAML::Value << l.orig;
    em << YAML::Key << "dest" << YAML::Value << l.dest;
    em << YAML::Key << "latency" << YAML::Value << l.latency_ms;
    if (l.jitter_ms != 0) em << YAML::Key << "jitter" << YAML::Value << l.jitter_ms;
    if (l.loss != 0) em << YAML::Key << "loss" << YAML::Value << l.loss;
    if (l.up_bps) em << YAML::Key << "up" << YAML::Value << format_bandwidth(*l.up_bps);
    if (l.down_bps)
      em << YAML::Key << "down" << YAML::Value << format_bandwidth(*l.down_bps);
    em << YAML::EndMap;
  }
  em << YAML::EndSeq;
  em << YAML::EndMap;  // experiment
  if (!t.events.empty()) {
    em << YAML::Key << "dynamic" << YAML::Value << YAML::BeginSeq;
    for (const auto& e : t.events) {
      em << YAML::BeginMap;
      if (e.kind == EventKind::Join) em << YAML::Key << "action" << YAML::Value << "join";
      if (e.kind == EventKind::Leave)
        em << YAML::Key << "action" << YAML::Value << "leave";
      if (!e.orig.empty()) em << YAML::Key << "orig" << YAML::Value << e.orig;
      if (!e.dest.empty()) em << YAML::Key << "dest" << YAML::Value << e.dest;
      if (!e.name.empty()) em << YAML::Key << "name" << YAML::Value << e.name;
      if (e.image) em << YAML::Key << "image" << YAML::Value << *e.image;
      if (e.replicas) em << YAML::Key << "replicas" << YAML::Value << *e.replicas;
      if (e.latency_ms) em << YAML::Key << "latency" << YAML::Value << *e.latency_ms;
      if (e.jitter_ms) em << YAML::Key << "jitter" << YAML::Value << *e.jitter_ms;
      if (e.loss) em << YAML::Key << "loss" << YAML::Value << *e.loss;
      if (e.up_bps)
        em << YAML::Key << "up" << YAML::Value << format_bandwidth(*e.up_bps);
      if (e.down_bps)
        em << YAML::Key << "down" << YAML::Value << format_bandwidth(*e.down_bps);
      em << YAML::Key << "time" << YAML::Value << e.time_s;
      em << YAML::EndMap;
    }
    em << YAML::EndSeq;
  }
  em << YAML::EndMap;
  return std::string(em.c_str()) + "\n";
}

}  // namespace netemu

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "netemu/topology.hpp"
#include "netemu/units.hpp"

namespace netemu {

// Offered load per (src,dst) instance pair, as piecewise-constant
// segments; the stand-in for real application traffic.
struct WorkloadSpec {
  struct Segment {
    double start_s = 0.0;
    double end_s = 0.0;
    std::int64_t demand_bps = 0;  // kUnboundedBps for an elastic sender

    bool operator==(const Segment&) const = default;
  };

  using Pair = std::pair<std::string, std::string>;
  std::map<Pair, std::vector<Segment>> pairs;

  // Demand active at time t; segments are half-open [start, end).
  std::int64_t demand_at(const std::string& src, const std::string& dst, double t_s) const {
    auto it = pairs.find({src, dst});
    if (it == pairs.end()) return 0;
    for (const auto& seg : it->second)
      if (seg.start_s <= t_s && t_s < seg.end_s) return seg.demand_bps;
    return 0;
  }

  void add(const std::string& src, const std::string& dst, Segment seg) {
    auto& list = pairs[{src, dst}];
    for (const auto& other : list)
      if (seg.start_s < other.end_s && other.start_s < seg.end_s)
        throw ParseError("overlapping workload segments for " + src + "->" + dst);
    list.push_back(seg);
    std::sort(list.begin(), list.end(),
              [](const Segment& a, const Segment& b) { return a.start_s < b.start_s; });
  }
};

// Reads the optional `workload:` list of an experiment file. Absent key
// yields an empty spec.
inline WorkloadSpec parse_workload(const std::string& text) {
  WorkloadSpec w;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& ex) {
    throw ParseError("syntax error at line " + std::to_string(ex.mark.line + 1) + ": " +
                     ex.msg);
  }
  if (!root || !root["workload"]) return w;
  for (const auto& item : root["workload"]) {
    if (!item["src"] || !item["dst"])
      throw ParseError("workload entry without src/dst");
    WorkloadSpec::Segment seg;
    if (item["start"]) seg.start_s = item["start"].as<double>();
    if (item["end"]) seg.end_s = item["end"].as<double>();
    if (seg.end_s <= seg.start_s)
      throw ParseError("workload segment with end <= start");
    std::string demand = "unbounded";
    if (item["demand"]) demand = item["demand"].as<std::string>();
    seg.demand_bps = demand == "unbounded" ? kUnboundedBps : parse_bandwidth(demand);
    w.add(item["src"].as<std::string>(), item["dst"].as<std::string>(), seg);
  }
  return w;
}

}  // namespace netemu

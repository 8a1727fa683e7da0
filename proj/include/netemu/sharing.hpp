#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "netemu/collapse.hpp"
#include "netemu/units.hpp"

namespace netemu {

class SharingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// One aggregate per ordered (src,dst) pair; bandwidth is shared per
// destination, not per transport flow.
struct FlowRecord {
  std::string src;
  std::string dst;
  std::int64_t demand_bps = 0;  // kUnboundedBps when the source wants all it can get
  std::int64_t allocated_bps = 0;
  double allocated_exact_bps = 0.0;  // pre-rounding value of allocated_bps
  double rtt_ms = 0.0;
  std::vector<std::uint32_t> link_ids;
};

// Fair shares on a single link: each flow's fraction is inversely
// proportional to its round-trip time, normalized over all flows.
// Fractions sum to 1, so the shares sum to the capacity.
inline std::vector<double> rtt_min_max_shares(const std::vector<double>& rtts_ms,
                                              std::int64_t capacity_bps) {
  if (capacity_bps <= 0) throw SharingError("non-positive link capacity");
  double inv_sum = 0.0;
  for (double rtt : rtts_ms) {
    if (rtt <= 0.0) throw SharingError("degenerate RTT");
    inv_sum += 1.0 / rtt;
  }
  std::vector<double> shares(rtts_ms.size());
  for (std::size_t i = 0; i < rtts_ms.size(); ++i)
    shares[i] = static_cast<double>(capacity_bps) / (rtts_ms[i] * inv_sum);
  return shares;
}

// Redistributes the unused share of capped flows to the uncapped ones,
// proportionally to their original shares, iterating until no flow newly
// exceeds its cap. Equivalent to scaling all uncapped flows by a common
// factor until the budget min(capacity, sum of caps) is met.
inline std::vector<double> maximize_allocation(const std::vector<double>& shares,
                                               const std::vector<double>& caps,
                                               std::int64_t capacity_bps) {
  const std::size_t n = shares.size();
  if (caps.size() != n) throw SharingError("shares/caps length mismatch");
  std::vector<double> alloc(n, 0.0);
  std::vector<bool> capped(n, false);
  double cap_sum = 0.0;
  for (double c : caps) {
    if (c < 0) throw SharingError("negative cap");
    cap_sum += c;
  }
  double budget = std::min(static_cast<double>(capacity_bps), cap_sum);

  for (;;) {
    double uncapped_share = 0.0;
    double fixed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (capped[i])
        fixed += caps[i];
      else
        uncapped_share += shares[i];
    }
    if (uncapped_share <= 0.0) break;
    const double scale = (budget - fixed) / uncapped_share;
    bool newly_capped = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (capped[i]) continue;
      alloc[i] = shares[i] * scale;
      if (alloc[i] > caps[i]) {
        capped[i] = true;
        newly_capped = true;
      }
    }
    if (!newly_capped) break;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (capped[i]) alloc[i] = caps[i];
  return alloc;
}

struct SteadyStateOptions {
  double epsilon = 1e-9;  // relative, per flow, between sweeps
  int max_iterations = 10000;
};

class ConvergenceError : public std::runtime_error {
public:
  ConvergenceError(std::string msg, std::vector<FlowRecord> last)
      : std::runtime_error(std::move(msg)), last_iterate(std::move(last)) {}
  std::vector<FlowRecord> last_iterate;
};

// Network-wide fixpoint of the per-link model. Each link grants every
// flow its RTT share plus the maximization step; competing flows enter
// the maximization capped at min(demand, current network-wide
// allocation), while the flow being granted is capped by its demand only
// — a link must never restrict a flow on account of that link's own
// earlier grant, or mutually-capping links lock in an underallocation. A
// flow's allocation is the minimum of its grants. Flows with zero demand
// stay at zero and take no share.
inline std::vector<FlowRecord> steady_state_allocations(
    const CollapsedTopology& ct, std::vector<FlowRecord> flows,
    const SteadyStateOptions& opts = {}) {
  const double kInf = std::numeric_limits<double>::infinity();
  const std::size_t n = flows.size();

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i) {
    if (flows[i].demand_bps > 0)
      active.push_back(i);
    else {
      flows[i].allocated_bps = 0;
      flows[i].allocated_exact_bps = 0.0;
    }
  }

  // Links in ascending id order for a deterministic sweep.
  std::map<std::uint32_t, std::vector<std::size_t>> link_flows;
  for (std::size_t i : active)
    for (auto id : flows[i].link_ids) link_flows[id].push_back(i);

  auto demand_of = [&](std::size_t i) {
    return flows[i].demand_bps == kUnboundedBps
               ? kInf
               : static_cast<double>(flows[i].demand_bps);
  };

  // grant[link][k] parallels link_flows[link].
  std::map<std::uint32_t, std::vector<double>> grant;
  for (const auto& [id, fl] : link_flows) grant[id].assign(fl.size(), kInf);

  std::vector<double> current(n, 0.0);
  for (std::size_t i : active) current[i] = demand_of(i);

  auto flow_allocation = [&](std::size_t i) {
    double a = demand_of(i);
    for (auto id : flows[i].link_ids) {
      const auto& fl = link_flows[id];
      const auto& gr = grant[id];
      for (std::size_t k = 0; k < fl.size(); ++k)
        if (fl[k] == i) a = std::min(a, gr[k]);
    }
    return a;
  };

  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    const std::vector<double> before = current;
    for (auto& [id, fl] : link_flows) {
      auto cap_it = ct.link_capacity.find(id);
      if (cap_it == ct.link_capacity.end())
        throw SharingError("flow references unknown link id " + std::to_string(id));
      std::vector<double> rtts(fl.size());
      for (std::size_t k = 0; k < fl.size(); ++k) rtts[k] = flows[fl[k]].rtt_ms;
      const auto shares = rtt_min_max_shares(rtts, cap_it->second);
      std::vector<double> caps(fl.size());
      for (std::size_t k = 0; k < fl.size(); ++k) {
        for (std::size_t m = 0; m < fl.size(); ++m)
          caps[m] = m == k ? demand_of(fl[m])
                           : std::min(demand_of(fl[m]), current[fl[m]]);
        grant[id][k] = maximize_allocation(shares, caps, cap_it->second)[k];
      }
      for (std::size_t k = 0; k < fl.size(); ++k)
        current[fl[k]] = flow_allocation(fl[k]);
    }
    double worst = 0.0;
    for (std::size_t i : active) {
      const double a = current[i];
      const double prev = before[i];
      const double denom = std::max(1.0, std::isinf(a) ? 1.0 : a);
      const double delta =
          (std::isinf(a) && std::isinf(prev)) ? 0.0 : std::abs(a - prev) / denom;
      worst = std::max(worst, delta);
    }
    if (iter > 0 && worst < opts.epsilon) break;
  }

  for (std::size_t i : active) {
    double a = current[i];
    if (std::isinf(a)) {
      // No finite constraint anywhere on the path.
      flows[i].allocated_exact_bps = static_cast<double>(kUnboundedBps);
      flows[i].allocated_bps = kUnboundedBps;
    } else {
      flows[i].allocated_exact_bps = a;
      flows[i].allocated_bps = static_cast<std::int64_t>(std::llround(a));
    }
  }
  if (iter >= opts.max_iterations)
    throw ConvergenceError("steady-state solve did not converge", flows);
  return flows;
}

// Loss applied when offered load exceeds capacity: nothing is dropped
// while the link can carry the total demand; past that, each flow drops
// the fraction of its demand above its model allocation.
inline std::vector<double> congestion_loss_rates(const std::vector<std::int64_t>& demands,
                                                 const std::vector<double>& rtts_ms,
                                                 std::int64_t capacity_bps) {
  if (demands.size() != rtts_ms.size())
    throw SharingError("demands/rtts length mismatch");
  std::vector<double> loss(demands.size(), 0.0);
  double total = 0.0;
  bool unbounded = false;
  for (auto d : demands) {
    if (d == kUnboundedBps)
      unbounded = true;
    else
      total += static_cast<double>(d);
  }
  if (!unbounded && total <= static_cast<double>(capacity_bps)) return loss;

  const auto shares = rtt_min_max_shares(rtts_ms, capacity_bps);
  std::vector<double> caps(demands.size());
  for (std::size_t i = 0; i < demands.size(); ++i)
    caps[i] = demands[i] == kUnboundedBps ? std::numeric_limits<double>::infinity()
                                          : static_cast<double>(demands[i]);
  const auto alloc = maximize_allocation(shares, caps, capacity_bps);
  for (std::size_t i = 0; i < demands.size(); ++i) {
    if (demands[i] == kUnboundedBps) continue;  // elastic senders adapt, no fixed drop
    if (demands[i] <= 0) continue;
    loss[i] = std::max(0.0, 1.0 - alloc[i] / static_cast<double>(demands[i]));
  }
  return loss;
}

}  // namespace netemu

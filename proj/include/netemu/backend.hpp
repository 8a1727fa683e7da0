#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "netemu/units.hpp"

namespace netemu {

class BackendError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Per-destination traffic shaping and accounting, the shape of the
// kernel-level layer: a destination must be initialized before its
// bandwidth can be changed or its counters queried; byte counters only
// grow between tear_downs.
class EnforcementBackend {
public:
  virtual ~EnforcementBackend() = default;

  virtual void init(std::uint16_t control_port) = 0;
  virtual void init_destination(const std::string& ip, std::int64_t bandwidth_bps,
                                double latency_ms, double jitter_ms, double loss) = 0;
  virtual void change_bandwidth(const std::string& ip, std::int64_t bandwidth_bps) = 0;
  virtual void update_usage() = 0;
  virtual std::uint64_t query_usage(const std::string& ip) = 0;
  virtual void tear_down() = 0;
};

// Simulated data plane. Destinations live in a two-level table indexed by
// the last two octets of the destination address, giving O(1) lookup.
// Traffic is driven by offered-load curves: each advance() delivers
// min(offered, cap) for the interval and bumps the byte counter.
class SimulatedBackend final : public EnforcementBackend {
public:
  struct DestState {
    std::int64_t cap_bps = 0;
    double latency_ms = 0.0;
    double jitter_ms = 0.0;
    double loss = 0.0;
    std::int64_t offered_bps = 0;
    std::uint64_t bytes_sent = 0;     // committed at update_usage()
    std::uint64_t bytes_pending = 0;  // accumulated by advance()
  };

  void init(std::uint16_t control_port) override {
    control_port_ = control_port;
    initialized_ = true;
  }

  void init_destination(const std::string& ip, std::int64_t bandwidth_bps,
                        double latency_ms, double jitter_ms, double loss) override {
    require_init();
    auto [o3, o4] = split_ip(ip);
    auto& level2 = table_[o3];
    if (!level2) level2 = std::make_unique<Level2>();
    auto& slot = (*level2)[o4];
    if (slot) throw BackendError("destination " + ip + " initialized twice");
    slot = std::make_unique<DestState>();
    slot->cap_bps = bandwidth_bps;
    slot->latency_ms = latency_ms;
    slot->jitter_ms = jitter_ms;
    slot->loss = loss;
    dests_.push_back(ip);
  }

  void change_bandwidth(const std::string& ip, std::int64_t bandwidth_bps) override {
    lookup(ip).cap_bps = bandwidth_bps;
  }

  void update_usage() override {
    require_init();
    for (const auto& ip : dests_) {
      auto& d = lookup(ip);
      d.bytes_sent += d.bytes_pending;
      d.bytes_pending = 0;
    }
  }

  std::uint64_t query_usage(const std::string& ip) override { return lookup(ip).bytes_sent; }

  void tear_down() override {
    for (auto& level2 : table_) level2.reset();
    dests_.clear();
    initialized_ = false;
  }

  // --- simulation-only surface ---------------------------------------

  bool has_destination(const std::string& ip) const {
    auto [o3, o4] = split_ip(ip);
    return table_[o3] && (*table_[o3])[o4];
  }

  void set_offered(const std::string& ip, std::int64_t bps) { lookup(ip).offered_bps = bps; }

  // Moves simulated time forward by dt seconds.
  void advance(double dt_s) {
    for (const auto& ip : dests_) {
      auto& d = lookup(ip);
      const std::int64_t rate = std::min(d.offered_bps, d.cap_bps);
      if (rate > 0)
        d.bytes_pending += static_cast<std::uint64_t>(static_cast<double>(rate) / 8.0 * dt_s);
    }
  }

  const DestState& state(const std::string& ip) { return lookup(ip); }

private:
  using Level2 = std::array<std::unique_ptr<DestState>, 256>;

  void require_init() const {
    if (!initialized_) throw BackendError("backend used before init()");
  }

  static std::pair<int, int> split_ip(const std::string& ip) {
    // Addresses are dotted quads; only the last two octets index the table.
    auto last = ip.rfind('.');
    auto prev = ip.rfind('.', last == std::string::npos ? 0 : last - 1);
    if (last == std::string::npos || prev == std::string::npos)
      throw BackendError("malformed address '" + ip + "'");
    const int o3 = std::stoi(ip.substr(prev + 1, last - prev - 1));
    const int o4 = std::stoi(ip.substr(last + 1));
    if (o3 < 0 || o3 > 255 || o4 < 0 || o4 > 255)
      throw BackendError("malformed address '" + ip + "'");
    return {o3, o4};
  }

  DestState& lookup(const std::string& ip) {
    require_init();
    auto [o3, o4] = split_ip(ip);
    if (!table_[o3] || !(*table_[o3])[o4])
      throw BackendError("destination " + ip + " not initialized");
    return *(*table_[o3])[o4];
  }

  std::array<std::unique_ptr<Level2>, 256> table_;
  std::vector<std::string> dests_;  // insertion order, for deterministic sweeps
  bool initialized_ = false;
  std::uint16_t control_port_ = 0;
};

}  // namespace netemu

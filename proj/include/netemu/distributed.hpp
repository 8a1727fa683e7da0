#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "netemu/engine.hpp"

namespace netemu {

class TransportError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Thin RAII wrapper over a loopback UDP socket.
class UdpSocket {
public:
  UdpSocket() {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw TransportError("socket(): " + std::string(std::strerror(errno)));
  }
  ~UdpSocket() {
    if (fd_ >= 0) ::close(fd_);
  }
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  void bind(std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
      throw TransportError("bind(" + std::to_string(port) +
                           "): " + std::string(std::strerror(errno)));
  }

  void set_timeout_ms(int ms) {
    timeval tv{};
    tv.tv_sec = ms / 1000;
    tv.tv_usec = (ms % 1000) * 1000;
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  }

  std::size_t send_to(std::uint16_t port, const void* data, std::size_t size) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    const ssize_t n = ::sendto(fd_, data, size, 0, reinterpret_cast<sockaddr*>(&addr),
                               sizeof(addr));
    if (n < 0) throw TransportError("sendto(): " + std::string(std::strerror(errno)));
    return static_cast<std::size_t>(n);
  }

  // Blocking receive honoring the configured timeout; empty on timeout.
  std::vector<std::uint8_t> recv() {
    std::vector<std::uint8_t> buf(2048);
    const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
    if (n < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK) return {};
      throw TransportError("recv(): " + std::string(std::strerror(errno)));
    }
    buf.resize(static_cast<std::size_t>(n));
    return buf;
  }

  std::vector<std::uint8_t> try_recv() {
    std::vector<std::uint8_t> buf(2048);
    const ssize_t n = ::recv(fd_, buf.data(), buf.size(), MSG_DONTWAIT);
    if (n < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK) return {};
      throw TransportError("recv(): " + std::string(std::strerror(errno)));
    }
    buf.resize(static_cast<std::size_t>(n));
    return buf;
  }

private:
  int fd_ = -1;
};

inline void send_line(UdpSocket& sock, std::uint16_t port, const std::string& line) {
  sock.send_to(port, line.data(), line.size());
}

}  // namespace detail

// Port layout for a distributed run rooted at base_port:
//   base_port            coordinator control socket
//   base_port+1+i        worker i metadata (data) socket
//   base_port+1+N+i      worker i control socket
struct DistributedConfig {
  std::string experiment_path;
  int managers = 1;
  double duration_s = 0.0;
  double tick_s = 0.05;
  std::uint16_t base_port = kDefaultMetadataPort;
};

// One manager process: lockstep-driven by the coordinator, metadata
// exchanged with peers over real loopback datagrams.
inline int distributed_worker_main(const DistributedConfig& cfg, int worker_id,
                                   const std::string& out_path) {
  std::ifstream in(cfg.experiment_path);
  if (!in) throw TransportError("cannot open " + cfg.experiment_path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  const Topology topo = parse_experiment(text);
  const WorkloadSpec workload = parse_workload(text);
  const SnapshotSequence seq = build_snapshot_sequence(topo);
  const InstanceDirectory dir(seq);
  const int id_width = metadata_id_width(seq);
  const auto parts = partition_instances(dir, cfg.managers);
  EmulationManager manager(worker_id, parts[worker_id], &seq, &workload, &dir, cfg.tick_s,
                           id_width, cfg.base_port);

  const std::uint16_t data_port = cfg.base_port + 1 + worker_id;
  const std::uint16_t ctrl_port = cfg.base_port + 1 + cfg.managers + worker_id;
  detail::UdpSocket data_sock;
  data_sock.bind(data_port);
  detail::UdpSocket ctrl_sock;
  ctrl_sock.bind(ctrl_port);
  ctrl_sock.set_timeout_ms(200);

  std::vector<TickRow> rows;
  std::map<std::uint32_t, std::size_t> tick_message_bytes;
  std::size_t network_bytes = 0;
  std::int64_t collected_tick = -1;
  std::int64_t applied_tick = -1;

  bool handshaking = true;
  for (;;) {
    if (handshaking)
      detail::send_line(ctrl_sock, cfg.base_port, "HELLO " + std::to_string(worker_id));
    auto msg = ctrl_sock.recv();
    if (msg.empty()) continue;
    std::istringstream is(std::string(msg.begin(), msg.end()));
    std::string verb;
    std::uint32_t tick = 0;
    is >> verb >> tick;
    if (verb == "STOP") break;
    if (verb == "TICK") {
      handshaking = false;
      // Resent TICKs only re-ack; the work happened already.
      if (static_cast<std::int64_t>(tick) > collected_tick) {
        const double now = tick * cfg.tick_s;
        manager.begin_tick(now);
        auto out = manager.collect(now, tick);
        tick_message_bytes[tick] = out.message_bytes;
        for (int peer = 0; peer < cfg.managers; ++peer) {
          if (peer == worker_id) continue;
          for (const auto& d : out.datagrams)
            network_bytes += data_sock.send_to(cfg.base_port + 1 + peer, d.data(), d.size());
        }
        collected_tick = tick;
      }
      detail::send_line(ctrl_sock, cfg.base_port,
                        "SENT " + std::to_string(tick) + " " + std::to_string(worker_id));
    } else if (verb == "GO") {
      handshaking = false;
      if (static_cast<std::int64_t>(tick) > applied_tick) {
        for (;;) {
          auto d = data_sock.try_recv();
          if (d.empty()) break;
          manager.receive(d);
        }
        const double now = tick * cfg.tick_s;
        auto tick_rows = manager.apply(now, tick);
        rows.insert(rows.end(), tick_rows.begin(), tick_rows.end());
        applied_tick = tick;
      }
      detail::send_line(ctrl_sock, cfg.base_port,
                        "DONE " + std::to_string(tick) + " " + std::to_string(worker_id));
    }
  }

  std::ofstream rows_out(out_path);
  for (const auto& r : rows) rows_out << to_csv_row(r) << "\n";
  rows_out.close();
  std::ofstream stats(out_path + ".stats");
  stats << "network_bytes " << network_bytes << "\n";
  for (const auto& [tick, bytes] : tick_message_bytes)
    stats << "tick_bytes " << tick << " " << bytes << "\n";
  stats.close();
  detail::send_line(ctrl_sock, cfg.base_port, "BYE " + std::to_string(worker_id));
  return 0;
}

struct DistributedStats {
  std::vector<std::size_t> network_bytes;  // per worker
  // message bytes per tick per worker, from the worker stats files
  std::map<std::uint32_t, std::vector<std::size_t>> tick_message_bytes;
};

// Spawns one process per manager (re-executing `self_exe worker ...`),
// drives them in lockstep, merges their per-tick rows into out_csv.
inline DistributedStats run_distributed(const std::string& self_exe,
                                        const DistributedConfig& cfg,
                                        const std::string& out_csv) {
  if (cfg.managers < 1) throw std::invalid_argument("manager count must be >= 1");
  detail::UdpSocket ctrl;
  ctrl.bind(cfg.base_port);
  ctrl.set_timeout_ms(300);

  std::vector<pid_t> pids;
  std::vector<std::string> tmp_files;
  for (int i = 0; i < cfg.managers; ++i) {
    tmp_files.push_back(out_csv + ".part" + std::to_string(i));
    const pid_t pid = ::fork();
    if (pid < 0) throw TransportError("fork(): " + std::string(std::strerror(errno)));
    if (pid == 0) {
      std::vector<std::string> args = {self_exe,
                                       "worker",
                                       cfg.experiment_path,
                                       std::to_string(i),
                                       std::to_string(cfg.managers),
                                       std::to_string(cfg.duration_s),
                                       std::to_string(cfg.tick_s),
                                       std::to_string(cfg.base_port),
                                       tmp_files.back()};
      std::vector<char*> argv;
      for (auto& a : args) argv.push_back(a.data());
      argv.push_back(nullptr);
      ::execv(self_exe.c_str(), argv.data());
      std::_Exit(127);  // exec failed
    }
    pids.push_back(pid);
  }

  auto broadcast = [&](const std::string& line) {
    for (int i = 0; i < cfg.managers; ++i)
      detail::send_line(ctrl, cfg.base_port + 1 + cfg.managers + i, line);
  };

  // Waits until `expect` distinct worker ids acked with the given verb
  // and tick, rebroadcasting on timeout.
  auto await = [&](const std::string& verb, std::int64_t tick, const std::string& resend) {
    std::set<int> seen;
    int attempts = 0;
    while (static_cast<int>(seen.size()) < cfg.managers) {
      auto msg = ctrl.recv();
      if (msg.empty()) {
        if (++attempts > 100)
          throw TransportError("workers unresponsive awaiting " + verb);
        broadcast(resend);
        continue;
      }
      std::istringstream is(std::string(msg.begin(), msg.end()));
      std::string got;
      std::int64_t got_tick = -1;
      int id = -1;
      is >> got;
      if (got == "HELLO" || got == "BYE") {
        is >> id;
        if (verb == got && id >= 0) seen.insert(id);
        continue;
      }
      is >> got_tick >> id;
      if (got == verb && got_tick == tick && id >= 0) seen.insert(id);
    }
  };

  await("HELLO", -1, "");
  const std::uint32_t ticks =
      static_cast<std::uint32_t>(std::ceil(cfg.duration_s / cfg.tick_s - 1e-12));
  for (std::uint32_t tick = 0; tick < ticks; ++tick) {
    const std::string tick_line = "TICK " + std::to_string(tick);
    broadcast(tick_line);
    await("SENT", tick, tick_line);
    const std::string go_line = "GO " + std::to_string(tick);
    broadcast(go_line);
    await("DONE", tick, go_line);
  }
  broadcast("STOP");
  await("BYE", -1, "STOP");
  for (pid_t pid : pids) ::waitpid(pid, nullptr, 0);

  // Merge worker rows: each file is already time-ordered; a stable sort
  // on (time, manager) restores the global order.
  struct MergedRow {
    double time;
    int manager;
    std::string line;
  };
  std::vector<MergedRow> merged;
  DistributedStats stats;
  stats.network_bytes.resize(cfg.managers, 0);
  for (int i = 0; i < cfg.managers; ++i) {
    std::ifstream in(tmp_files[i]);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      MergedRow row;
      row.time = std::stod(line.substr(0, line.find(',')));
      row.manager = i;
      row.line = line;
      merged.push_back(std::move(row));
    }
    std::ifstream st(tmp_files[i] + ".stats");
    std::string verb;
    while (st >> verb) {
      if (verb == "network_bytes") {
        st >> stats.network_bytes[i];
      } else if (verb == "tick_bytes") {
        std::uint32_t tick = 0;
        std::size_t bytes = 0;
        st >> tick >> bytes;
        auto& v = stats.tick_message_bytes[tick];
        v.resize(cfg.managers, 0);
        v[i] = bytes;
      }
    }
    std::remove(tmp_files[i].c_str());
    std::remove((tmp_files[i] + ".stats").c_str());
  }
  std::stable_sort(merged.begin(), merged.end(), [](const MergedRow& a, const MergedRow& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.manager < b.manager;
  });
  std::ofstream out(out_csv);
  out << csv_header() << "\n";
  for (const auto& r : merged) out << r.line << "\n";
  return stats;
}

}  // namespace netemu

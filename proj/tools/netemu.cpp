#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "netemu/collapse.hpp"
#include "netemu/distributed.hpp"
#include "netemu/dynamics.hpp"
#include "netemu/engine.hpp"
#include "netemu/scalefree.hpp"
#include "netemu/topology.hpp"
#include "netemu/workload.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitRuntime = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_validate(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<std::string> diagnostics;
  netemu::Topology t;
  try {
    t = netemu::parse_experiment(text, diagnostics);
  } catch (const netemu::ParseError& ex) {
    std::cerr << ex.what() << "\n";
    return kExitValidation;
  }
  for (const auto& d : netemu::validate(t)) diagnostics.push_back(d);
  // Re-reported invariants may double up with parse diagnostics.
  std::sort(diagnostics.begin(), diagnostics.end());
  diagnostics.erase(std::unique(diagnostics.begin(), diagnostics.end()),
                    diagnostics.end());
  for (const auto& d : diagnostics) std::cerr << d << "\n";
  return diagnostics.empty() ? kExitOk : kExitValidation;
}

int cmd_collapse(const std::string& path) {
  const auto t = netemu::parse_experiment(read_file(path));
  const auto g = t.initial_state();
  std::cout << "src,dst,latency_ms,jitter_ms,loss,max_bw_bps,rtt_ms\n";
  netemu::for_each_collapsed_path(g, [](const netemu::CollapsedPath& p) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6g,%.6g,%.6g,%lld,%.6g", p.src.c_str(),
                  p.dst.c_str(), p.latency_ms, p.jitter_ms, p.loss,
                  static_cast<long long>(p.max_bandwidth_bps), p.rtt_ms);
    std::cout << buf << "\n";
  });
  return kExitOk;
}

int cmd_events(const std::string& path) {
  const auto t = netemu::parse_experiment(read_file(path));
  const auto seq = netemu::build_snapshot_sequence(t);
  std::cout << "time_s,changed_elements,reachable_pairs\n";
  for (const auto& s : seq.snapshots) {
    std::string changed;
    for (std::size_t i = 0; i < s.changed.size(); ++i) {
      if (i) changed += ';';
      changed += s.changed[i];
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", s.effective_from_s);
    std::cout << buf << "," << changed << "," << s.collapsed.paths.size() << "\n";
  }
  return kExitOk;
}

struct RunOptions {
  std::string path;
  double duration_s = 60.0;
  double tick_s = 0.05;
  int managers = 1;
  std::string out = "run.csv";
  std::uint64_t seed = 0;
  bool distributed = false;
  std::uint16_t base_port = netemu::kDefaultMetadataPort;
  std::string self_exe;
};

int cmd_run(const RunOptions& opts) {
  if (opts.distributed) {
    netemu::DistributedConfig cfg;
    cfg.experiment_path = opts.path;
    cfg.managers = opts.managers;
    cfg.duration_s = opts.duration_s;
    cfg.tick_s = opts.tick_s;
    cfg.base_port = opts.base_port;
    netemu::run_distributed(opts.self_exe, cfg, opts.out);
    return kExitOk;
  }
  const std::string text = read_file(opts.path);
  const auto t = netemu::parse_experiment(text);
  const auto w = netemu::parse_workload(text);
  std::ofstream out(opts.out);
  if (!out) throw std::ios_base::failure("cannot open " + opts.out);
  try {
    const auto result =
        netemu::run_experiment(t, w, opts.managers, opts.duration_s, opts.tick_s);
    out << netemu::csv_header() << "\n";
    for (const auto& r : result.rows) out << netemu::to_csv_row(r) << "\n";
  } catch (...) {
    out.close();
    std::remove(opts.out.c_str());
    throw;
  }
  return kExitOk;
}

int cmd_gen_scalefree(int size, std::uint64_t seed, const std::string& out_path) {
  const auto t = netemu::gen_scalefree(size, seed);
  std::ofstream out(out_path);
  if (!out) throw std::ios_base::failure("cannot open " + out_path);
  out << netemu::to_yaml(t);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network topology emulation engine"};
  app.require_subcommand(1);

  std::string path;
  auto* validate = app.add_subcommand("validate", "Check an experiment file");
  validate->add_option("file", path, "experiment file")->required();

  auto* collapse = app.add_subcommand("collapse", "Print collapsed end-to-end paths");
  collapse->add_option("file", path, "experiment file")->required();

  auto* events = app.add_subcommand("events", "Print the snapshot schedule");
  events->add_option("file", path, "experiment file")->required();

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Run an experiment");
  run->add_option("file", run_opts.path, "experiment file")->required();
  run->add_option("--duration", run_opts.duration_s, "duration in seconds");
  run->add_option("--tick", run_opts.tick_s, "tick length in seconds");
  run->add_option("--managers", run_opts.managers, "number of emulation managers");
  run->add_option("--out", run_opts.out, "output CSV path");
  run->add_option("--seed", run_opts.seed, "random seed");
  run->add_option("--base-port", run_opts.base_port, "UDP base port (distributed)");
  run->add_flag("--distributed", run_opts.distributed,
                "one manager process per partition element, metadata over loopback");

  int gen_size = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_out = "scalefree.yaml";
  auto* gen = app.add_subcommand("gen-scalefree", "Generate a scale-free test topology");
  gen->add_option("--size", gen_size, "total element count")->required();
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--out", gen_out, "output experiment file");

  // Internal: one distributed manager process, spawned by `run --distributed`.
  std::vector<std::string> worker_args;
  auto* worker = app.add_subcommand("worker");
  worker->add_option("args", worker_args)->expected(7);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitRuntime;
  }

  try {
    if (validate->parsed()) return cmd_validate(path);
    if (collapse->parsed()) return cmd_collapse(path);
    if (events->parsed()) return cmd_events(path);
    if (run->parsed()) {
      run_opts.self_exe = argv[0];
      return cmd_run(run_opts);
    }
    if (gen->parsed()) return cmd_gen_scalefree(gen_size, gen_seed, gen_out);
    if (worker->parsed()) {
      netemu::DistributedConfig cfg;
      cfg.experiment_path = worker_args[0];
      const int id = std::stoi(worker_args[1]);
      cfg.managers = std::stoi(worker_args[2]);
      cfg.duration_s = std::stod(worker_args[3]);
      cfg.tick_s = std::stod(worker_args[4]);
      cfg.base_port = static_cast<std::uint16_t>(std::stoi(worker_args[5]));
      return netemu::distributed_worker_main(cfg, id, worker_args[6]);
    }
  } catch (const netemu::ParseError& ex) {
    std::cerr << ex.what() << "\n";
    return kExitValidation;
  } catch (const std::ios_base::failure& ex) {
    std::cerr << ex.what() << "\n";
    return kExitIo;
  } catch (const std::exception& ex) {
    std::cerr << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}

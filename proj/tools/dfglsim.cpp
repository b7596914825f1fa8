#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "dfgl/common.hpp"
#include "dfgl/consensus.hpp"
#include "dfgl/graphdata.hpp"
#include "dfgl/orchestrator.hpp"
#include "dfgl/policies.hpp"

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

dfgl::Topology named_topology(const std::string& name, int m) {
  if (name == "ring") return dfgl::policy::ring_topology(m);
  if (name == "complete") return dfgl::policy::complete_topology(m);
  if (name.rfind("kreg:", 0) == 0) {
    int k = 0;
    try {
      k = std::stoi(name.substr(5));
    } catch (const std::exception&) {
      throw dfgl::ConfigError("bad k-regular degree in '" + name + "'");
    }
    return dfgl::policy::kregular_topology(m, k);
  }
  throw dfgl::ConfigError("unknown topology '" + name + "' (ring|kreg:K|complete)");
}

int cmd_run(const std::string& config_path, const CLI::App& sub, uint64_t seed,
            const std::string& policy, int rounds, const std::string& out) {
  auto cfg = dfgl::sim::load_config(config_path);
  if (sub.count("--seed")) cfg.master_seed = seed;
  if (sub.count("--policy")) cfg.policy.name = policy;
  if (sub.count("--rounds")) cfg.train.rounds = rounds;
  if (sub.count("--out")) cfg.out_dir = out;

  auto res = dfgl::sim::run(cfg, true);
  std::cout << "rounds: " << res.rounds_executed
            << (res.early_stopped ? " (early stop)" : "") << "\n"
            << "final_accuracy: " << fmt(res.final_accuracy) << "\n"
            << "sim_time_s: " << fmt(res.sim_time_s) << "\n"
            << "embed_MB: " << fmt(res.ledger.total_embed_bits() / dfgl::net::kBitsPerMB)
            << "\n"
            << "model_MB: " << fmt(res.ledger.total_model_bits() / dfgl::net::kBitsPerMB)
            << "\n"
            << "privacy_ok: " << (res.privacy_ok ? "true" : "false") << "\n"
            << "out: " << cfg.out_dir << "\n";
  return 0;
}

int cmd_spectrum(const std::string& name, int m) {
  auto t = named_topology(name, m);
  auto eig = dfgl::consensus::laplacian_eigenvalues(t);
  auto mix = dfgl::consensus::compute_mixing(t);
  std::cout << "topology: " << name << " m=" << m << " edges=" << t.num_edges() << "\n";
  std::cout << "alpha_mix: " << fmt(mix.alpha) << "\n";
  std::cout << "eigenvalues:";
  for (double v : eig) std::cout << ' ' << fmt(v);
  std::cout << "\n";
  return 0;
}

int cmd_partition_stats(double alpha, int m, int nodes, int classes, uint64_t seed) {
  dfgl::graph::SbmParams sp;
  sp.num_nodes = nodes;
  sp.num_classes = classes;
  sp.seed = dfgl::derive_seed(seed, "graph");
  auto g = dfgl::graph::generate_sbm(sp);
  dfgl::graph::PartitionSpec part{m, alpha, dfgl::derive_seed(seed, "partition")};
  auto owner = dfgl::graph::dirichlet_partition(g, part);
  auto subs = dfgl::graph::build_subgraphs(g, owner, m);
  auto skew = dfgl::graph::label_skew(subs, g);

  std::cout << "worker,nodes,train,test,cross_edges,tv_skew\n";
  for (int i = 0; i < m; ++i)
    std::cout << i << ',' << subs[i].local_nodes.size() << ',' << subs[i].train_nodes.size()
              << ',' << subs[i].test_nodes.size() << ',' << subs[i].external_stubs.size()
              << ',' << fmt(skew.per_worker_tv[i]) << '\n';
  std::cout << "mean_tv: " << fmt(skew.mean_tv) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decentralized federated graph learning simulator"};
  app.require_subcommand(1);

  std::string backend = "openmp";
  app.add_option("--backend", backend, "kernel backend: openmp|serial")
      ->check(CLI::IsMember({"openmp", "serial"}));

  auto* run = app.add_subcommand("run", "execute a simulation from a config file");
  std::string config_path, policy, out;
  uint64_t seed = 0;
  int rounds = 0;
  run->add_option("--config", config_path, "path to the json config")->required();
  run->add_option("--seed", seed, "master seed override");
  run->add_option("--policy", policy, "policy override");
  run->add_option("--rounds", rounds, "round count override");
  run->add_option("--out", out, "output directory override");

  auto* spec = app.add_subcommand("spectrum", "mixing weight and Laplacian spectrum");
  std::string topo_name;
  int spec_m = 0;
  spec->add_option("--topology", topo_name, "ring|kreg:K|complete")->required();
  spec->add_option("--m", spec_m, "worker count")->required();

  auto* part = app.add_subcommand("partition-stats", "label skew of a Dirichlet split");
  double part_alpha = 1.0;
  int part_m = 0, part_nodes = 400, part_classes = 4;
  uint64_t part_seed = 1;
  part->add_option("--alpha", part_alpha, "Dirichlet concentration")->required();
  part->add_option("--m", part_m, "worker count")->required();
  part->add_option("--nodes", part_nodes, "synthetic graph size");
  part->add_option("--classes", part_classes, "label count");
  part->add_option("--seed", part_seed, "master seed");

  CLI11_PARSE(app, argc, argv);

  dfgl::kern::set_backend(backend == "serial" ? dfgl::kern::Backend::Serial
                                              : dfgl::kern::Backend::OpenMP);
  try {
    if (*run) return cmd_run(config_path, *run, seed, policy, rounds, out);
    if (*spec) return cmd_spectrum(topo_name, spec_m);
    if (*part) return cmd_partition_stats(part_alpha, part_m, part_nodes, part_classes,
                                          part_seed);
  } catch (const dfgl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

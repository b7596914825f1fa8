#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dfgl/ddpgctl.hpp"
#include "dfgl/fedworker.hpp"
#include "dfgl/netmodel.hpp"

namespace dfgl::sim {

struct GraphConfig {
  std::string source = "sbm";  // or "file"
  int nodes = 400;
  int classes = 4;
  double p_intra = 0.1;
  double p_inter = 0.01;
  int feature_dim = 16;
  double feature_margin = 1.0;
  double test_fraction = 0.2;
  std::string edge_file, feature_file;
};

struct ModelConfig {
  std::vector<int> hidden_dims{32, 32};  // d_1..d_L
  double lr = 0.01;
  double weight_decay = 3e-4;
};

struct TrainConfig {
  int rounds = 60;
  int tau = 5;
  int batch_size = 64;
  double target_accuracy = -1.0;  // < 0 disables early stop
};

struct NetConfig {
  double bandwidth_min = 5.0;
  double bandwidth_max = 20.0;
  double seconds_per_row = 1e-5;
  std::vector<double> speed_factors{1.0};  // cycled over workers
};

struct PolicyConfig {
  std::string name = "ddpg";
  double fixed_ratio = 1.0;
};

struct ConsensusConfig {
  std::string observability = "all";  // or "adjacent"
};

struct SimConfig {
  GraphConfig graph;
  int workers = 8;
  double alpha = 1.0;
  ModelConfig model;
  TrainConfig train;
  NetConfig net;
  PolicyConfig policy;
  ctl::AgentConfig agent;
  ConsensusConfig consensus;
  bool privacy_disabled = false;  // test hook, lifts the feature-layer rule
  uint64_t master_seed = 1;
  std::string out_dir = "out";

  void validate() const;
};

SimConfig config_from_json(const nlohmann::json& j);  // unknown keys error
SimConfig load_config(const std::string& path);
nlohmann::json config_to_json(const SimConfig& c);

/// One metrics.csv row; field order matches the file header.
struct RoundRow {
  int round = 0;
  double t_round = 0, cum_time_s = 0, cum_embed_mb = 0, cum_model_mb = 0;
  double mean_loss = 0, mean_acc = 0;
  double c_exact = 0, c_est = 0, c_max = 0;
  int edges = 0;
  double mean_ratio = 0, reward = 0;
};

struct AgentRow {
  int round = 0;
  double u = 0, delta_mean = 0, q_mean = 0;
  int edges = 0;
  double mean_ratio = 0, noise_sigma = 0;
};

struct RunResult {
  std::vector<RoundRow> rows;
  std::vector<AgentRow> agent_rows;
  net::TrafficLedger ledger;
  std::vector<worker::TransferRecord> transfers;
  std::vector<std::vector<double>> final_params;  // per worker, flattened
  bool privacy_ok = true;
  bool early_stopped = false;
  int rounds_executed = 0;
  double final_accuracy = 0.0;
  double sim_time_s = 0.0;
  double wall_seconds = 0.0;
  nlohmann::json run_json;
};

/// Executes the round loop: configuration update, local training with
/// embedding exchange, model exchange + gossip aggregation, cost accounting,
/// controller update. Deterministic under (config, master seed).
RunResult run(const SimConfig& cfg, bool write_files = true);

void write_metrics_csv(const std::vector<RoundRow>& rows, std::ostream& os);

/// Mean test accuracy over workers with test nodes (parallel-safe, unbilled).
struct EvalSummary {
  double mean_accuracy = 0.0;
  std::vector<double> per_worker;  // NaN where undefined
  int evaluated = 0;
};

}  // namespace dfgl::sim

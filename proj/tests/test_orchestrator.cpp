#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dfgl/common.hpp"
#include "dfgl/gcnmodel.hpp"
#include "dfgl/orchestrator.hpp"

using namespace dfgl;

namespace {

sim::SimConfig small_cfg() {
  sim::SimConfig c;
  c.graph.nodes = 60;
  c.graph.classes = 3;
  c.graph.p_intra = 0.25;
  c.graph.p_inter = 0.05;
  c.graph.feature_dim = 8;
  c.graph.test_fraction = 0.2;
  c.workers = 4;
  c.alpha = 1.0;
  c.model.hidden_dims = {8};
  c.train.rounds = 3;
  c.train.tau = 2;
  c.train.batch_size = 16;
  c.policy.name = "ring";
  c.policy.fixed_ratio = 0.5;
  c.master_seed = 7;
  return c;
}

std::string metrics_of(const sim::RunResult& r) {
  std::ostringstream os;
  sim::write_metrics_csv(r.rows, os);
  return os.str();
}

std::string traffic_of(const sim::RunResult& r) {
  std::ostringstream os;
  r.ledger.export_csv(os);
  return os.str();
}

bool throws_config_mentioning(const nlohmann::json& j, const std::string& needle) {
  try {
    sim::config_from_json(j);
  } catch (const ConfigError& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_CASE("config json rejects unknown keys and wrong types") {
  CHECK_NOTHROW(sim::config_from_json(nlohmann::json::object()));
  CHECK(throws_config_mentioning({{"bogus", 1}}, "unknown key 'bogus'"));
  CHECK(throws_config_mentioning({{"graph", {{"p_intra", 0.2}, {"typo", 3}}}},
                                 "unknown key 'typo'"));
  CHECK(throws_config_mentioning({{"workers", "eight"}}, "workers"));
  CHECK(throws_config_mentioning({{"model", {{"hidden_dims", "wide"}}}}, "hidden_dims"));
}

TEST_CASE("config files round-trip through json") {
  namespace fs = std::filesystem;
  auto c = small_cfg();
  auto j = sim::config_to_json(c);
  CHECK(sim::config_to_json(sim::config_from_json(j)) == j);

  auto dir = fs::temp_directory_path() / "dfgl_cfg_test";
  fs::create_directories(dir);
  auto path = (dir / "cfg.json").string();
  {
    std::ofstream os(path);
    os << j.dump(2);
  }
  CHECK(sim::config_to_json(sim::load_config(path)) == j);

  CHECK_THROWS_AS(sim::load_config((dir / "missing.json").string()), ConfigError);
  {
    std::ofstream os(path);
    os << "not json at all";
  }
  CHECK_THROWS_AS(sim::load_config(path), ConfigError);
}

TEST_CASE("config validation rejects out-of-range settings") {
  CHECK_NOTHROW(small_cfg().validate());
  auto c = small_cfg();
  c.workers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_cfg();
  c.graph.test_fraction = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_cfg();
  c.consensus.observability = "sideways";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_cfg();
  c.policy.name = "mesh";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_cfg();
  c.policy.name = "kreg:4";  // degree must stay below the worker count
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_cfg();
  c.net.bandwidth_max = 1.0;  // below bandwidth_min
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("the metrics header is pinned") {
  std::ostringstream os;
  sim::write_metrics_csv({}, os);
  CHECK(os.str() ==
        "round,t_round,cum_time_s,cum_embed_MB,cum_model_MB,mean_loss,mean_acc,"
        "C_exact,C_est,C_max,edges,mean_ratio,reward\n");
}

TEST_CASE("identical configs and seeds reproduce a run exactly") {
  auto cfg = small_cfg();
  auto r1 = sim::run(cfg, false);
  auto r2 = sim::run(cfg, false);
  CHECK(r1.rows.size() == 3);
  CHECK(metrics_of(r1) == metrics_of(r2));
  CHECK(traffic_of(r1) == traffic_of(r2));
  CHECK(r1.final_params == r2.final_params);

  auto other = cfg;
  other.master_seed = 8;
  CHECK(metrics_of(r1) != metrics_of(sim::run(other, false)));
}

TEST_CASE("fixed-policy runs record no controller diagnostics") {
  auto cfg = small_cfg();
  cfg.model.hidden_dims = {6, 6};  // two graph layers, so embeddings may travel
  auto r = sim::run(cfg, false);
  CHECK(r.agent_rows.empty());

  // cross-edge embeddings and two model copies per edge per round
  CHECK(r.ledger.total_embed_bits() > 0);
  int64_t model_bits = 32LL * gcn::param_count({8, 6, 6}, 3);
  int64_t per_round = 2 * 4 * model_bits;  // ring on 4 workers
  CHECK(r.ledger.total_model_bits() == 3 * per_round);
}

TEST_CASE("one complete-graph gossip step averages untrained parameters") {
  auto cfg = small_cfg();
  cfg.workers = 3;
  cfg.train.rounds = 1;
  cfg.train.tau = 0;
  cfg.policy.name = "complete";
  cfg.policy.fixed_ratio = 1.0;
  auto res = sim::run(cfg, false);
  REQUIRE(res.final_params.size() == 3);

  std::vector<std::vector<double>> init;
  for (int i = 0; i < 3; ++i) {
    auto rng = make_rng(cfg.master_seed, "winit", static_cast<uint64_t>(i));
    init.push_back(gcn::flatten(gcn::init_params({8, 8}, 3, rng)));
  }
  size_t n = init[0].size();
  std::vector<double> mean(n, 0.0);
  for (const auto& w : init)
    for (size_t k = 0; k < n; ++k) mean[k] += w[k] / 3.0;

  for (const auto& w : res.final_params) {
    REQUIRE(w.size() == n);
    for (size_t k = 0; k < n; ++k) CHECK(std::abs(w[k] - mean[k]) < 1e-10);
  }
}

TEST_CASE("a reachable accuracy target stops the run early") {
  auto cfg = small_cfg();
  cfg.train.rounds = 5;
  cfg.train.target_accuracy = 0.0;
  auto res = sim::run(cfg, false);
  CHECK(res.early_stopped);
  CHECK(res.rounds_executed == 1);
  CHECK(res.rows.size() == 1);
  CHECK(res.run_json["summary"]["early_stopped"] == true);
}

TEST_CASE("a single worker trains with no network at all") {
  auto cfg = small_cfg();
  cfg.workers = 1;
  cfg.train.rounds = 2;
  auto res = sim::run(cfg, false);
  CHECK(res.rows.size() == 2);
  CHECK(res.rows[0].edges == 0);
  CHECK(res.rows[0].c_exact == 0.0);
  CHECK(res.ledger.total_embed_bits() == 0);
  CHECK(res.ledger.total_model_bits() == 0);
  CHECK(res.privacy_ok);
  CHECK(std::isfinite(res.rows[1].reward));
}

TEST_CASE("the privacy audit tracks the feature-layer rule") {
  auto cfg = small_cfg();
  cfg.workers = 2;
  cfg.model.hidden_dims = {6, 6};
  cfg.policy.name = "complete";
  cfg.policy.fixed_ratio = 1.0;
  cfg.graph.p_inter = 0.15;
  cfg.train.rounds = 2;

  auto res = sim::run(cfg, false);
  CHECK(res.privacy_ok);
  for (const auto& t : res.transfers) CHECK(t.level >= 1);

  cfg.privacy_disabled = true;
  auto open = sim::run(cfg, false);
  CHECK(!open.privacy_ok);
  CHECK(open.run_json["summary"]["privacy_ok"] == false);
}

TEST_CASE("controller-driven runs emit one diagnostics row per round") {
  auto cfg = small_cfg();
  cfg.policy.name = "ddpg";
  cfg.train.rounds = 4;
  auto res = sim::run(cfg, false);
  CHECK(res.rows.size() == 4);
  REQUIRE(res.agent_rows.size() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(res.agent_rows[k].round == k + 1);
    CHECK(res.agent_rows[k].edges == res.rows[k].edges);
    CHECK(res.agent_rows[k].edges >= 3);  // proposals are repaired to connected
    CHECK(std::isfinite(res.agent_rows[k].u));
  }
  CHECK(res.agent_rows[3].noise_sigma < res.agent_rows[0].noise_sigma);

  auto rerun = sim::run(cfg, false);
  CHECK(metrics_of(res) == metrics_of(rerun));
}

TEST_CASE("run summaries expose seeds, config and totals") {
  auto cfg = small_cfg();
  auto res = sim::run(cfg, false);
  CHECK(res.run_json["seeds"]["master_seed"] == 7);
  CHECK(res.run_json["summary"]["rounds_executed"] == 3);
  CHECK(res.run_json["config"]["workers"] == 4);
  CHECK(res.rows[0].round == 1);
  CHECK(res.rows[2].round == 3);
  CHECK(res.rows[2].cum_time_s >= res.rows[1].cum_time_s);
  CHECK(res.sim_time_s == doctest::Approx(res.rows[2].cum_time_s));
  CHECK(res.wall_seconds > 0.0);
}

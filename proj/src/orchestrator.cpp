#include "dfgl/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>

#include "dfgl/common.hpp"
#include "dfgl/consensus.hpp"
#include "dfgl/graphdata.hpp"
#include "dfgl/policies.hpp"

namespace dfgl::sim {
namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& ctx) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(ctx + "." + key + ": " + e.what());
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Worker fan-out with exceptions carried back to the calling thread.
/// Bodies may only touch their own slot plus read-only shared state.
template <typename F>
void run_parallel(int n, F&& body) {
  std::vector<std::exception_ptr> errs(n);
  [[maybe_unused]] const bool par = kern::backend() == kern::Backend::OpenMP;
#pragma omp parallel for schedule(dynamic) if (par)
  for (int i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      errs[i] = std::current_exception();
    }
  }
  for (int i = 0; i < n; ++i)
    if (errs[i]) std::rethrow_exception(errs[i]);
}

// raw state: [b_in | b_out | t_total | embed bits row-major | distances | losses]
std::vector<double> make_state(const net::BandwidthState& bw,
                               const std::vector<double>& t_total,
                               const kern::Matrix& embed_bits, const kern::Matrix& dist,
                               const std::vector<double>& losses) {
  const int m = static_cast<int>(bw.b_in.size());
  std::vector<double> s;
  s.reserve(4 * m + 2 * m * m);
  s.insert(s.end(), bw.b_in.begin(), bw.b_in.end());
  s.insert(s.end(), bw.b_out.begin(), bw.b_out.end());
  s.insert(s.end(), t_total.begin(), t_total.end());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) s.push_back(embed_bits.at(i, j));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) s.push_back(dist.at(i, j));
  s.insert(s.end(), losses.begin(), losses.end());
  return s;
}

}  // namespace

void SimConfig::validate() const {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (!(alpha > 0)) throw ConfigError("alpha must be positive");
  if (graph.source != "sbm" && graph.source != "file")
    throw ConfigError("graph.source must be 'sbm' or 'file'");
  if (graph.source == "sbm") {
    if (graph.nodes < 1) throw ConfigError("graph.nodes must be >= 1");
    if (graph.classes < 1) throw ConfigError("graph.classes must be >= 1");
    if (graph.p_intra < 0 || graph.p_intra > 1 || graph.p_inter < 0 || graph.p_inter > 1)
      throw ConfigError("graph edge probabilities must lie in [0,1]");
    if (graph.feature_dim < 1) throw ConfigError("graph.feature_dim must be >= 1");
  } else if (graph.edge_file.empty() || graph.feature_file.empty()) {
    throw ConfigError("graph.source 'file' needs edge_file and feature_file");
  }
  if (graph.test_fraction < 0 || graph.test_fraction >= 1)
    throw ConfigError("graph.test_fraction must lie in [0,1)");
  if (model.hidden_dims.empty()) throw ConfigError("model.hidden_dims must not be empty");
  for (int d : model.hidden_dims)
    if (d < 1) throw ConfigError("model.hidden_dims entries must be >= 1");
  if (!(model.lr > 0)) throw ConfigError("model.lr must be positive");
  if (model.weight_decay < 0) throw ConfigError("model.weight_decay must be >= 0");
  if (train.rounds < 1) throw ConfigError("train.rounds must be >= 1");
  if (train.tau < 0) throw ConfigError("train.tau must be >= 0");
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(net.bandwidth_min > 0) || net.bandwidth_max < net.bandwidth_min)
    throw ConfigError("net bandwidth range must satisfy 0 < min <= max");
  if (net.seconds_per_row < 0) throw ConfigError("net.seconds_per_row must be >= 0");
  if (net.speed_factors.empty()) throw ConfigError("net.speed_factors must not be empty");
  for (double s : net.speed_factors)
    if (!(s > 0)) throw ConfigError("net.speed_factors entries must be positive");
  if (!(policy.fixed_ratio > 0) || policy.fixed_ratio > 1)
    throw ConfigError("policy.fixed_ratio must lie in (0,1]");
  auto spec = policy::parse_policy(policy.name, policy.fixed_ratio);
  if (spec.kind == policy::Kind::FixedKRegular && spec.k >= workers)
    throw ConfigError("k-regular degree must be below the worker count");
  agent.validate();
  if (consensus.observability != "all" && consensus.observability != "adjacent")
    throw ConfigError("consensus.observability must be 'all' or 'adjacent'");
}

SimConfig config_from_json(const json& j) {
  SimConfig c;
  check_keys(j,
             {"graph", "workers", "alpha", "model", "train", "net", "policy", "agent",
              "consensus", "privacy_disabled", "master_seed", "out_dir"},
             "config");
  if (j.contains("graph")) {
    const json& g = j.at("graph");
    check_keys(g,
               {"source", "nodes", "classes", "p_intra", "p_inter", "feature_dim",
                "feature_margin", "test_fraction", "edge_file", "feature_file"},
               "config.graph");
    read_field(g, "source", c.graph.source, "config.graph");
    read_field(g, "nodes", c.graph.nodes, "config.graph");
    read_field(g, "classes", c.graph.classes, "config.graph");
    read_field(g, "p_intra", c.graph.p_intra, "config.graph");
    read_field(g, "p_inter", c.graph.p_inter, "config.graph");
    read_field(g, "feature_dim", c.graph.feature_dim, "config.graph");
    read_field(g, "feature_margin", c.graph.feature_margin, "config.graph");
    read_field(g, "test_fraction", c.graph.test_fraction, "config.graph");
    read_field(g, "edge_file", c.graph.edge_file, "config.graph");
    read_field(g, "feature_file", c.graph.feature_file, "config.graph");
  }
  read_field(j, "workers", c.workers, "config");
  read_field(j, "alpha", c.alpha, "config");
  if (j.contains("model")) {
    const json& mj = j.at("model");
    check_keys(mj, {"hidden_dims", "lr", "weight_decay"}, "config.model");
    read_field(mj, "hidden_dims", c.model.hidden_dims, "config.model");
    read_field(mj, "lr", c.model.lr, "config.model");
    read_field(mj, "weight_decay", c.model.weight_decay, "config.model");
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, {"rounds", "tau", "batch_size", "target_accuracy"}, "config.train");
    read_field(t, "rounds", c.train.rounds, "config.train");
    read_field(t, "tau", c.train.tau, "config.train");
    read_field(t, "batch_size", c.train.batch_size, "config.train");
    read_field(t, "target_accuracy", c.train.target_accuracy, "config.train");
  }
  if (j.contains("net")) {
    const json& n = j.at("net");
    check_keys(n, {"bandwidth_min", "bandwidth_max", "seconds_per_row", "speed_factors"},
               "config.net");
    read_field(n, "bandwidth_min", c.net.bandwidth_min, "config.net");
    read_field(n, "bandwidth_max", c.net.bandwidth_max, "config.net");
    read_field(n, "seconds_per_row", c.net.seconds_per_row, "config.net");
    read_field(n, "speed_factors", c.net.speed_factors, "config.net");
  }
  if (j.contains("policy")) {
    const json& p = j.at("policy");
    check_keys(p, {"name", "fixed_ratio"}, "config.policy");
    read_field(p, "name", c.policy.name, "config.policy");
    read_field(p, "fixed_ratio", c.policy.fixed_ratio, "config.policy");
  }
  if (j.contains("agent")) {
    const json& a = j.at("agent");
    check_keys(a,
               {"gamma", "xi", "chi", "rho", "phi", "upsilon", "beta", "loss_threshold",
                "noise_sigma", "noise_decay", "inner_updates", "batch_size",
                "buffer_capacity", "hidden", "actor_lr", "critic_lr", "r_min", "optimizer",
                "reward_uses_estimate"},
               "config.agent");
    read_field(a, "gamma", c.agent.gamma, "config.agent");
    read_field(a, "xi", c.agent.xi, "config.agent");
    read_field(a, "chi", c.agent.chi, "config.agent");
    read_field(a, "rho", c.agent.rho, "config.agent");
    read_field(a, "phi", c.agent.phi, "config.agent");
    read_field(a, "upsilon", c.agent.upsilon, "config.agent");
    read_field(a, "beta", c.agent.beta, "config.agent");
    read_field(a, "loss_threshold", c.agent.loss_threshold, "config.agent");
    read_field(a, "noise_sigma", c.agent.noise_sigma, "config.agent");
    read_field(a, "noise_decay", c.agent.noise_decay, "config.agent");
    read_field(a, "inner_updates", c.agent.inner_updates, "config.agent");
    read_field(a, "batch_size", c.agent.batch_size, "config.agent");
    read_field(a, "buffer_capacity", c.agent.buffer_capacity, "config.agent");
    read_field(a, "hidden", c.agent.hidden, "config.agent");
    read_field(a, "actor_lr", c.agent.actor_lr, "config.agent");
    read_field(a, "critic_lr", c.agent.critic_lr, "config.agent");
    read_field(a, "r_min", c.agent.r_min, "config.agent");
    read_field(a, "optimizer", c.agent.optimizer, "config.agent");
    read_field(a, "reward_uses_estimate", c.agent.reward_uses_estimate, "config.agent");
  }
  if (j.contains("consensus")) {
    const json& cj = j.at("consensus");
    check_keys(cj, {"observability"}, "config.consensus");
    read_field(cj, "observability", c.consensus.observability, "config.consensus");
  }
  read_field(j, "privacy_disabled", c.privacy_disabled, "config");
  read_field(j, "master_seed", c.master_seed, "config");
  read_field(j, "out_dir", c.out_dir, "config");
  return c;
}

SimConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const SimConfig& c) {
  json g{{"source", c.graph.source},
         {"nodes", c.graph.nodes},
         {"classes", c.graph.classes},
         {"p_intra", c.graph.p_intra},
         {"p_inter", c.graph.p_inter},
         {"feature_dim", c.graph.feature_dim},
         {"feature_margin", c.graph.feature_margin},
         {"test_fraction", c.graph.test_fraction}};
  if (c.graph.source == "file") {
    g["edge_file"] = c.graph.edge_file;
    g["feature_file"] = c.graph.feature_file;
  }
  return json{
      {"graph", g},
      {"workers", c.workers},
      {"alpha", c.alpha},
      {"model",
       {{"hidden_dims", c.model.hidden_dims},
        {"lr", c.model.lr},
        {"weight_decay", c.model.weight_decay}}},
      {"train",
       {{"rounds", c.train.rounds},
        {"tau", c.train.tau},
        {"batch_size", c.train.batch_size},
        {"target_accuracy", c.train.target_accuracy}}},
      {"net",
       {{"bandwidth_min", c.net.bandwidth_min},
        {"bandwidth_max", c.net.bandwidth_max},
        {"seconds_per_row", c.net.seconds_per_row},
        {"speed_factors", c.net.speed_factors}}},
      {"policy", {{"name", c.policy.name}, {"fixed_ratio", c.policy.fixed_ratio}}},
      {"agent",
       {{"gamma", c.agent.gamma},
        {"xi", c.agent.xi},
        {"chi", c.agent.chi},
        {"rho", c.agent.rho},
        {"phi", c.agent.phi},
        {"upsilon", c.agent.upsilon},
        {"beta", c.agent.beta},
        {"loss_threshold", c.agent.loss_threshold},
        {"noise_sigma", c.agent.noise_sigma},
        {"noise_decay", c.agent.noise_decay},
        {"inner_updates", c.agent.inner_updates},
        {"batch_size", c.agent.batch_size},
        {"buffer_capacity", c.agent.buffer_capacity},
        {"hidden", c.agent.hidden},
        {"actor_lr", c.agent.actor_lr},
        {"critic_lr", c.agent.critic_lr},
        {"r_min", c.agent.r_min},
        {"optimizer", c.agent.optimizer},
        {"reward_uses_estimate", c.agent.reward_uses_estimate}}},
      {"consensus", {{"observability", c.consensus.observability}}},
      {"privacy_disabled", c.privacy_disabled},
      {"master_seed", c.master_seed},
      {"out_dir", c.out_dir},
  };
}

void write_metrics_csv(const std::vector<RoundRow>& rows, std::ostream& os) {
  os << "round,t_round,cum_time_s,cum_embed_MB,cum_model_MB,mean_loss,mean_acc,"
        "C_exact,C_est,C_max,edges,mean_ratio,reward\n";
  for (const auto& r : rows)
    os << r.round << ',' << fmt(r.t_round) << ',' << fmt(r.cum_time_s) << ','
       << fmt(r.cum_embed_mb) << ',' << fmt(r.cum_model_mb) << ',' << fmt(r.mean_loss)
       << ',' << fmt(r.mean_acc) << ',' << fmt(r.c_exact) << ',' << fmt(r.c_est) << ','
       << fmt(r.c_max) << ',' << r.edges << ',' << fmt(r.mean_ratio) << ','
       << fmt(r.reward) << '\n';
}

RunResult run(const SimConfig& cfg, bool write_files) {
  cfg.validate();
  const auto wall0 = std::chrono::steady_clock::now();
  RunResult res;

  const int m = cfg.workers;
  int cur_round = 0;
  std::string step = "setup";
  try {
    step = "graph";
    graph::GlobalGraph g;
    if (cfg.graph.source == "sbm") {
      graph::SbmParams sp;
      sp.num_nodes = cfg.graph.nodes;
      sp.num_classes = cfg.graph.classes;
      sp.p_intra = cfg.graph.p_intra;
      sp.p_inter = cfg.graph.p_inter;
      sp.feature_dim = cfg.graph.feature_dim;
      sp.feature_margin = cfg.graph.feature_margin;
      sp.test_fraction = cfg.graph.test_fraction;
      sp.seed = derive_seed(cfg.master_seed, "graph");
      g = graph::generate_sbm(sp);
    } else {
      g = graph::load_graph(cfg.graph.edge_file, cfg.graph.feature_file,
                            cfg.graph.test_fraction, derive_seed(cfg.master_seed, "graph"));
    }

    step = "partition";
    graph::PartitionSpec part{m, cfg.alpha, derive_seed(cfg.master_seed, "partition")};
    auto owner = graph::dirichlet_partition(g, part);
    auto subs = graph::build_subgraphs(g, owner, m);

    step = "worker-init";
    std::vector<int> dims{g.feature_dim};
    for (int d : cfg.model.hidden_dims) dims.push_back(d);
    const int L = static_cast<int>(cfg.model.hidden_dims.size());
    const int classes = g.num_classes;
    std::vector<worker::Worker> ws(m);
    for (int i = 0; i < m; ++i) {
      ws[i].id = i;
      ws[i].sub = std::move(subs[i]);
      auto rng = make_rng(cfg.master_seed, "winit", static_cast<uint64_t>(i));
      ws[i].params = gcn::init_params(dims, classes, rng);
      ws[i].opt = gcn::AdamState(gcn::param_count(dims, classes));
      ws[i].rng = make_rng(cfg.master_seed, "wtrain", static_cast<uint64_t>(i));
    }
    const int64_t model_bits = gcn::param_size_bits(ws[0].params);

    step = "setup";
    // full-sampling embedding volume per ordered pair, for the time model only
    kern::Matrix nominal(m, m);
    nominal.set_zero();
    {
      double hidden_sum = 0.0;
      for (int l = 1; l <= L - 1; ++l) hidden_sum += dims[l];
      for (int i = 0; i < m; ++i) {
        std::vector<std::set<int>> frontier(m);
        for (const auto& st : ws[i].sub.external_stubs)
          frontier[st.remote_worker].insert(st.remote_node);
        for (int j = 0; j < m; ++j)
          nominal.at(i, j) = cfg.train.tau *
                             static_cast<double>(frontier[j].size()) * hidden_sum * 32.0;
      }
    }
    std::vector<double> speed(m);
    for (int i = 0; i < m; ++i)
      speed[i] = cfg.net.speed_factors[i % cfg.net.speed_factors.size()];

    const auto pol = policy::parse_policy(cfg.policy.name, cfg.policy.fixed_ratio);
    const bool use_ddpg = pol.kind == policy::Kind::Ddpg;
    const auto obs = cfg.consensus.observability == "all"
                         ? consensus::Observability::AllPairs
                         : consensus::Observability::AdjacentOnly;

    // consensus readings carried into the next round's decision
    std::vector<std::vector<double>> flats(m);
    for (int i = 0; i < m; ++i) flats[i] = gcn::flatten(ws[i].params);
    auto stats = consensus::exact_consensus(flats);
    kern::Matrix view = consensus::pairwise_distances(flats);
    std::vector<double> per_worker = stats.per_worker;
    double mean_dist = stats.mean;

    std::optional<ctl::Agent> agent;
    ctl::Action action;
    std::vector<double> state;
    if (use_ddpg) {
      step = "agent-init";
      agent.emplace(m, cfg.agent, cfg.master_seed);
      // loss probe on a seeded local batch, nothing billed or transferred
      std::vector<double> losses0(m, 0.0);
      for (int i = 0; i < m; ++i) {
        if (ws[i].sub.train_nodes.empty()) continue;
        auto rng = make_rng(cfg.master_seed, "init_loss", static_cast<uint64_t>(i));
        auto batch = worker::sample_without_replacement(
            ws[i].sub.train_nodes,
            std::min<int>(cfg.train.batch_size,
                          static_cast<int>(ws[i].sub.train_nodes.size())),
            rng);
        auto plan = worker::graph_sampling(batch, 1.0, L, {}, ws[i].sub, rng);
        worker::FetchFn deny = [](int, int, const std::vector<int>&) -> kern::Matrix {
          throw ProtocolError("loss probe must stay local");
        };
        auto fplan = worker::build_forward_plan(plan, ws[i].sub, dims, deny, nullptr);
        kern::Matrix h0 = worker::gather_h0(plan, ws[i].sub);
        auto labels = worker::batch_labels(plan, ws[i].sub);
        gcn::ForwardTrace tr;
        gcn::forward(ws[i].params, fplan, h0, tr);
        losses0[i] = gcn::softmax_xent(tr.logits, labels, nullptr);
      }
      auto bw0 = net::sample_bandwidth(m, cfg.net.bandwidth_min, cfg.net.bandwidth_max,
                                       cfg.master_seed, 0);
      kern::Matrix zero_bits(m, m);
      zero_bits.set_zero();
      state = make_state(bw0, std::vector<double>(m, 0.0), zero_bits, view, losses0);
      agent->observe_state(state);
    }

    const worker::TrainSettings ts{cfg.train.tau, cfg.train.batch_size,
                                   gcn::AdamConfig{cfg.model.lr, 0.9, 0.999, 1e-8},
                                   cfg.model.weight_decay, cfg.privacy_disabled};

    double cum_time = 0.0, c_max = 0.0, t_bar = 0.0;
    bool c_max_seeded = false, t_bar_seeded = false;
    int isolated_events = 0;

    for (int k = 1; k <= cfg.train.rounds; ++k) {
      cur_round = k;
      step = "configuration";
      policy::Proposal prop;
      if (use_ddpg) {
        action = agent->act(state, true);
        prop.topology = action.topology;
        prop.ratios = action.ratios;
      } else {
        policy::ProposalInputs in;
        in.m = m;
        in.r_min = cfg.agent.r_min;
        in.master_seed = cfg.master_seed;
        in.pairwise = &view;
        in.per_worker_dist = &per_worker;
        in.mean_dist = mean_dist;
        prop = policy::propose(pol, k, in);
      }
      policy::validate_proposal(prop, m, cfg.agent.r_min);
      double mean_ratio = 0.0;
      for (int i = 0; i < m; ++i) {
        ws[i].ratio = prop.ratios[i];
        ws[i].topo_neighbors = prop.topology.neighbors(i);
        mean_ratio += prop.ratios[i];
      }
      mean_ratio /= m;

      step = "bandwidth";
      auto bw = net::sample_bandwidth(m, cfg.net.bandwidth_min, cfg.net.bandwidth_max,
                                      cfg.master_seed, k);

      step = "serve-tables";
      std::vector<worker::ServeTable> tables(m);
      run_parallel(m, [&](int i) {
        tables[i] = worker::build_serve_table(ws[i].sub, ws[i].params);
      });

      step = "local-training";
      std::vector<worker::RoundReport> reports(m);
      std::vector<std::vector<worker::TransferRecord>> recs(m);
      run_parallel(m, [&](int i) {
        worker::FetchFn fetch = [&, i](int server, int level,
                                       const std::vector<int>& nodes) {
          if (server == i) throw ProtocolError("worker fetched from itself");
          if (!prop.topology.has_edge(i, server))
            throw ProtocolError("fetch between non-neighbors " + std::to_string(i) +
                                " and " + std::to_string(server));
          if (level == 0 && !cfg.privacy_disabled)
            throw ProtocolError("raw feature rows requested across workers");
          int64_t bits = 0;
          auto rows = worker::serve_nodes(ws[server].sub, tables[server], level, nodes, &bits);
          recs[i].push_back(
              {k, server, i, level, static_cast<int64_t>(nodes.size()), bits});
          return rows;
        };
        reports[i] = worker::run_local_training(ws[i], ts, fetch);
      });

      step = "traffic-accounting";
      for (int i = 0; i < m; ++i) {
        worker::TransferMap server_side;
        std::map<int, int64_t> by_src;
        for (const auto& rec : recs[i]) {
          auto& st = server_side[{rec.src, rec.level}];
          st.count += rec.count;
          st.bits += rec.bits;
          by_src[rec.src] += rec.bits;
        }
        const auto& client_side = reports[i].received;
        bool match = server_side.size() == client_side.size();
        if (match)
          for (const auto& [key, st] : server_side) {
            auto it = client_side.find(key);
            if (it == client_side.end() || it->second.count != st.count ||
                it->second.bits != st.bits) {
              match = false;
              break;
            }
          }
        if (!match)
          throw ProtocolError("transfer conservation mismatch at worker " +
                              std::to_string(i));
        for (const auto& [src, bits] : by_src) res.ledger.add_embed(k, src, i, bits);
        res.transfers.insert(res.transfers.end(), recs[i].begin(), recs[i].end());
      }

      step = "consensus";
      for (int i = 0; i < m; ++i) flats[i] = gcn::flatten(ws[i].params);
      stats = consensus::exact_consensus(flats);
      auto pw = consensus::pairwise_distances(flats);
      view = consensus::estimate_distances(pw, prop.topology, obs);
      const double c_est = consensus::estimated_disagreement(view, prop.topology);
      per_worker = stats.per_worker;
      mean_dist = stats.mean;

      step = "model-exchange";
      for (const auto& [a, b] : prop.topology.edge_list()) {
        res.ledger.add_model(k, a, b, model_bits);
        res.ledger.add_model(k, b, a, model_bits);
      }

      step = "aggregation";
      if (m >= 2) {
        auto mix = consensus::compute_mixing(prop.topology);
        consensus::aggregate(flats, prop.topology, mix.alpha);
        for (int i = 0; i < m; ++i) ws[i].params = gcn::unflatten(flats[i], dims, classes);
      }

      step = "timing";
      std::vector<double> t_cp(m), t_com(m);
      for (int i = 0; i < m; ++i) {
        t_cp[i] =
            net::compute_time(reports[i].aggregated_rows, cfg.net.seconds_per_row, speed[i]);
        auto ct = net::comm_time(i, prop.topology, ws[i].ratio, nominal,
                                 static_cast<double>(model_bits), bw);
        t_com[i] = ct.seconds;
        if (ct.isolated) ++isolated_events;
      }
      const auto timing = net::assemble_timing(t_cp, t_com);
      cum_time += timing.t_round;

      step = "evaluation";
      run_parallel(m, [&](int i) {
        tables[i] = worker::build_serve_table(ws[i].sub, ws[i].params);
      });
      EvalSummary ev;
      ev.per_worker.assign(m, std::numeric_limits<double>::quiet_NaN());
      std::vector<worker::EvalResult> evr(m);
      run_parallel(m, [&](int i) {
        worker::FetchFn fetch = [&, i](int server, int level,
                                       const std::vector<int>& nodes) {
          if (!prop.topology.has_edge(i, server))
            throw ProtocolError("fetch between non-neighbors");
          if (level == 0 && !cfg.privacy_disabled)
            throw ProtocolError("raw feature rows requested across workers");
          int64_t bits = 0;  // evaluation traffic is never billed
          return worker::serve_nodes(ws[server].sub, tables[server], level, nodes, &bits);
        };
        evr[i] = worker::evaluate_worker(ws[i], fetch);
      });
      double correct = 0.0, total = 0.0;
      for (int i = 0; i < m; ++i)
        if (evr[i].defined) {
          ev.per_worker[i] = evr[i].accuracy;
          correct += evr[i].accuracy * evr[i].count;
          total += evr[i].count;
          ++ev.evaluated;
        }
      ev.mean_accuracy = total > 0 ? correct / total : 0.0;

      step = "reward";
      std::vector<double> grad_norms(m, 0.0), losses(m, 0.0);
      double loss_sum = 0.0;
      int trained = 0;
      for (int i = 0; i < m; ++i)
        if (reports[i].trained) {
          grad_norms[i] = reports[i].mean_grad_norm;
          losses[i] = reports[i].final_loss;
          loss_sum += reports[i].final_loss;
          ++trained;
        }
      const double mean_loss = trained > 0 ? loss_sum / trained : 0.0;
      c_max = consensus::update_cmax(c_max, grad_norms, cfg.agent.beta, !c_max_seeded);
      c_max_seeded = true;
      const double t_bar_prev = t_bar_seeded ? t_bar : timing.t_round;
      const double c_reward = cfg.agent.reward_uses_estimate ? c_est : stats.mean;
      double u;
      if (t_bar_prev > 0) {
        u = ctl::reward(timing.t_round, t_bar_prev, c_reward, c_max, mean_loss, cfg.agent);
      } else {  // zero-cost round, the time ratio is undefined
        u = cfg.agent.rho * (c_max - c_reward) +
            std::pow(cfg.agent.phi, cfg.agent.loss_threshold - mean_loss);
      }
      t_bar = ctl::moving_avg_time(timing.t_round, t_bar_prev, cfg.agent.upsilon);
      t_bar_seeded = true;

      step = "controller";
      if (use_ddpg) {
        kern::Matrix ebits(m, m);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j)
            ebits.at(i, j) = static_cast<double>(res.ledger.link_embed_bits(k, i, j));
        auto s_next = make_state(bw, timing.t_total, ebits, view, losses);
        agent->observe_state(s_next);
        agent->store_transition(state, action.raw, u, s_next);
        double dsum = 0.0, qsum = 0.0;
        int applied = 0;
        for (int n = 0; n < cfg.agent.inner_updates; ++n) {
          auto d = agent->train_step();
          if (d.batch > 0) {
            dsum += d.mean_delta;
            qsum += d.mean_q;
            ++applied;
          }
        }
        agent->finish_round();
        state = std::move(s_next);
        res.agent_rows.push_back({k, u, applied ? dsum / applied : 0.0,
                                  applied ? qsum / applied : 0.0,
                                  prop.topology.num_edges(), mean_ratio,
                                  agent->noise_scale()});
      }

      step = "metrics";
      RoundRow row;
      row.round = k;
      row.t_round = timing.t_round;
      row.cum_time_s = cum_time;
      row.cum_embed_mb = res.ledger.total_embed_bits() / net::kBitsPerMB;
      row.cum_model_mb = res.ledger.total_model_bits() / net::kBitsPerMB;
      row.mean_loss = mean_loss;
      row.mean_acc = ev.mean_accuracy;
      row.c_exact = stats.mean;
      row.c_est = c_est;
      row.c_max = c_max;
      row.edges = prop.topology.num_edges();
      row.mean_ratio = mean_ratio;
      row.reward = u;
      res.rows.push_back(row);

      if (cfg.train.target_accuracy >= 0 && ev.evaluated > 0 &&
          ev.mean_accuracy >= cfg.train.target_accuracy) {
        res.early_stopped = true;
        break;
      }
    }

    cur_round = 0;
    step = "finalize";
    for (const auto& w : ws) res.final_params.push_back(gcn::flatten(w.params));
    res.rounds_executed = static_cast<int>(res.rows.size());
    res.final_accuracy = res.rows.empty() ? 0.0 : res.rows.back().mean_acc;
    res.privacy_ok = worker::privacy_audit(res.transfers);
    res.sim_time_s = cum_time;
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();

    res.run_json = json{
        {"summary",
         {{"rounds_executed", res.rounds_executed},
          {"early_stopped", res.early_stopped},
          {"final_accuracy", res.final_accuracy},
          {"sim_time_s", res.sim_time_s},
          {"total_embed_MB", res.ledger.total_embed_bits() / net::kBitsPerMB},
          {"total_model_MB", res.ledger.total_model_bits() / net::kBitsPerMB},
          {"privacy_ok", res.privacy_ok},
          {"isolated_events", isolated_events},
          {"wall_seconds", res.wall_seconds}}},
        {"config", config_to_json(cfg)},
        {"seeds",
         {{"master_seed", cfg.master_seed},
          {"graph", derive_seed(cfg.master_seed, "graph")},
          {"partition", derive_seed(cfg.master_seed, "partition")},
          {"worker_init_base", derive_seed(cfg.master_seed, "winit", 0)},
          {"worker_train_base", derive_seed(cfg.master_seed, "wtrain", 0)},
          {"bandwidth_round1", derive_seed(cfg.master_seed, "bandwidth", 1)}}},
    };

    if (write_files) {
      step = "write-outputs";
      namespace fs = std::filesystem;
      fs::create_directories(cfg.out_dir);
      {
        std::ofstream os(fs::path(cfg.out_dir) / "metrics.csv");
        write_metrics_csv(res.rows, os);
      }
      {
        std::ofstream os(fs::path(cfg.out_dir) / "traffic.csv");
        res.ledger.export_csv(os);
      }
      {
        std::ofstream os(fs::path(cfg.out_dir) / "run.json");
        os << res.run_json.dump(2) << '\n';
      }
      if (use_ddpg) {
        std::ofstream os(fs::path(cfg.out_dir) / "agent.csv");
        os << "round,u,delta_mean,q_mean,edges,mean_ratio,noise_sigma\n";
        for (const auto& a : res.agent_rows)
          os << a.round << ',' << fmt(a.u) << ',' << fmt(a.delta_mean) << ','
             << fmt(a.q_mean) << ',' << a.edges << ',' << fmt(a.mean_ratio) << ','
             << fmt(a.noise_sigma) << '\n';
        std::ofstream oj(fs::path(cfg.out_dir) / "agent.json");
        oj << agent->checkpoint().dump(2) << '\n';
      }
    }
  } catch (const ConfigError& e) {
    throw ConfigError("round " + std::to_string(cur_round) + " step '" + step +
                      "': " + e.what());
  } catch (const std::exception& e) {
    throw ProtocolError("round " + std::to_string(cur_round) + " step '" + step +
                        "': " + e.what());
  }
  return res;
}

}  // namespace dfgl::sim

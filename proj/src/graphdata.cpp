#include "dfgl/graphdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dfgl/common.hpp"

namespace dfgl::graph {

std::vector<std::vector<int>> GlobalGraph::adjacency() const {
  std::vector<std::vector<int>> adj(num_nodes);
  for (auto [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& nb : adj) std::sort(nb.begin(), nb.end());
  return adj;
}

int Subgraph::owner_of(int global_id) const {
  if (is_local(global_id)) return worker_id;
  auto it = remote_owner_.find(global_id);
  if (it == remote_owner_.end())
    throw std::out_of_range("owner_of: unknown node " + std::to_string(global_id));
  return it->second;
}

GlobalGraph generate_sbm(const SbmParams& p) {
  if (p.num_nodes <= 0 || p.num_classes <= 0 || p.feature_dim <= 0)
    throw ConfigError("sbm: sizes must be positive");
  if (p.p_intra < 0 || p.p_intra > 1 || p.p_inter < 0 || p.p_inter > 1)
    throw ConfigError("sbm: edge probabilities must lie in [0,1]");
  if (p.test_fraction < 0 || p.test_fraction >= 1)
    throw ConfigError("sbm: test_fraction must lie in [0,1)");

  GlobalGraph g;
  g.num_nodes = p.num_nodes;
  g.num_classes = p.num_classes;
  g.feature_dim = p.feature_dim;

  // Contiguous blocks; first (n mod c) blocks get one extra node.
  g.labels.resize(p.num_nodes);
  {
    int base = p.num_nodes / p.num_classes, extra = p.num_nodes % p.num_classes;
    int node = 0;
    for (int c = 0; c < p.num_classes; ++c) {
      int sz = base + (c < extra ? 1 : 0);
      for (int k = 0; k < sz; ++k) g.labels[node++] = c;
    }
  }

  auto edge_rng = make_rng(p.seed, "sbm.edges");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int u = 0; u < p.num_nodes; ++u)
    for (int v = u + 1; v < p.num_nodes; ++v) {
      double prob = (g.labels[u] == g.labels[v]) ? p.p_intra : p.p_inter;
      if (unif(edge_rng) < prob) g.edges.emplace_back(u, v);
    }

  auto feat_rng = make_rng(p.seed, "sbm.features");
  std::normal_distribution<double> gauss(0.0, 1.0);
  g.features = kern::Matrix(p.num_nodes, p.feature_dim);
  for (int u = 0; u < p.num_nodes; ++u) {
    double* row = g.features.row(u);
    for (int j = 0; j < p.feature_dim; ++j) row[j] = gauss(feat_rng);
    row[g.labels[u] % p.feature_dim] += p.feature_margin;
  }

  // Uniform global test split, remainder trains.
  auto mask_rng = make_rng(p.seed, "sbm.mask");
  std::vector<int> order(p.num_nodes);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), mask_rng);
  int n_test = static_cast<int>(std::lround(p.test_fraction * p.num_nodes));
  g.train_mask.assign(p.num_nodes, true);
  g.test_mask.assign(p.num_nodes, false);
  for (int k = 0; k < n_test; ++k) {
    g.test_mask[order[k]] = true;
    g.train_mask[order[k]] = false;
  }
  return g;
}

std::vector<int> dirichlet_partition(const GlobalGraph& g, const PartitionSpec& spec) {
  if (spec.num_workers <= 0) throw ConfigError("partition: num_workers must be positive");
  if (!(spec.alpha > 0)) throw ConfigError("partition: alpha must be positive");

  auto rng = make_rng(spec.seed, "partition");
  std::gamma_distribution<double> gamma(spec.alpha, 1.0);
  std::vector<int> owner(g.num_nodes, 0);

  // Per class: draw worker proportions ~ Dir(alpha), hand out that class's
  // nodes in shuffled order by largest-remainder quotas.
  for (int c = 0; c < g.num_classes; ++c) {
    std::vector<int> members;
    for (int u = 0; u < g.num_nodes; ++u)
      if (g.labels[u] == c) members.push_back(u);
    if (members.empty()) continue;
    std::shuffle(members.begin(), members.end(), rng);

    std::vector<double> w(spec.num_workers);
    double tot = 0.0;
    for (double& x : w) {
      x = gamma(rng);
      tot += x;
    }
    if (tot <= 0) {
      w.assign(spec.num_workers, 1.0);
      tot = spec.num_workers;
    }

    int n = static_cast<int>(members.size());
    std::vector<int> quota(spec.num_workers);
    std::vector<std::pair<double, int>> frac;  // (-remainder, worker)
    int assigned = 0;
    for (int i = 0; i < spec.num_workers; ++i) {
      double exact = n * w[i] / tot;
      quota[i] = static_cast<int>(std::floor(exact));
      assigned += quota[i];
      frac.emplace_back(-(exact - quota[i]), i);
    }
    std::sort(frac.begin(), frac.end());
    for (int k = 0; k < n - assigned; ++k) quota[frac[k].second]++;

    int pos = 0;
    for (int i = 0; i < spec.num_workers; ++i)
      for (int k = 0; k < quota[i]; ++k) owner[members[pos++]] = i;
  }
  return owner;
}

std::vector<Subgraph> build_subgraphs(const GlobalGraph& g, const std::vector<int>& owner,
                                      int num_workers) {
  if (static_cast<int>(owner.size()) != g.num_nodes)
    throw std::invalid_argument("build_subgraphs: owner size mismatch");
  int m = owner.empty() ? 0 : *std::max_element(owner.begin(), owner.end()) + 1;
  m = std::max(m, num_workers);
  std::vector<Subgraph> subs(m);
  for (int i = 0; i < m; ++i) {
    subs[i].worker_id = i;
    subs[i].num_classes = g.num_classes;
  }
  for (int u = 0; u < g.num_nodes; ++u) subs[owner[u]].local_nodes.push_back(u);

  for (auto& s : subs) {
    // local_nodes ascend already (loop order), keep the invariant explicit
    std::sort(s.local_nodes.begin(), s.local_nodes.end());
    s.local_index.reserve(s.local_nodes.size());
    for (int r = 0; r < static_cast<int>(s.local_nodes.size()); ++r)
      s.local_index[s.local_nodes[r]] = r;
    s.features = kern::Matrix(static_cast<int>(s.local_nodes.size()), g.feature_dim);
    s.labels.resize(s.local_nodes.size());
    s.neighbors.resize(s.local_nodes.size());
    for (int r = 0; r < static_cast<int>(s.local_nodes.size()); ++r) {
      int u = s.local_nodes[r];
      const double* src = g.features.row(u);
      std::copy(src, src + g.feature_dim, s.features.row(r));
      s.labels[r] = g.labels[u];
      if (g.train_mask[u]) s.train_nodes.push_back(u);
      if (g.test_mask[u]) s.test_nodes.push_back(u);
    }
  }

  for (auto [u, v] : g.edges) {
    int ou = owner[u], ov = owner[v];
    if (ou == ov) {
      subs[ou].internal_edges.emplace_back(u, v);
    } else {
      subs[ou].external_stubs.push_back({u, v, ov});
      subs[ov].external_stubs.push_back({v, u, ou});
      subs[ou].remote_owner_[v] = ov;
      subs[ov].remote_owner_[u] = ou;
    }
    subs[ou].neighbors[subs[ou].local_index.at(u)].push_back(v);
    subs[ov].neighbors[subs[ov].local_index.at(v)].push_back(u);
  }
  for (auto& s : subs)
    for (auto& nb : s.neighbors) std::sort(nb.begin(), nb.end());
  return subs;
}

SkewReport label_skew(const std::vector<Subgraph>& subs, const GlobalGraph& g) {
  std::vector<double> global_dist(g.num_classes, 0.0);
  for (int u = 0; u < g.num_nodes; ++u) global_dist[g.labels[u]] += 1.0;
  for (double& x : global_dist) x /= g.num_nodes;

  SkewReport rep;
  for (const auto& s : subs) {
    std::vector<double> d(g.num_classes, 0.0);
    for (int lab : s.labels) d[lab] += 1.0;
    double n = s.labels.empty() ? 1.0 : static_cast<double>(s.labels.size());
    double tv = 0.0;
    for (int c = 0; c < g.num_classes; ++c) tv += std::abs(d[c] / n - global_dist[c]);
    rep.per_worker_tv.push_back(0.5 * tv);
  }
  rep.mean_tv = rep.per_worker_tv.empty()
                    ? 0.0
                    : std::accumulate(rep.per_worker_tv.begin(), rep.per_worker_tv.end(), 0.0) /
                          rep.per_worker_tv.size();
  return rep;
}

GlobalGraph load_graph(const std::string& edge_path, const std::string& feature_path,
                       double test_fraction, uint64_t seed) {
  std::ifstream fin(feature_path);
  if (!fin) throw ConfigError("cannot open feature file: " + feature_path);
  std::string line;
  if (!std::getline(fin, line)) throw ConfigError("feature file empty: " + feature_path);

  // Header row fixes the feature dimension.
  int ncols = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
  if (ncols < 3) throw ConfigError("feature header needs node_id,label,f0,...");
  int d0 = ncols - 2;

  struct Row {
    int id, label;
    std::vector<double> f;
  };
  std::vector<Row> rows;
  int lineno = 1;
  while (std::getline(fin, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Row r;
    if (!std::getline(ss, cell, ',')) continue;
    r.id = std::stoi(cell);
    if (!std::getline(ss, cell, ','))
      throw ConfigError("feature row " + std::to_string(lineno) + ": missing label");
    r.label = std::stoi(cell);
    while (std::getline(ss, cell, ',')) r.f.push_back(std::stod(cell));
    if (static_cast<int>(r.f.size()) != d0)
      throw ConfigError("feature row " + std::to_string(lineno) + ": expected " +
                        std::to_string(d0) + " features, got " + std::to_string(r.f.size()));
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ConfigError("feature file has no data rows: " + feature_path);

  int n = 0, nclasses = 0;
  for (const auto& r : rows) {
    if (r.id < 0) throw ConfigError("negative node id in " + feature_path);
    if (r.label < 0) throw ConfigError("negative label in " + feature_path);
    n = std::max(n, r.id + 1);
    nclasses = std::max(nclasses, r.label + 1);
  }
  if (static_cast<int>(rows.size()) != n)
    throw ConfigError("feature file must cover node ids 0.." + std::to_string(n - 1) +
                      " exactly once");

  GlobalGraph g;
  g.num_nodes = n;
  g.num_classes = nclasses;
  g.feature_dim = d0;
  g.features = kern::Matrix(n, d0);
  g.labels.assign(n, -1);
  for (const auto& r : rows) {
    if (g.labels[r.id] != -1)
      throw ConfigError("duplicate node id " + std::to_string(r.id) + " in " + feature_path);
    g.labels[r.id] = r.label;
    std::copy(r.f.begin(), r.f.end(), g.features.row(r.id));
  }

  std::ifstream ein(edge_path);
  if (!ein) throw ConfigError("cannot open edge file: " + edge_path);
  std::vector<std::pair<int, int>> edges;
  lineno = 0;
  while (std::getline(ein, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    int u, v;
    if (!(ss >> u >> v))
      throw ConfigError("edge file " + edge_path + " line " + std::to_string(lineno) +
                        ": expected 'u v'");
    if (u < 0 || v < 0 || u >= n || v >= n)
      throw ConfigError("edge file " + edge_path + " line " + std::to_string(lineno) +
                        ": node id out of range");
    if (u == v) continue;  // drop self-loops
    if (u > v) std::swap(u, v);
    edges.emplace_back(u, v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  g.edges = std::move(edges);

  if (test_fraction < 0 || test_fraction >= 1)
    throw ConfigError("test_fraction must lie in [0,1)");
  auto mask_rng = make_rng(seed, "load.mask");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), mask_rng);
  int n_test = static_cast<int>(std::lround(test_fraction * n));
  g.train_mask.assign(n, true);
  g.test_mask.assign(n, false);
  for (int k = 0; k < n_test; ++k) {
    g.test_mask[order[k]] = true;
    g.train_mask[order[k]] = false;
  }
  return g;
}

}  // namespace dfgl::graph

#include "dfgl/policies.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "dfgl/common.hpp"

namespace dfgl::policy {

PolicySpec parse_policy(const std::string& name, double ratio) {
  PolicySpec spec;
  spec.ratio = ratio;
  auto colon = name.find(':');
  std::string head = name.substr(0, colon);
  std::string arg = colon == std::string::npos ? "" : name.substr(colon + 1);

  if (head == "ddpg") {
    spec.kind = Kind::Ddpg;
  } else if (head == "ring" || head == "fixed_ring") {
    spec.kind = Kind::FixedRing;
  } else if (head == "complete" || head == "fixed_complete") {
    spec.kind = Kind::FixedComplete;
  } else if (head == "kreg" || head == "fixed_kregular") {
    spec.kind = Kind::FixedKRegular;
    if (arg.empty()) throw ConfigError("policy " + head + " needs :K");
    spec.k = std::stoi(arg);
  } else if (head == "random" || head == "random_topology") {
    spec.kind = Kind::RandomTopology;
    if (!arg.empty()) spec.p = std::stod(arg);
    if (spec.p < 0 || spec.p > 1) throw ConfigError("random topology: p must be in [0,1]");
  } else if (head == "dar" || head == "distribution_aware_ring") {
    spec.kind = Kind::DistributionAwareRing;
  } else {
    throw ConfigError("unknown policy: " + name);
  }
  if (spec.kind != Kind::Ddpg && (ratio <= 0 || ratio > 1))
    throw ConfigError("fixed policy ratio must be in (0,1]");
  return spec;
}

std::string policy_name(const PolicySpec& spec) {
  switch (spec.kind) {
    case Kind::Ddpg: return "ddpg";
    case Kind::FixedRing: return "fixed_ring";
    case Kind::FixedKRegular: return "fixed_kregular:" + std::to_string(spec.k);
    case Kind::FixedComplete: return "fixed_complete";
    case Kind::RandomTopology: return "random_topology";
    case Kind::DistributionAwareRing: return "distribution_aware_ring";
  }
  return "?";
}

Topology ring_topology(int m) {
  Topology t(m);
  if (m == 2) {
    t.add_edge(0, 1);
    return t;
  }
  if (m < 3) return t;
  for (int i = 0; i < m; ++i) t.add_edge(i, (i + 1) % m);
  return t;
}

Topology kregular_topology(int m, int k) {
  if (k < 1) throw ConfigError("k-regular: k must be >= 1");
  if (k >= m) throw ConfigError("k-regular: k must be < m");
  if ((k % 2 != 0) && (m % 2 != 0))
    throw ConfigError("k-regular: odd k needs even m");
  Topology t(m);
  for (int j = 1; j <= k / 2; ++j)
    for (int i = 0; i < m; ++i) t.add_edge(i, (i + j) % m);
  if (k % 2 != 0)
    for (int i = 0; i < m / 2; ++i) t.add_edge(i, i + m / 2);
  return t;
}

Topology complete_topology(int m) {
  Topology t(m);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) t.add_edge(i, j);
  return t;
}

namespace {

Topology random_connected(int m, double p, uint64_t master_seed) {
  auto rng = make_rng(master_seed, "policy.random");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Topology t(m);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if (unif(rng) < p) t.add_edge(i, j);
  // join components along lexicographically first absent bridging edges
  while (!t.connected()) {
    std::vector<char> seen(m, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v : t.neighbors(u))
        if (!seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
    }
    int outside = 0;
    while (seen[outside]) ++outside;
    t.add_edge(0, outside);
  }
  return t;
}

Topology dar_ring(int m, const kern::Matrix& pairwise) {
  Topology t(m);
  if (m == 2) {
    t.add_edge(0, 1);
    return t;
  }
  if (m < 3) return t;
  // greedy chain: always hop to the farthest unvisited worker
  std::vector<char> used(m, 0);
  std::vector<int> order{0};
  used[0] = 1;
  while (static_cast<int>(order.size()) < m) {
    int cur = order.back(), best = -1;
    for (int j = 0; j < m; ++j) {
      if (used[j]) continue;
      if (best == -1 || pairwise.at(cur, j) > pairwise.at(cur, best)) best = j;
    }
    used[best] = 1;
    order.push_back(best);
  }
  for (int i = 0; i < m; ++i) t.add_edge(order[i], order[(i + 1) % m]);
  return t;
}

}  // namespace

Proposal propose(const PolicySpec& spec, int /*round*/, const ProposalInputs& in) {
  Proposal prop;
  int m = in.m;
  std::vector<double> ratios(m, std::clamp(spec.ratio, in.r_min, 1.0));
  switch (spec.kind) {
    case Kind::Ddpg:
      throw std::logic_error("propose: ddpg actions come from the controller");
    case Kind::FixedRing:
      prop.topology = ring_topology(m);
      break;
    case Kind::FixedKRegular:
      prop.topology = kregular_topology(m, spec.k);
      break;
    case Kind::FixedComplete:
      prop.topology = complete_topology(m);
      break;
    case Kind::RandomTopology:
      prop.topology = random_connected(m, spec.p, in.master_seed);
      break;
    case Kind::DistributionAwareRing: {
      if (!in.pairwise || !in.per_worker_dist)
        throw std::invalid_argument("distribution_aware_ring needs consensus stats");
      prop.topology = dar_ring(m, *in.pairwise);
      for (int i = 0; i < m; ++i) {
        double r = in.mean_dist > 0 ? 0.5 * (*in.per_worker_dist)[i] / in.mean_dist : 0.5;
        ratios[i] = std::clamp(r, in.r_min, 1.0);
      }
      break;
    }
  }
  prop.ratios = std::move(ratios);
  return prop;
}

void validate_proposal(const Proposal& prop, int m, double r_min) {
  if (prop.topology.size() != m) throw std::logic_error("proposal: wrong topology size");
  if (m >= 2 && !prop.topology.connected())
    throw std::logic_error("proposal: disconnected topology");
  if (static_cast<int>(prop.ratios.size()) != m)
    throw std::logic_error("proposal: wrong ratio count");
  for (double r : prop.ratios)
    if (r < r_min - 1e-12 || r > 1.0 + 1e-12)
      throw std::logic_error("proposal: ratio outside [r_min, 1]");
}

}  // namespace dfgl::policy

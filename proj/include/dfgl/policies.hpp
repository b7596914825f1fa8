#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfgl/kernels.hpp"
#include "dfgl/topology.hpp"

namespace dfgl::policy {

enum class Kind {
  Ddpg,
  FixedRing,
  FixedKRegular,
  FixedComplete,
  RandomTopology,
  DistributionAwareRing,
};

struct PolicySpec {
  Kind kind = Kind::Ddpg;
  int k = 2;           // k-regular degree
  double p = 0.3;      // random-topology edge probability
  double ratio = 1.0;  // fixed sampling ratio
};

/// Accepted names: ddpg, ring|fixed_ring, kreg:K|fixed_kregular:K,
/// complete|fixed_complete, random:P|random_topology:P,
/// dar|distribution_aware_ring. `ratio` applies to the fixed policies.
PolicySpec parse_policy(const std::string& name, double ratio);
std::string policy_name(const PolicySpec& spec);

Topology ring_topology(int m);
Topology kregular_topology(int m, int k);  // circulant; throws if k >= m or infeasible
Topology complete_topology(int m);

struct Proposal {
  Topology topology;
  std::vector<double> ratios;
};

struct ProposalInputs {
  int m = 0;
  double r_min = 0.05;
  uint64_t master_seed = 0;
  // previous round's consensus readings (distribution-aware ring only)
  const kern::Matrix* pairwise = nullptr;
  const std::vector<double>* per_worker_dist = nullptr;
  double mean_dist = 0.0;
};

/// Fixed policies ignore the round; the random topology is drawn once from
/// its own seed stream and therefore identical every round. The ddpg kind is
/// handled by the controller, not here.
Proposal propose(const PolicySpec& spec, int round, const ProposalInputs& in);

/// Same gate the decoded controller actions must pass: symmetric zero-diag
/// adjacency (by construction), connectivity for m >= 2, ratios in [r_min,1].
void validate_proposal(const Proposal& prop, int m, double r_min);

}  // namespace dfgl::policy

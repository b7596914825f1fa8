#include "doctest.h"

#include <random>
#include <stdexcept>
#include <vector>

#include "dfgl/common.hpp"
#include "dfgl/policies.hpp"

using namespace dfgl;

TEST_CASE("policy names parse with aliases and arguments") {
  CHECK(policy::parse_policy("ddpg", 1.0).kind == policy::Kind::Ddpg);
  CHECK(policy::parse_policy("ring", 0.5).kind == policy::Kind::FixedRing);
  CHECK(policy::parse_policy("fixed_ring", 0.5).kind == policy::Kind::FixedRing);
  CHECK(policy::parse_policy("complete", 1.0).kind == policy::Kind::FixedComplete);
  CHECK(policy::parse_policy("fixed_complete", 1.0).kind == policy::Kind::FixedComplete);

  auto kreg = policy::parse_policy("kreg:3", 0.7);
  CHECK(kreg.kind == policy::Kind::FixedKRegular);
  CHECK(kreg.k == 3);
  CHECK(kreg.ratio == 0.7);
  CHECK(policy::parse_policy("fixed_kregular:4", 1.0).k == 4);

  auto rnd = policy::parse_policy("random:0.4", 1.0);
  CHECK(rnd.kind == policy::Kind::RandomTopology);
  CHECK(rnd.p == doctest::Approx(0.4));
  CHECK(policy::parse_policy("random_topology", 1.0).p == doctest::Approx(0.3));

  CHECK(policy::parse_policy("dar", 0.5).kind == policy::Kind::DistributionAwareRing);
  CHECK(policy::parse_policy("distribution_aware_ring", 0.5).kind ==
        policy::Kind::DistributionAwareRing);

  CHECK(policy::policy_name(policy::parse_policy("kreg:3", 1.0)) == "fixed_kregular:3");
  CHECK(policy::policy_name(policy::parse_policy("ddpg", 1.0)) == "ddpg");

  CHECK_THROWS_AS(policy::parse_policy("mesh", 1.0), ConfigError);
  CHECK_THROWS_AS(policy::parse_policy("kreg", 1.0), ConfigError);
  CHECK_THROWS_AS(policy::parse_policy("random:1.5", 1.0), ConfigError);
  CHECK_THROWS_AS(policy::parse_policy("ring", 0.0), ConfigError);
  CHECK_THROWS_AS(policy::parse_policy("ring", 1.5), ConfigError);
  CHECK_NOTHROW(policy::parse_policy("ddpg", 0.0));  // ratio unused
}

TEST_CASE("named topologies have the expected shape") {
  auto ring = policy::ring_topology(5);
  CHECK(ring.degrees() == std::vector<int>{2, 2, 2, 2, 2});
  CHECK(ring.has_edge(0, 4));
  CHECK(ring.connected());
  CHECK(policy::ring_topology(2).edge_list() ==
        std::vector<std::pair<int, int>>{{0, 1}});

  auto k2 = policy::kregular_topology(6, 2);
  CHECK(k2.degrees() == std::vector<int>(6, 2));
  auto k3 = policy::kregular_topology(6, 3);
  CHECK(k3.degrees() == std::vector<int>(6, 3));
  CHECK(k3.connected());
  CHECK(k3.has_edge(0, 3));  // diameter chords close the odd degree

  auto kc = policy::complete_topology(4);
  CHECK(kc.num_edges() == 6);
  CHECK(kc.degrees() == std::vector<int>(4, 3));

  CHECK_THROWS_AS(policy::kregular_topology(4, 4), ConfigError);
  CHECK_THROWS_AS(policy::kregular_topology(5, 3), ConfigError);  // odd k, odd m
  CHECK_THROWS_AS(policy::kregular_topology(4, 0), ConfigError);
}

TEST_CASE("fixed policies ignore the round and clamp their ratio") {
  policy::ProposalInputs in;
  in.m = 6;
  in.r_min = 0.3;
  in.master_seed = 5;

  auto spec = policy::parse_policy("ring", 0.1);
  auto p1 = policy::propose(spec, 1, in);
  auto p9 = policy::propose(spec, 9, in);
  CHECK((p1.topology == p9.topology));
  CHECK(p1.ratios == std::vector<double>(6, 0.3));  // lifted to r_min
  CHECK_NOTHROW(policy::validate_proposal(p1, 6, in.r_min));

  auto ddpg = policy::parse_policy("ddpg", 1.0);
  CHECK_THROWS_AS(policy::propose(ddpg, 1, in), std::logic_error);
}

TEST_CASE("the random topology is connected and frozen across rounds") {
  policy::ProposalInputs in;
  in.m = 8;
  in.r_min = 0.05;
  in.master_seed = 42;
  auto spec = policy::parse_policy("random:0.3", 1.0);

  auto a = policy::propose(spec, 1, in);
  auto b = policy::propose(spec, 37, in);
  CHECK((a.topology == b.topology));
  CHECK(a.topology.connected());

  in.master_seed = 43;
  auto c = policy::propose(spec, 1, in);
  CHECK(!(a.topology == c.topology));  // new seed, new draw
}

TEST_CASE("distribution-aware ring chains through the farthest worker") {
  kern::Matrix d(4, 4);
  auto set = [&](int i, int j, double v) { d.at(i, j) = d.at(j, i) = v; };
  set(0, 1, 1);
  set(0, 2, 5);
  set(0, 3, 9);
  set(1, 2, 4);
  set(1, 3, 7);
  set(2, 3, 2);
  std::vector<double> per{1.0, 2.0, 3.0, 4.0};

  policy::ProposalInputs in;
  in.m = 4;
  in.r_min = 0.05;
  in.pairwise = &d;
  in.per_worker_dist = &per;
  in.mean_dist = 2.0;

  auto spec = policy::parse_policy("dar", 1.0);
  auto prop = policy::propose(spec, 3, in);
  // visit order 0 -> 3 -> 1 -> 2, closed into a cycle
  CHECK(prop.topology.edge_list() ==
        std::vector<std::pair<int, int>>{{0, 2}, {0, 3}, {1, 2}, {1, 3}});
  CHECK(prop.ratios == std::vector<double>{0.25, 0.5, 0.75, 1.0});

  in.mean_dist = 0.0;
  CHECK(policy::propose(spec, 3, in).ratios == std::vector<double>(4, 0.5));

  in.pairwise = nullptr;
  CHECK_THROWS_AS(policy::propose(spec, 3, in), std::invalid_argument);
}

TEST_CASE("distribution-aware rings are always hamiltonian cycles") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> unif(0.1, 10.0);
  auto spec = policy::parse_policy("dar", 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    int m = 3 + static_cast<int>(rng() % 7);
    kern::Matrix d(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) d.at(i, j) = d.at(j, i) = unif(rng);
    std::vector<double> per(m, 1.0);
    policy::ProposalInputs in;
    in.m = m;
    in.pairwise = &d;
    in.per_worker_dist = &per;
    in.mean_dist = 1.0;
    auto prop = policy::propose(spec, 1, in);
    CHECK(prop.topology.degrees() == std::vector<int>(m, 2));
    CHECK(prop.topology.connected());
  }
}

TEST_CASE("proposal validation rejects malformed plans") {
  policy::Proposal p;
  p.topology = policy::ring_topology(4);
  p.ratios = {0.5, 0.5, 0.5, 0.5};
  CHECK_NOTHROW(policy::validate_proposal(p, 4, 0.05));

  CHECK_THROWS_AS(policy::validate_proposal(p, 5, 0.05), std::logic_error);

  auto bad = p;
  bad.ratios.pop_back();
  CHECK_THROWS_AS(policy::validate_proposal(bad, 4, 0.05), std::logic_error);

  bad = p;
  bad.ratios[2] = 0.01;
  CHECK_THROWS_AS(policy::validate_proposal(bad, 4, 0.05), std::logic_error);
  bad.ratios[2] = 1.2;
  CHECK_THROWS_AS(policy::validate_proposal(bad, 4, 0.05), std::logic_error);

  bad = p;
  bad.topology = Topology(4);  // no edges
  CHECK_THROWS_AS(policy::validate_proposal(bad, 4, 0.05), std::logic_error);
}

#pragma once

#include <vector>

#include "dfgl/kernels.hpp"
#include "dfgl/topology.hpp"

namespace dfgl::consensus {

/// Eigenvalues of the graph Laplacian D - A, ascending.
std::vector<double> laplacian_eigenvalues(const Topology& t);

struct Mixing {
  double alpha = 0.0;  // constant edge weight 2 / (lambda_2 + lambda_max)
  double lambda2 = 0.0;
  double lambda_max = 0.0;
};

/// Fastest constant-edge-weight averaging step for the topology.
/// Requires a connected topology with at least one edge.
Mixing compute_mixing(const Topology& t);
double mixing_weight(const Topology& t);

/// One synchronous gossip step: w_i += sum_{j in N(i)} p * (w_j - w_i),
/// every delta read from the pre-step snapshot.
void aggregate(std::vector<std::vector<double>>& params, const Topology& t, double p);

struct ConsensusStats {
  std::vector<double> per_worker;  // distance to the parameter mean
  double mean = 0.0;
};

ConsensusStats exact_consensus(const std::vector<std::vector<double>>& params);

/// All pairwise parameter distances, symmetric with zero diagonal.
kern::Matrix pairwise_distances(const std::vector<std::vector<double>>& params);

enum class Observability {
  AllPairs,       // every measured distance is available to the estimator
  AdjacentOnly,   // only distances along topology edges are observable
};

/// Triangle-inequality estimate for non-adjacent pairs. With AllPairs each
/// missing C_ij becomes min_q (C_iq + C_jq); with AdjacentOnly it is the
/// shortest path through measured edges. Adjacent entries stay measured.
/// With fewer than 3 workers the measured distances are returned as-is.
kern::Matrix estimate_distances(const kern::Matrix& measured, const Topology& t,
                                Observability obs);

/// (1/m^2) * sum over non-adjacent ordered pairs of the estimated distance.
double estimated_disagreement(const kern::Matrix& est, const Topology& t);

/// EMA of the mean gradient norm; seeds with the first observation.
double update_cmax(double prev, const std::vector<double>& grad_norms, double beta,
                   bool first);

}  // namespace dfgl::consensus

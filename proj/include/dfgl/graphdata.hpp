#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dfgl/kernels.hpp"

namespace dfgl::graph {

/// Shared attributed graph: undirected, no self-loops, one class label and
/// one length-d0 feature vector per node, disjoint train/test masks.
struct GlobalGraph {
  int num_nodes = 0;
  int num_classes = 0;
  int feature_dim = 0;
  std::vector<std::pair<int, int>> edges;  // u < v, unique
  kern::Matrix features;                   // num_nodes x feature_dim
  std::vector<int> labels;
  std::vector<bool> train_mask;
  std::vector<bool> test_mask;

  std::vector<std::vector<int>> adjacency() const;
};

struct SbmParams {
  int num_nodes = 400;
  int num_classes = 4;
  double p_intra = 0.1;
  double p_inter = 0.01;
  int feature_dim = 16;
  double feature_margin = 1.0;  // class mean = margin * one-hot(label % dim)
  double test_fraction = 0.2;
  uint64_t seed = 0;
};

struct PartitionSpec {
  int num_workers = 1;
  double alpha = 1.0;  // Dirichlet concentration; smaller -> more skew
  uint64_t seed = 0;
};

/// Cross-worker edge endpoint seen from one side.
struct ExternalStub {
  int local_node;
  int remote_node;
  int remote_worker;
};

/// One worker's owned slice of the global graph. Owns copies of its node
/// features/labels so workers are self-contained.
struct Subgraph {
  int worker_id = 0;
  int num_classes = 0;
  std::vector<int> local_nodes;            // global ids, sorted
  std::unordered_map<int, int> local_index; // global id -> row
  std::vector<std::pair<int, int>> internal_edges;
  std::vector<ExternalStub> external_stubs;
  std::vector<int> train_nodes;            // global ids
  std::vector<int> test_nodes;
  kern::Matrix features;                   // |local_nodes| x d0
  std::vector<int> labels;                 // by local row

  // Neighbor lists over global ids (internal + stub neighbors), sorted.
  std::vector<std::vector<int>> neighbors;
  // Owner of each global-id neighbor (worker_id for internal ones).
  int owner_of(int global_id) const;
  bool is_local(int global_id) const { return local_index.count(global_id) != 0; }

 private:
  friend std::vector<Subgraph> build_subgraphs(const GlobalGraph&,
                                               const std::vector<int>&, int);
  std::unordered_map<int, int> remote_owner_;
};

/// Stochastic block model with class-conditional Gaussian features.
/// Labels are the block ids (contiguous, near-equal block sizes).
GlobalGraph generate_sbm(const SbmParams& p);

/// Splits each class's nodes across workers with proportions ~ Dir(alpha).
/// Returns owner[node] in [0, num_workers).
std::vector<int> dirichlet_partition(const GlobalGraph& g, const PartitionSpec& spec);

/// num_workers = -1 sizes the result from the largest owner id; workers that
/// own no nodes still get an (empty) subgraph.
std::vector<Subgraph> build_subgraphs(const GlobalGraph& g, const std::vector<int>& owner,
                                      int num_workers = -1);

/// Total-variation distance between each worker's label distribution and the
/// global one, plus the mean. TV in [0,1].
struct SkewReport {
  std::vector<double> per_worker_tv;
  double mean_tv = 0.0;
};
SkewReport label_skew(const std::vector<Subgraph>& subs, const GlobalGraph& g);

/// Plain-text loader: edge list ("u v" per line) plus a CSV of
/// `node_id,label,f0..f{d-1}` with header. Test mask drawn uniformly.
GlobalGraph load_graph(const std::string& edge_path, const std::string& feature_path,
                       double test_fraction, uint64_t seed);

}  // namespace dfgl::graph

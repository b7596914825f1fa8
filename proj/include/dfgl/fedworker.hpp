#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "dfgl/gcnmodel.hpp"
#include "dfgl/graphdata.hpp"

namespace dfgl::worker {

/// Layer-wise node sets and sampled neighbor lists for one mini-batch,
/// built top-down: carried[L] = batch, carried[l-1] = carried[l] union all
/// sampled neighbors. All id lists are sorted global ids.
struct SamplingPlan {
  int L = 0;
  std::vector<std::vector<int>> carried;       // L+1 full level sets
  std::vector<std::vector<int>> level_local;   // local members of carried[l]
  std::vector<std::vector<int>> level_remote;  // remote ids actually consumed
                                               // at layer l+1; [L] empty,
                                               // [0] empty under the privacy rule
  // sampled[l][k] = sampled neighbor list for level_local[l][k], l in 1..L
  std::vector<std::vector<std::vector<int>>> sampled;

  int64_t sampled_rows = 0;      // total aggregated neighbor rows
  double ratio_sum = 0.0;        // sum over nodes of |S(v)|/|N_eff(v)|
  int ratio_count = 0;           // nodes with nonempty N_eff
};

/// Partial Fisher-Yates draw of k items; pool must be sorted, output sorted.
/// k >= |pool| returns the pool untouched without consuming randomness.
std::vector<int> sample_without_replacement(std::vector<int> pool, int k,
                                            std::mt19937_64& rng);

/// Algorithm: walk levels L..1; per local node keep neighbors owned by this
/// worker or a topology neighbor, at the feature-consuming layer drop all
/// remote ones, then draw max(1, round(r*|N_eff|)) without replacement.
/// privacy_off lifts only the feature-layer restriction (test hook).
SamplingPlan graph_sampling(const std::vector<int>& batch, double r, int L,
                            const std::vector<int>& topo_neighbors,
                            const graph::Subgraph& sub, std::mt19937_64& rng,
                            bool privacy_off = false);

/// (owner worker, embedding level) -> sorted node ids to fetch.
std::map<std::pair<int, int>, std::vector<int>> collect_requests(
    const SamplingPlan& plan, const graph::Subgraph& sub);

/// Embeddings a worker exposes for one round, all local nodes, rows in
/// sub.local_nodes order. levels[l] = h^l from the given parameters with
/// full local-only neighborhoods; levels[0] aliases the raw features and is
/// only ever served when the privacy rule is disabled.
struct ServeTable {
  std::vector<kern::Matrix> levels;  // size L (levels 0..L-1)
};

ServeTable build_serve_table(const graph::Subgraph& sub, const gcn::ModelParams& p);

/// Pure lookup; throws if a node is not local to the server.
kern::Matrix serve_nodes(const graph::Subgraph& server_sub, const ServeTable& table,
                         int level, const std::vector<int>& nodes, int64_t* bits_out);

/// Cross-worker embedding pull: (server worker, level, nodes) -> rows in
/// node order. Must be thread-safe and read-only.
using FetchFn =
    std::function<kern::Matrix(int server, int level, const std::vector<int>& nodes)>;

struct TransferStat {
  int64_t count = 0;
  int64_t bits = 0;
};
/// keyed by (src worker, embedding level)
using TransferMap = std::map<std::pair<int, int>, TransferStat>;

/// Maps a sampling plan onto model-layer wiring, fetching remote embeddings
/// and tallying them into `received`.
gcn::ForwardPlan build_forward_plan(const SamplingPlan& plan, const graph::Subgraph& sub,
                                    const std::vector<int>& dims, const FetchFn& fetch,
                                    TransferMap* received, bool privacy_off = false);

/// Feature rows for the plan's level-0 local nodes.
kern::Matrix gather_h0(const SamplingPlan& plan, const graph::Subgraph& sub);
std::vector<int> batch_labels(const SamplingPlan& plan, const graph::Subgraph& sub);

struct Worker {
  int id = 0;
  graph::Subgraph sub;
  gcn::ModelParams params;
  gcn::AdamState opt;
  std::mt19937_64 rng;  // private stream, advanced only by this worker's training
  double ratio = 1.0;
  std::vector<int> topo_neighbors;
  double last_loss = 0.0;
  double last_grad_norm = 0.0;
};

struct TrainSettings {
  int tau = 5;
  int batch_size = 64;
  gcn::AdamConfig adam;
  double weight_decay = 3e-4;
  bool privacy_off = false;
};

struct RoundReport {
  std::vector<double> iter_losses;
  double final_loss = 0.0;
  double mean_grad_norm = 0.0;
  double aggregated_rows = 0.0;
  TransferMap received;
  bool trained = false;
};

/// tau iterations of {batch, sample, fetch, forward, loss, backward, adam}.
/// Touches only `w` plus read-only fetches; bit-identical results whether
/// workers run sequentially or in parallel.
RoundReport run_local_training(Worker& w, const TrainSettings& s, const FetchFn& fetch);

struct EvalResult {
  double accuracy = 0.0;
  int count = 0;
  bool defined = false;
};

/// Full-neighborhood (r=1) forward over the worker's local test nodes under
/// the current topology gate; consumes no worker randomness, bills nothing.
EvalResult evaluate_worker(const Worker& w, const FetchFn& fetch);

/// One cross-worker transfer observed by the coordinator.
struct TransferRecord {
  int round = 0, src = 0, dst = 0, level = 0;
  int64_t count = 0, bits = 0;
};

/// True iff no raw feature row (level 0) ever crossed a worker boundary.
bool privacy_audit(const std::vector<TransferRecord>& log);

}  // namespace dfgl::worker

#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <tuple>
#include <vector>

#include "dfgl/kernels.hpp"
#include "dfgl/topology.hpp"

namespace dfgl::net {

/// Per-worker ingress/egress capacity in Mbps, redrawn each round.
struct BandwidthState {
  std::vector<double> b_in, b_out;
};

BandwidthState sample_bandwidth(int m, double b_min, double b_max,
                                uint64_t master_seed, int round);

/// Capacity of directed link i->j: each endpoint splits its capacity evenly
/// over its topology neighbors, the link gets the bottleneck side.
double link_bandwidth(int i, int j, const Topology& t, const BandwidthState& bw);

struct CommTime {
  double seconds = 0.0;
  bool isolated = false;
};

/// max_j(r_i * E_ij / b_ij) + max_j(|w| / b_ij) over i's neighbors, in
/// seconds; nominal_bits is the m x m full-sampling embedding volume matrix.
/// Isolated workers communicate nothing (flagged).
CommTime comm_time(int i, const Topology& t, double r_i,
                   const kern::Matrix& nominal_bits, double model_bits,
                   const BandwidthState& bw);

/// seconds_per_row * rows / speed; rows = aggregated node-feature rows.
double compute_time(double aggregated_rows, double seconds_per_row, double speed);

struct TimingReport {
  std::vector<double> t_cp, t_com, t_total;
  double t_round = 0.0;
};

TimingReport assemble_timing(const std::vector<double>& t_cp,
                             const std::vector<double>& t_com);
double round_time(const std::vector<double>& t_total);

/// Per ordered link per round: embedding bits and model bits actually moved.
/// Single writer (the round loop); control-plane traffic is never billed.
class TrafficLedger {
 public:
  void add_embed(int round, int src, int dst, int64_t bits);
  void add_model(int round, int src, int dst, int64_t bits);

  int64_t total_embed_bits() const { return total_embed_; }
  int64_t total_model_bits() const { return total_model_; }
  int64_t round_embed_bits(int round) const;
  int64_t round_model_bits(int round) const;
  int64_t link_embed_bits(int round, int src, int dst) const;

  /// CSV rows `round,src,dst,embed_bits,model_bits` sorted by key.
  void export_csv(std::ostream& os) const;

 private:
  struct Cell {
    int64_t embed = 0, model = 0;
  };
  std::map<std::tuple<int, int, int>, Cell> cells_;  // (round, src, dst)
  int64_t total_embed_ = 0, total_model_ = 0;
};

constexpr double kBitsPerMB = 8.0e6;

}  // namespace dfgl::net

#include "dfgl/netmodel.hpp"

#include <algorithm>
#include <climits>
#include <random>
#include <stdexcept>

#include "dfgl/common.hpp"

namespace dfgl::net {

BandwidthState sample_bandwidth(int m, double b_min, double b_max,
                                uint64_t master_seed, int round) {
  if (m <= 0) throw ConfigError("sample_bandwidth: m must be positive");
  if (!(b_min > 0) || b_max < b_min)
    throw ConfigError("sample_bandwidth: need 0 < b_min <= b_max");
  auto rng = make_rng(master_seed, "bandwidth", static_cast<uint64_t>(round));
  std::uniform_real_distribution<double> unif(b_min, b_max);
  BandwidthState bw;
  bw.b_in.resize(m);
  bw.b_out.resize(m);
  for (int i = 0; i < m; ++i) {
    bw.b_in[i] = (b_min == b_max) ? b_min : unif(rng);
    bw.b_out[i] = (b_min == b_max) ? b_min : unif(rng);
  }
  return bw;
}

double link_bandwidth(int i, int j, const Topology& t, const BandwidthState& bw) {
  if (!t.has_edge(i, j)) throw std::invalid_argument("link_bandwidth: (i,j) is not an edge");
  auto deg = t.degrees();
  return std::min(bw.b_out[i] / deg[i], bw.b_in[j] / deg[j]);
}

CommTime comm_time(int i, const Topology& t, double r_i,
                   const kern::Matrix& nominal_bits, double model_bits,
                   const BandwidthState& bw) {
  CommTime out;
  auto nbrs = t.neighbors(i);
  if (nbrs.empty()) {
    out.isolated = true;
    return out;
  }
  double embed_max = 0.0, model_max = 0.0;
  for (int j : nbrs) {
    double b = link_bandwidth(i, j, t, bw) * 1e6;  // Mbps -> bits/s
    embed_max = std::max(embed_max, r_i * nominal_bits.at(i, j) / b);
    model_max = std::max(model_max, model_bits / b);
  }
  out.seconds = embed_max + model_max;
  return out;
}

double compute_time(double aggregated_rows, double seconds_per_row, double speed) {
  if (!(speed > 0)) throw std::invalid_argument("compute_time: speed must be positive");
  return seconds_per_row * aggregated_rows / speed;
}

TimingReport assemble_timing(const std::vector<double>& t_cp,
                             const std::vector<double>& t_com) {
  if (t_cp.size() != t_com.size())
    throw std::invalid_argument("assemble_timing: size mismatch");
  TimingReport r;
  r.t_cp = t_cp;
  r.t_com = t_com;
  r.t_total.resize(t_cp.size());
  for (size_t i = 0; i < t_cp.size(); ++i) r.t_total[i] = t_cp[i] + t_com[i];
  r.t_round = round_time(r.t_total);
  return r;
}

double round_time(const std::vector<double>& t_total) {
  double m = 0.0;
  for (double t : t_total) m = std::max(m, t);
  return m;
}

void TrafficLedger::add_embed(int round, int src, int dst, int64_t bits) {
  if (bits < 0) throw std::invalid_argument("ledger: negative bits");
  if (bits == 0) return;
  cells_[{round, src, dst}].embed += bits;
  total_embed_ += bits;
}

void TrafficLedger::add_model(int round, int src, int dst, int64_t bits) {
  if (bits < 0) throw std::invalid_argument("ledger: negative bits");
  if (bits == 0) return;
  cells_[{round, src, dst}].model += bits;
  total_model_ += bits;
}

int64_t TrafficLedger::round_embed_bits(int round) const {
  int64_t s = 0;
  for (auto it = cells_.lower_bound({round, INT_MIN, INT_MIN}); it != cells_.end(); ++it) {
    if (std::get<0>(it->first) != round) break;
    s += it->second.embed;
  }
  return s;
}

int64_t TrafficLedger::round_model_bits(int round) const {
  int64_t s = 0;
  for (auto it = cells_.lower_bound({round, INT_MIN, INT_MIN}); it != cells_.end(); ++it) {
    if (std::get<0>(it->first) != round) break;
    s += it->second.model;
  }
  return s;
}

int64_t TrafficLedger::link_embed_bits(int round, int src, int dst) const {
  auto it = cells_.find({round, src, dst});
  return it == cells_.end() ? 0 : it->second.embed;
}

void TrafficLedger::export_csv(std::ostream& os) const {
  os << "round,src,dst,embed_bits,model_bits\n";
  for (const auto& [key, cell] : cells_) {
    os << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ','
       << cell.embed << ',' << cell.model << '\n';
  }
}

}  // namespace dfgl::net

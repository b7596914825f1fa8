#include "dfgl/consensus.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dfgl::consensus {

std::vector<double> laplacian_eigenvalues(const Topology& t) {
  int m = t.size();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(m, m);
  for (auto [i, j] : t.edge_list()) {
    L(i, j) = L(j, i) = -1.0;
    L(i, i) += 1.0;
    L(j, j) += 1.0;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("laplacian_eigenvalues: eigensolver failed");
  std::vector<double> ev(solver.eigenvalues().data(), solver.eigenvalues().data() + m);
  std::sort(ev.begin(), ev.end());
  return ev;
}

Mixing compute_mixing(const Topology& t) {
  int m = t.size();
  if (m < 2 || !t.connected() || t.num_edges() == 0)
    throw std::invalid_argument("mixing_weight: need a connected topology on >= 2 workers");
  auto ev = laplacian_eigenvalues(t);
  Mixing mix;
  mix.lambda2 = ev[1];
  mix.lambda_max = ev[m - 1];
  if (mix.lambda2 <= 1e-12)
    throw std::runtime_error("mixing_weight: zero algebraic connectivity");
  mix.alpha = 2.0 / (mix.lambda2 + mix.lambda_max);
  return mix;
}

double mixing_weight(const Topology& t) { return compute_mixing(t).alpha; }

void aggregate(std::vector<std::vector<double>>& params, const Topology& t, double p) {
  int m = static_cast<int>(params.size());
  if (m != t.size()) throw std::invalid_argument("aggregate: size mismatch");
  if (m == 0) return;
  size_t n = params[0].size();
  for (const auto& w : params)
    if (w.size() != n) throw std::invalid_argument("aggregate: ragged parameters");

  std::vector<std::vector<double>> snapshot = params;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (!t.has_edge(i, j)) continue;
      const auto& wi = snapshot[i];
      const auto& wj = snapshot[j];
      auto& out = params[i];
      for (size_t k = 0; k < n; ++k) out[k] += p * (wj[k] - wi[k]);
    }
}

ConsensusStats exact_consensus(const std::vector<std::vector<double>>& params) {
  ConsensusStats st;
  int m = static_cast<int>(params.size());
  if (m == 0) return st;
  size_t n = params[0].size();
  std::vector<double> mean(n, 0.0);
  for (const auto& w : params) {
    if (w.size() != n) throw std::invalid_argument("exact_consensus: ragged parameters");
    for (size_t k = 0; k < n; ++k) mean[k] += w[k];
  }
  for (double& x : mean) x /= m;
  for (const auto& w : params) {
    double s = 0.0;
    for (size_t k = 0; k < n; ++k) {
      double d = w[k] - mean[k];
      s += d * d;
    }
    st.per_worker.push_back(std::sqrt(s));
    st.mean += st.per_worker.back();
  }
  st.mean /= m;
  return st;
}

kern::Matrix pairwise_distances(const std::vector<std::vector<double>>& params) {
  int m = static_cast<int>(params.size());
  kern::Matrix d(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      double s = 0.0;
      for (size_t k = 0; k < params[i].size(); ++k) {
        double x = params[i][k] - params[j][k];
        s += x * x;
      }
      d.at(i, j) = d.at(j, i) = std::sqrt(s);
    }
  return d;
}

kern::Matrix estimate_distances(const kern::Matrix& measured, const Topology& t,
                                Observability obs) {
  int m = t.size();
  if (measured.rows != m || measured.cols != m)
    throw std::invalid_argument("estimate_distances: matrix size mismatch");
  kern::Matrix est = measured;
  if (m < 3) return est;

  if (obs == Observability::AllPairs) {
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) {
        if (t.has_edge(i, j)) continue;
        double best = std::numeric_limits<double>::infinity();
        for (int q = 0; q < m; ++q) {
          if (q == i || q == j) continue;
          best = std::min(best, measured.at(i, q) + measured.at(q, j));
        }
        est.at(i, j) = est.at(j, i) = best;
      }
    return est;
  }

  // AdjacentOnly: all-pairs shortest paths over measured edge distances.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(static_cast<size_t>(m) * m, inf);
  auto at = [&](int i, int j) -> double& { return dist[static_cast<size_t>(i) * m + j]; };
  for (int i = 0; i < m; ++i) at(i, i) = 0.0;
  for (auto [i, j] : t.edge_list()) at(i, j) = at(j, i) = measured.at(i, j);
  for (int q = 0; q < m; ++q)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        if (at(i, q) + at(q, j) < at(i, j)) at(i, j) = at(i, q) + at(q, j);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (i != j && !t.has_edge(i, j))
        est.at(i, j) = std::isfinite(at(i, j)) ? at(i, j) : 0.0;
  return est;
}

double estimated_disagreement(const kern::Matrix& est, const Topology& t) {
  int m = t.size();
  if (m == 0) return 0.0;
  double s = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (i != j && !t.has_edge(i, j)) s += est.at(i, j);
  return s / (static_cast<double>(m) * m);
}

double update_cmax(double prev, const std::vector<double>& grad_norms, double beta,
                   bool first) {
  double mean = 0.0;
  for (double g : grad_norms) mean += g;
  if (!grad_norms.empty()) mean /= static_cast<double>(grad_norms.size());
  if (first) return mean;
  return (1.0 - beta) * prev + beta * mean;
}

}  // namespace dfgl::consensus

#include "dfgl/topology.hpp"

#include <stdexcept>
#include <string>

namespace dfgl {

Topology Topology::from_edges(int m, const std::vector<std::pair<int, int>>& edges) {
  Topology t(m);
  for (auto [i, j] : edges) t.add_edge(i, j);
  return t;
}

void Topology::add_edge(int i, int j) {
  if (i < 0 || j < 0 || i >= m_ || j >= m_)
    throw std::out_of_range("topology: edge endpoint out of range");
  if (i == j) throw std::invalid_argument("topology: self-loops not allowed");
  adj_[idx(i, j)] = adj_[idx(j, i)] = 1;
}

void Topology::remove_edge(int i, int j) {
  if (i < 0 || j < 0 || i >= m_ || j >= m_)
    throw std::out_of_range("topology: edge endpoint out of range");
  adj_[idx(i, j)] = adj_[idx(j, i)] = 0;
}

std::vector<int> Topology::degrees() const {
  std::vector<int> d(m_, 0);
  for (int i = 0; i < m_; ++i)
    for (int j = 0; j < m_; ++j) d[i] += adj_[idx(i, j)];
  return d;
}

std::vector<int> Topology::neighbors(int i) const {
  std::vector<int> out;
  for (int j = 0; j < m_; ++j)
    if (adj_[idx(i, j)]) out.push_back(j);
  return out;
}

std::vector<std::pair<int, int>> Topology::edge_list() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < m_; ++i)
    for (int j = i + 1; j < m_; ++j)
      if (adj_[idx(i, j)]) out.emplace_back(i, j);
  return out;
}

int Topology::num_edges() const { return static_cast<int>(edge_list().size()); }

bool Topology::connected() const {
  if (m_ <= 1) return true;
  std::vector<char> seen(m_, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v = 0; v < m_; ++v)
      if (adj_[idx(u, v)] && !seen[v]) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
  }
  return count == m_;
}

}  // namespace dfgl

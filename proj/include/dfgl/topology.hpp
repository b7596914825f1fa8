#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace dfgl {

/// Undirected overlay between workers: symmetric 0/1 adjacency, zero diagonal.
class Topology {
 public:
  Topology() = default;
  explicit Topology(int m) : m_(m), adj_(static_cast<size_t>(m) * m, 0) {}

  static Topology from_edges(int m, const std::vector<std::pair<int, int>>& edges);

  int size() const { return m_; }
  bool has_edge(int i, int j) const { return i != j && adj_[idx(i, j)] != 0; }
  void add_edge(int i, int j);
  void remove_edge(int i, int j);

  std::vector<int> degrees() const;
  std::vector<int> neighbors(int i) const;
  std::vector<std::pair<int, int>> edge_list() const;  // i < j, sorted
  int num_edges() const;
  bool connected() const;  // vacuously true for m <= 1

  bool operator==(const Topology& o) const { return m_ == o.m_ && adj_ == o.adj_; }

 private:
  size_t idx(int i, int j) const { return static_cast<size_t>(i) * m_ + j; }
  int m_ = 0;
  std::vector<uint8_t> adj_;
};

}  // namespace dfgl

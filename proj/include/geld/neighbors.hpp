#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "geld/tsp.hpp"

namespace geld {

/// Uniform bucket grid answering k-nearest-available queries with the same
/// ordering as k_nearest_available: ascending squared distance, ties by index.
/// Nodes can be removed permanently (single-owner rollouts) or filtered per
/// query with a visited mask (shared grid across beams).
class NeighborGrid {
 public:
  explicit NeighborGrid(std::span<const Point> coords);

  void remove(int node);
  bool contains(int node) const { return pos_in_cell_[node] >= 0; }
  std::size_t alive() const { return alive_.size(); }

  /// Up to k nearest nodes that are still in the grid and not flagged in
  /// `visited` (an empty span means no mask).
  std::vector<int> nearest(int anchor, int k, std::span<const std::uint8_t> visited = {}) const;

 private:
  int cell_of(const Point& p, int& cx, int& cy) const;
  std::vector<int> linear_scan(int anchor, int k, std::span<const std::uint8_t> visited) const;

  std::span<const Point> coords_;
  double min_x_ = 0, min_y_ = 0, cell_w_ = 1, cell_h_ = 1;
  int gx_ = 1, gy_ = 1;
  std::vector<std::vector<int>> cells_;
  std::vector<int> cell_index_;
  std::vector<int> pos_in_cell_;
  std::vector<int> alive_;
  std::vector<int> pos_in_alive_;
};

}  // namespace geld

#include "geld/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace geld {

namespace {

using Candidate = std::pair<double, int>;

void offer(std::vector<Candidate>& best, std::size_t k, Candidate c) {
  if (best.size() == k && !(c < best.back())) return;
  auto it = std::upper_bound(best.begin(), best.end(), c);
  best.insert(it, c);
  if (best.size() > k) best.pop_back();
}

}  // namespace

NeighborGrid::NeighborGrid(std::span<const Point> coords) : coords_(coords) {
  const std::size_t n = coords.size();
  double max_x = 0, max_y = 0;
  if (n > 0) {
    min_x_ = max_x = coords[0].x;
    min_y_ = max_y = coords[0].y;
  }
  for (const Point& p : coords) {
    min_x_ = std::min(min_x_, p.x);
    max_x = std::max(max_x, p.x);
    min_y_ = std::min(min_y_, p.y);
    max_y = std::max(max_y, p.y);
  }
  // About two nodes per cell on average.
  const int g = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n) / 2.0))));
  gx_ = gy_ = g;
  cell_w_ = std::max(max_x - min_x_, 1e-300) / g;
  cell_h_ = std::max(max_y - min_y_, 1e-300) / g;
  cells_.resize(static_cast<std::size_t>(gx_) * gy_);
  cell_index_.resize(n);
  pos_in_cell_.resize(n);
  alive_.resize(n);
  pos_in_alive_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    int cx, cy;
    const int c = cell_of(coords[i], cx, cy);
    cell_index_[i] = c;
    pos_in_cell_[i] = static_cast<int>(cells_[c].size());
    cells_[c].push_back(static_cast<int>(i));
    alive_[i] = static_cast<int>(i);
    pos_in_alive_[i] = static_cast<int>(i);
  }
}

int NeighborGrid::cell_of(const Point& p, int& cx, int& cy) const {
  cx = std::clamp(static_cast<int>((p.x - min_x_) / cell_w_), 0, gx_ - 1);
  cy = std::clamp(static_cast<int>((p.y - min_y_) / cell_h_), 0, gy_ - 1);
  return cy * gx_ + cx;
}

void NeighborGrid::remove(int node) {
  if (pos_in_cell_[node] < 0) return;
  auto& cell = cells_[cell_index_[node]];
  const int pos = pos_in_cell_[node];
  cell[pos] = cell.back();
  pos_in_cell_[cell[pos]] = pos;
  cell.pop_back();
  pos_in_cell_[node] = -1;

  const int apos = pos_in_alive_[node];
  alive_[apos] = alive_.back();
  pos_in_alive_[alive_[apos]] = apos;
  alive_.pop_back();
  pos_in_alive_[node] = -1;
}

std::vector<int> NeighborGrid::linear_scan(int anchor, int k,
                                           std::span<const std::uint8_t> visited) const {
  std::vector<Candidate> all;
  all.reserve(alive_.size());
  const Point& a = coords_[anchor];
  for (int v : alive_)
    if (visited.empty() || !visited[v]) all.emplace_back(squared_distance(a, coords_[v]), v);
  const std::size_t kk = std::min<std::size_t>(k, all.size());
  std::partial_sort(all.begin(), all.begin() + kk, all.end());
  std::vector<int> out(kk);
  for (std::size_t i = 0; i < kk; ++i) out[i] = all[i].second;
  return out;
}

std::vector<int> NeighborGrid::nearest(int anchor, int k,
                                       std::span<const std::uint8_t> visited) const {
  if (k <= 0 || alive_.empty()) return {};
  const Point& a = coords_[anchor];
  int cx, cy;
  cell_of(a, cx, cy);
  const std::size_t kk = static_cast<std::size_t>(k);
  std::vector<Candidate> best;
  best.reserve(kk + 1);
  const int max_ring = std::max({cx, gx_ - 1 - cx, cy, gy_ - 1 - cy});
  std::size_t examined = 0;
  for (int r = 0; r <= max_ring; ++r) {
    if (r > 0 && best.size() == kk) {
      // Distance from the anchor to the inner boundary of ring r.
      const double left = a.x - (min_x_ + (cx - r + 1) * cell_w_);
      const double right = (min_x_ + (cx + r) * cell_w_) - a.x;
      const double down = a.y - (min_y_ + (cy - r + 1) * cell_h_);
      const double up = (min_y_ + (cy + r) * cell_h_) - a.y;
      const double bound = std::max(0.0, std::min({left, right, down, up}));
      if (best.back().first < bound * bound * (1.0 - 1e-12)) break;
    }
    if (examined > 2 * alive_.size() + 16) return linear_scan(anchor, k, visited);
    const int x0 = cx - r, x1 = cx + r, y0 = cy - r, y1 = cy + r;
    for (int y = std::max(y0, 0); y <= std::min(y1, gy_ - 1); ++y) {
      const bool edge_row = (y == y0 || y == y1);
      const int step = edge_row ? 1 : std::max(1, x1 - x0);
      for (int x = x0; x <= x1; x += step) {
        if (x < 0 || x >= gx_) continue;
        ++examined;
        for (int v : cells_[static_cast<std::size_t>(y) * gx_ + x]) {
          ++examined;
          if (!visited.empty() && visited[v]) continue;
          offer(best, kk, {squared_distance(a, coords_[v]), v});
        }
      }
    }
  }
  std::vector<int> out(best.size());
  for (std::size_t i = 0; i < best.size(); ++i) out[i] = best[i].second;
  return out;
}

}  // namespace geld

#include "geld/tsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace geld {

TspInstance::TspInstance(std::vector<Point> coords, MetricMode metric, std::string name,
                         std::size_t min_nodes)
    : coords_(std::move(coords)), metric_(metric), name_(std::move(name)) {
  if (coords_.size() < min_nodes)
    throw DegenerateInstanceError("instance needs at least " + std::to_string(min_nodes) +
                                  " nodes, got " + std::to_string(coords_.size()));
  for (std::size_t i = 0; i < coords_.size(); ++i)
    if (!std::isfinite(coords_[i].x) || !std::isfinite(coords_[i].y))
      throw DegenerateInstanceError("non-finite coordinate at node " + std::to_string(i));
  const bool all_same = std::all_of(coords_.begin(), coords_.end(),
                                    [&](const Point& p) { return p == coords_.front(); });
  if (all_same) throw DegenerateInstanceError("all nodes coincide");
}

double TspInstance::dist(std::size_t i, std::size_t j) const {
  const double d = euclid(coords_[i], coords_[j]);
  // std::round rounds halves away from zero, the TSPLIB nint convention.
  return metric_ == MetricMode::tsplib_rounded_euclid ? std::round(d) : d;
}

void validate_permutation(std::span<const int> order, std::size_t n) {
  if (order.size() != n)
    throw TourError("tour has " + std::to_string(order.size()) + " entries, instance has " +
                    std::to_string(n));
  std::vector<std::uint8_t> seen(n, 0);
  for (int v : order) {
    if (v < 0 || static_cast<std::size_t>(v) >= n)
      throw TourError("tour node " + std::to_string(v) + " out of range");
    if (seen[v]++) throw TourError("tour visits node " + std::to_string(v) + " twice");
  }
}

Tour::Tour(const TspInstance& inst, std::vector<int> order)
    : order_(std::move(order)), metric_(inst.metric()) {
  length_ = tour_length(inst, order_);
}

double tour_length(const TspInstance& inst, std::span<const int> order) {
  validate_permutation(order, inst.size());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < order.size(); ++i) total += inst.dist(order[i], order[i + 1]);
  return total + inst.dist(order.back(), order.front());
}

double tour_length(const TspInstance& inst, const Tour& tour) {
  return tour_length(inst, tour.order());
}

double path_length(const TspInstance& inst, std::span<const int> order) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < order.size(); ++i) total += inst.dist(order[i], order[i + 1]);
  return total;
}

double gap(double model_len, double opt_len) {
  if (!(opt_len > 0.0)) throw MetricError("reference length must be positive");
  return (model_len - opt_len) / opt_len * 100.0;
}

std::vector<Point> normalize_coords(std::span<const Point> coords) {
  if (coords.empty()) throw DegenerateInstanceError("no coordinates to normalize");
  double min_x = coords[0].x, max_x = coords[0].x, min_y = coords[0].y, max_y = coords[0].y;
  for (const Point& p : coords) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double scale = std::max(max_x - min_x, max_y - min_y);
  if (!(scale > 0.0)) throw DegenerateInstanceError("all points identical; cannot normalize");
  std::vector<Point> out(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i)
    out[i] = {(coords[i].x - min_x) / scale, (coords[i].y - min_y) / scale};
  return out;
}

std::vector<int> k_nearest_available(std::span<const Point> coords, int anchor,
                                     std::span<const std::uint8_t> visited, int k_m) {
  if (k_m < 1) throw std::invalid_argument("k_m must be positive");
  std::vector<std::pair<double, int>> avail;
  avail.reserve(coords.size());
  const Point& a = coords[anchor];
  for (std::size_t i = 0; i < coords.size(); ++i)
    if (!visited[i]) avail.emplace_back(squared_distance(a, coords[i]), static_cast<int>(i));
  if (avail.empty()) throw ExhaustedError("no available nodes");
  const std::size_t k = std::min<std::size_t>(k_m, avail.size());
  std::partial_sort(avail.begin(), avail.begin() + k, avail.end());
  std::vector<int> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = avail[i].second;
  return out;
}

RegionAssignment assign_regions(std::span<const Point> norm_coords, int m_r, int m_c) {
  if (m_r < 1 || m_c < 1) throw std::invalid_argument("region grid must be at least 1x1");
  constexpr double kTol = 1e-9;
  RegionAssignment ra;
  ra.rows = m_r;
  ra.cols = m_c;
  ra.region_of.resize(norm_coords.size());
  ra.counts.assign(static_cast<std::size_t>(m_r) * m_c, 0);
  for (std::size_t i = 0; i < norm_coords.size(); ++i) {
    const Point& p = norm_coords[i];
    if (p.x < -kTol || p.x > 1.0 + kTol || p.y < -kTol || p.y > 1.0 + kTol)
      throw PreconditionError("node " + std::to_string(i) + " lies outside the unit square");
    const int row = std::clamp(static_cast<int>(std::floor(p.y * m_r)), 0, m_r - 1);
    const int col = std::clamp(static_cast<int>(std::floor(p.x * m_c)), 0, m_c - 1);
    ra.region_of[i] = row * m_c + col;
    ++ra.counts[ra.region_of[i]];
  }
  return ra;
}

std::vector<double> distance_matrix(std::span<const Point> norm_coords,
                                    std::span<const int> subset) {
  const std::size_t k = subset.size();
  std::vector<double> a(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      a[i * k + j] = a[j * k + i] = euclid(norm_coords[subset[i]], norm_coords[subset[j]]);
  return a;
}

}  // namespace geld

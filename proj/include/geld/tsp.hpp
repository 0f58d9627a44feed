#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace geld {

class DegenerateInstanceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TourError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ExhaustedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

enum class MetricMode {
  continuous_euclid,
  // TSPLIB EUC_2D: each edge rounded to the nearest integer, halves away from zero.
  tsplib_rounded_euclid,
};

inline double euclid(const Point& a, const Point& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

inline double squared_distance(const Point& a, const Point& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

class TspInstance {
 public:
  static constexpr std::size_t kMinNodes = 4;

  /// Validates: at least kMinNodes rows (min_nodes overrides), finite
  /// coordinates, at least two distinct points.
  TspInstance(std::vector<Point> coords, MetricMode metric = MetricMode::continuous_euclid,
              std::string name = {}, std::size_t min_nodes = kMinNodes);

  std::size_t size() const { return coords_.size(); }
  std::span<const Point> coords() const { return coords_; }
  const Point& operator[](std::size_t i) const { return coords_[i]; }
  MetricMode metric() const { return metric_; }
  const std::string& name() const { return name_; }

  /// Edge length under the instance metric.
  double dist(std::size_t i, std::size_t j) const;

 private:
  std::vector<Point> coords_;
  MetricMode metric_;
  std::string name_;
};

class Tour {
 public:
  Tour() = default;
  /// Validates the permutation and caches the length. Throws TourError.
  Tour(const TspInstance& inst, std::vector<int> order);

  const std::vector<int>& order() const { return order_; }
  double length() const { return length_; }
  MetricMode metric() const { return metric_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<int> order_;
  double length_ = 0.0;
  MetricMode metric_ = MetricMode::continuous_euclid;
};

struct RegionAssignment {
  std::vector<int> region_of;
  std::vector<int> counts;
  int rows = 1;  // m_r
  int cols = 1;  // m_c
  int regions() const { return rows * cols; }
};

/// Shift by the componentwise minimum and divide by the largest coordinate
/// range over both axes. Aspect ratio is preserved. Throws
/// DegenerateInstanceError when all points coincide.
std::vector<Point> normalize_coords(std::span<const Point> coords);

void validate_permutation(std::span<const int> order, std::size_t n);

/// Closed-cycle length. Throws TourError on invalid permutations.
double tour_length(const TspInstance& inst, std::span<const int> order);
double tour_length(const TspInstance& inst, const Tour& tour);

/// Length of the open path order[0] → … → order.back().
double path_length(const TspInstance& inst, std::span<const int> order);

/// (model − opt) / opt × 100. Throws MetricError when opt ≤ 0.
double gap(double model_len, double opt_len);

/// The min(k_m, n_t) available nodes nearest to `anchor`, ascending by
/// distance with ties broken by lower index. `visited[i] != 0` marks node i as
/// unavailable. Throws ExhaustedError when nothing is available.
std::vector<int> k_nearest_available(std::span<const Point> coords, int anchor,
                                     std::span<const std::uint8_t> visited, int k_m);

/// Grid partition of normalized coordinates: row = min(⌊y·m_r⌋, m_r−1),
/// col = min(⌊x·m_c⌋, m_c−1), id = row·m_c + col.
RegionAssignment assign_regions(std::span<const Point> norm_coords, int m_r, int m_c);

/// Pairwise Euclidean distances over `subset` (row-major |subset|²).
std::vector<double> distance_matrix(std::span<const Point> norm_coords,
                                    std::span<const int> subset);

}  // namespace geld

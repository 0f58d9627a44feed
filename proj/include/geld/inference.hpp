#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "geld/encoder.hpp"
#include "geld/model.hpp"
#include "geld/tsp.hpp"

namespace geld {

/// Greedy open-path construction on one encoded (sub-)instance. Starts at
/// `start`, repeatedly takes the highest-probability candidate among the
/// k_m nearest available nodes, and finishes at `dest`. When start == dest the
/// result is a closed tour listed once from `start`.
template <typename T>
std::vector<int> greedy_decode(const NodeEmbeddings<T>& emb, std::span<const Point> norm_coords,
                               int start, int dest, const ModelParams<T>& params, int k_m);

/// Full greedy rollout from node 0.
template <typename T>
Tour greedy_rollout(const TspInstance& inst, const ModelParams<T>& params, int k_m);

struct BeamState {
  std::vector<std::vector<int>> paths;
  std::vector<double> log_prob;
  std::vector<std::vector<std::uint8_t>> visited;
};

/// Keeps the top-B prefixes by cumulative log-probability (ties: larger last
/// step log-probability, then lower beam index, then candidate order) and
/// returns the shortest completed tour.
template <typename T>
Tour beam_search(const TspInstance& inst, const ModelParams<T>& params, int beam_width, int k_m);

/// One of the eight symmetries of the unit square:
/// (x,y) (y,x) (x,1−y) (y,1−x) (1−x,y) (1−y,x) (1−x,1−y) (1−y,1−x).
std::vector<Point> augment8(std::span<const Point> norm_coords, int id);
/// Index of the inverse symmetry.
int augment8_inverse(int id);

enum class Direction { clockwise, counterclockwise };

struct RcPlan {
  int start = 0;   // i
  int length = 4;  // nodes in the segment, ≥ 4
  Direction direction = Direction::clockwise;
  int offset = 1;  // n_ε ∈ 1..n; the segment begins at (start + offset) mod n
  int augmentation = 0;

  void validate(std::size_t n) const;
};

/// Tour positions covered by the plan, in traversal order.
std::vector<int> segment_positions(const RcPlan& plan, std::size_t n);

/// Re-solves an open path over normalized, augmented segment coordinates.
/// Must return a permutation of 0..m−1 beginning with 0 and ending with m−1.
using SubPathSolver = std::function<std::vector<int>(std::span<const Point>)>;

/// Greedy model decoding with the segment's first node as the previous node and
/// its last node as the destination.
SubPathSolver model_path_solver(const InferParams& params, int k_m);

/// Extract the segment, renormalize, augment, re-solve; the replacement is
/// accepted only when strictly shorter.
Tour rc_step(const TspInstance& inst, const Tour& tour, const RcPlan& plan,
             const SubPathSolver& solver);

/// Random plan: length uniform in [4, min(k_m, n)], start uniform, offset
/// uniform in 1..n, direction by iteration parity, uniform augmentation.
RcPlan sample_rc_plan(std::size_t n, int k_m, int iteration, std::mt19937_64& rng);

/// Non-overlapping segments tiling one pass around the tour from a random
/// rotation; neighbouring segments share only their fixed endpoints.
std::vector<RcPlan> tile_segments(std::size_t n, int k_m, int iteration, std::mt19937_64& rng);

struct PrcStats {
  int iterations = 0;
  int accepted = 0;
  double initial_length = 0.0;
  double final_length = 0.0;
  std::vector<double> lengths;  // tour length after each iteration
};

/// Parallel re-construction: every iteration tiles the tour and re-solves each
/// segment. Length never increases. Throws std::invalid_argument when
/// iterations < 1.
Tour prc(const TspInstance& inst, const Tour& tour, const SubPathSolver& solver, int iterations,
         std::uint64_t seed, int k_m, PrcStats* stats = nullptr);
Tour prc(const TspInstance& inst, const Tour& tour, const InferParams& params, int iterations,
         std::uint64_t seed, int k_m, PrcStats* stats = nullptr);

}  // namespace geld

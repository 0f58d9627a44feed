#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <vector>

#include "geld/tsp.hpp"

namespace geld {

inline constexpr std::size_t kMaxBruteForceNodes = 10;

struct HeuristicResult {
  Tour tour;
  int iterations_used = 0;
  std::chrono::duration<double> wall_time{0};
};

/// Greedy nearest-unvisited chain from `start`; ties go to the lower index.
Tour nearest_neighbor(const TspInstance& inst, int start = 0);

/// First-improvement 2-opt. One iteration is a full sweep over all edge pairs;
/// stops at a local optimum or after `max_iters` sweeps.
Tour two_opt(const TspInstance& inst, const Tour& tour, int max_iters, int* sweeps_used = nullptr);

/// Seeded random insertion order; the first three nodes form the initial
/// cycle and every later node goes where it adds the least length.
Tour random_insertion(const TspInstance& inst, std::uint64_t seed);

/// Exact optimum by enumerating cycles through node 0 (with pruning on the
/// partial length). Requires n ≤ kMaxBruteForceNodes.
Tour brute_force_optimal(const TspInstance& inst);

/// Exact shortest Hamiltonian path over `coords` from index 0 to the last
/// index. Returns the visiting order. Requires size ≤ kMaxBruteForceNodes.
std::vector<int> brute_force_open_path(std::span<const Point> coords);

HeuristicResult run_nn_two_opt(const TspInstance& inst, int max_iters = 1000);
HeuristicResult run_random_insertion(const TspInstance& inst, std::uint64_t seed);
HeuristicResult run_brute_force(const TspInstance& inst);

}  // namespace geld

#include "geld/heuristics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "geld/neighbors.hpp"

namespace geld {

namespace {

using Clock = std::chrono::steady_clock;

struct PathSearch {
  std::size_t n;
  std::vector<double> d;
  std::vector<int> current, best;
  std::vector<std::uint8_t> used;
  double best_len = std::numeric_limits<double>::infinity();
  int last = -1;  // fixed final node for open paths, −1 for cycles

  void run(std::size_t depth, double len) {
    if (len >= best_len) return;
    const int tail = current[depth - 1];
    const std::size_t free_slots = last < 0 ? n : n - 1;
    if (depth == free_slots) {
      const double total = len + d[tail * n + (last < 0 ? current[0] : last)];
      if (total < best_len) {
        best_len = total;
        best.assign(current.begin(), current.begin() + depth);
        if (last >= 0) best.push_back(last);
      }
      return;
    }
    for (std::size_t v = 1; v < n; ++v) {
      if (used[v] || static_cast<int>(v) == last) continue;
      used[v] = 1;
      current[depth] = static_cast<int>(v);
      run(depth + 1, len + d[tail * n + v]);
      used[v] = 0;
    }
  }
};

template <typename DistFn>
PathSearch make_search(std::size_t n, DistFn&& dist) {
  PathSearch s;
  s.n = n;
  s.d.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s.d[i * n + j] = dist(i, j);
  s.current.assign(n, 0);
  s.used.assign(n, 0);
  s.used[0] = 1;
  return s;
}

}  // namespace

Tour nearest_neighbor(const TspInstance& inst, int start) {
  const std::size_t n = inst.size();
  if (start < 0 || static_cast<std::size_t>(start) >= n)
    throw std::invalid_argument("nearest_neighbor start out of range");
  NeighborGrid grid(inst.coords());
  std::vector<int> order;
  order.reserve(n);
  int cur = start;
  grid.remove(cur);
  order.push_back(cur);
  while (order.size() < n) {
    cur = grid.nearest(cur, 1).front();
    grid.remove(cur);
    order.push_back(cur);
  }
  return Tour(inst, std::move(order));
}

Tour two_opt(const TspInstance& inst, const Tour& tour, int max_iters, int* sweeps_used) {
  std::vector<int> t = tour.order();
  const std::size_t n = t.size();
  int sweeps = 0;
  while (sweeps < max_iters) {
    bool improved = false;
    for (std::size_t i = 0; i + 2 < n; ++i) {
      for (std::size_t j = i + 2; j < n; ++j) {
        if (i == 0 && j == n - 1) continue;
        const int a = t[i], b = t[i + 1], c = t[j], d = t[(j + 1) % n];
        const double delta = inst.dist(a, c) + inst.dist(b, d) - inst.dist(a, b) - inst.dist(c, d);
        if (delta < -1e-10) {
          std::reverse(t.begin() + i + 1, t.begin() + j + 1);
          improved = true;
        }
      }
    }
    ++sweeps;
    if (!improved) break;
  }
  if (sweeps_used) *sweeps_used = sweeps;
  return Tour(inst, std::move(t));
}

Tour random_insertion(const TspInstance& inst, std::uint64_t seed) {
  const std::size_t n = inst.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<int> cycle(order.begin(), order.begin() + std::min<std::size_t>(3, n));
  cycle.reserve(n);
  for (std::size_t idx = 3; idx < n; ++idx) {
    const int x = order[idx];
    std::size_t best_pos = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < cycle.size(); ++p) {
      const int a = cycle[p], b = cycle[(p + 1) % cycle.size()];
      const double cost = inst.dist(a, x) + inst.dist(x, b) - inst.dist(a, b);
      if (cost < best_cost) {
        best_cost = cost;
        best_pos = p;
      }
    }
    cycle.insert(cycle.begin() + best_pos + 1, x);
  }
  return Tour(inst, std::move(cycle));
}

Tour brute_force_optimal(const TspInstance& inst) {
  const std::size_t n = inst.size();
  if (n > kMaxBruteForceNodes)
    throw PreconditionError("brute force limited to " + std::to_string(kMaxBruteForceNodes) +
                            " nodes");
  auto s = make_search(n, [&](std::size_t i, std::size_t j) { return inst.dist(i, j); });
  s.run(1, 0.0);
  return Tour(inst, std::move(s.best));
}

std::vector<int> brute_force_open_path(std::span<const Point> coords) {
  const std::size_t n = coords.size();
  if (n > kMaxBruteForceNodes)
    throw PreconditionError("brute force limited to " + std::to_string(kMaxBruteForceNodes) +
                            " nodes");
  if (n <= 2) {
    std::vector<int> out(n);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  auto s = make_search(n, [&](std::size_t i, std::size_t j) { return euclid(coords[i], coords[j]); });
  s.last = static_cast<int>(n - 1);
  s.used[n - 1] = 1;
  s.run(1, 0.0);
  return s.best;
}

HeuristicResult run_nn_two_opt(const TspInstance& inst, int max_iters) {
  const auto t0 = Clock::now();
  HeuristicResult r;
  r.tour = two_opt(inst, nearest_neighbor(inst, 0), max_iters, &r.iterations_used);
  r.wall_time = Clock::now() - t0;
  return r;
}

HeuristicResult run_random_insertion(const TspInstance& inst, std::uint64_t seed) {
  const auto t0 = Clock::now();
  HeuristicResult r;
  r.tour = random_insertion(inst, seed);
  r.iterations_used = static_cast<int>(inst.size());
  r.wall_time = Clock::now() - t0;
  return r;
}

HeuristicResult run_brute_force(const TspInstance& inst) {
  const auto t0 = Clock::now();
  HeuristicResult r;
  r.tour = brute_force_optimal(inst);
  r.wall_time = Clock::now() - t0;
  return r;
}

}  // namespace geld

#include <random>

#include "doctest.h"
#include "geld/heuristics.hpp"
#include "oracles.hpp"

using namespace geld;

TEST_CASE("nearest neighbor") {
  TspInstance line({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}});
  CHECK(nearest_neighbor(line, 0).order() == std::vector<int>{0, 1, 2, 3, 4});
  TspInstance sq({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  CHECK(nearest_neighbor(sq, 0).length() == 4.0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    TspInstance inst(oracle::uniform_points(8, s));
    CHECK(nearest_neighbor(inst).length() >= brute_force_optimal(inst).length() - 1e-12);
  }
  CHECK_THROWS(nearest_neighbor(sq, 4));
}

TEST_CASE("two_opt") {
  TspInstance pent({{0, 0}, {2, 0}, {3, 2}, {1, 3}, {-1, 2}});
  const Tour opt = brute_force_optimal(pent);
  CHECK(two_opt(pent, opt, 1000).order() == opt.order());

  for (std::uint64_t s = 0; s < 20; ++s) {
    TspInstance inst(oracle::uniform_points(8, 40 + s));
    std::vector<int> order{0, 4, 1, 5, 2, 6, 3, 7};
    const Tour start(inst, order);
    int sweeps = 0;
    const Tour out = two_opt(inst, start, 1000, &sweeps);
    CHECK(out.length() <= start.length());
    CHECK(sweeps >= 1);
    // 2-opt closure: no single reversal improves the result.
    const auto& t = out.order();
    for (std::size_t i = 0; i + 2 < 8; ++i)
      for (std::size_t j = i + 2; j < 8; ++j) {
        if (i == 0 && j == 7) continue;
        std::vector<int> cand = t;
        std::reverse(cand.begin() + i + 1, cand.begin() + j + 1);
        CHECK(tour_length(inst, cand) >= out.length() - 1e-10);
      }
  }
}

TEST_CASE("random insertion") {
  TspInstance tri({{0, 0}, {3, 0}, {0, 4}}, MetricMode::continuous_euclid, "", 3);
  TspInstance sq({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CHECK(random_insertion(tri, seed).length() == 12.0);
    CHECK(random_insertion(sq, seed).length() == doctest::Approx(4.0).epsilon(1e-15));
  }
  CHECK(random_insertion(sq, 3).order() == random_insertion(sq, 3).order());

  // Replays the seeded order and checks each insertion against a scan.
  TspInstance inst(oracle::uniform_points(9, 77));
  std::vector<int> order(9);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(5);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> cycle(order.begin(), order.begin() + 3);
  for (int idx = 3; idx < 9; ++idx) {
    const int x = order[idx];
    double best = INFINITY;
    std::vector<int> best_cycle;
    for (std::size_t p = 0; p < cycle.size(); ++p) {
      std::vector<int> c = cycle;
      c.insert(c.begin() + p + 1, x);
      double len = 0;
      for (std::size_t i = 0; i < c.size(); ++i) len += inst.dist(c[i], c[(i + 1) % c.size()]);
      if (len < best - 1e-12) {
        best = len;
        best_cycle = c;
      }
    }
    cycle = best_cycle;
  }
  CHECK(random_insertion(inst, 5).order() == cycle);
}

TEST_CASE("brute force") {
  TspInstance sq({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  CHECK(brute_force_optimal(sq).length() == 4.0);
  TspInstance tri({{0, 0}, {3, 0}, {0, 4}}, MetricMode::continuous_euclid, "", 3);
  CHECK(brute_force_optimal(tri).length() == 12.0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    TspInstance inst(oracle::uniform_points(8, 200 + s));
    const double bf = brute_force_optimal(inst).length();
    CHECK(std::abs(bf - oracle::held_karp(inst)) < 1e-9);
    CHECK(bf <= random_insertion(inst, s).length() + 1e-12);
    CHECK(bf <= run_nn_two_opt(inst).tour.length() + 1e-12);
    CHECK(run_nn_two_opt(inst).tour.length() <= nearest_neighbor(inst).length() + 1e-12);
  }
  TspInstance big(oracle::uniform_points(11, 1));
  CHECK_THROWS_AS(brute_force_optimal(big), PreconditionError);
}

TEST_CASE("brute force open path") {
  const auto pts = oracle::uniform_points(7, 9);
  const auto path = brute_force_open_path(pts);
  REQUIRE(path.size() == 7);
  CHECK(path.front() == 0);
  CHECK(path.back() == 6);
  auto plen = [&](const std::vector<int>& p) {
    double s = 0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) s += euclid(pts[p[i]], pts[p[i + 1]]);
    return s;
  };
  std::vector<int> mid{1, 2, 3, 4, 5};
  double best = INFINITY;
  do {
    std::vector<int> p{0};
    p.insert(p.end(), mid.begin(), mid.end());
    p.push_back(6);
    best = std::min(best, plen(p));
  } while (std::next_permutation(mid.begin(), mid.end()));
  CHECK(plen(path) == doctest::Approx(best).epsilon(1e-12));
}

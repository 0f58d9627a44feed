#include <random>

#include "doctest.h"
#include "geld/heuristics.hpp"
#include "geld/inference.hpp"
#include "oracles.hpp"

using namespace geld;

namespace {

ModelConfig toy() {
  ModelConfig c;
  c.hidden = 16;
  c.heads = 4;
  c.decoder_layers = 2;
  return c;
}

SubPathSolver exact_solver() {
  return [](std::span<const Point> c) { return brute_force_open_path(c); };
}

}  // namespace

TEST_CASE("greedy rollout") {
  const auto p = InferParams::init(toy(), 1);
  TspInstance sq({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  const Tour t = greedy_rollout(sq, p, 100);
  CHECK(t.size() == 4);
  CHECK(t.length() >= 4.0);
  CHECK(t.order().front() == 0);

  TspInstance inst(oracle::uniform_points(60, 3));
  const Tour a = greedy_rollout(inst, p, 10);
  CHECK(a.order() == greedy_rollout(inst, p, 10).order());
  TspInstance five(oracle::uniform_points(5, 4));
  CHECK(greedy_rollout(five, p, 20).length() >= brute_force_optimal(five).length() - 1e-12);

  // Each step's choice lies among the k nearest unvisited nodes.
  std::vector<std::uint8_t> vis(60, 0);
  const auto norm = normalize_coords(inst.coords());
  vis[0] = 1;
  for (std::size_t i = 1; i < 60; ++i) {
    const auto knn = k_nearest_available(norm, a.order()[i - 1], vis, 10);
    CHECK(std::find(knn.begin(), knn.end(), a.order()[i]) != knn.end());
    vis[a.order()[i]] = 1;
  }
}

TEST_CASE("beam width one is greedy") {
  for (std::uint64_t s = 0; s < 12; ++s) {
    const auto p = InferParams::init(toy(), s);
    const std::size_t n = 10 + (s * 17) % 120;
    TspInstance inst(oracle::uniform_points(n, 50 + s));
    CHECK(beam_search(inst, p, 1, 12).order() == greedy_rollout(inst, p, 12).order());
  }
  CHECK_THROWS(beam_search(TspInstance(oracle::uniform_points(6, 1)), InferParams::init(toy(), 1), 0, 5));
}

TEST_CASE("wide beam") {
  const auto p = InferParams::init(toy(), 7);
  TspInstance inst(oracle::uniform_points(50, 9));
  const Tour b = beam_search(inst, p, 16, 10);
  CHECK(b.size() == 50);
  CHECK(b.length() > 0);

  for (std::uint64_t s = 0; s < 3; ++s) {
    TspInstance eight(oracle::uniform_points(8, 300 + s));
    const Tour full = beam_search(eight, p, 5040, 8);
    CHECK(full.length() == doctest::Approx(brute_force_optimal(eight).length()).epsilon(1e-12));
  }
}

TEST_CASE("augment8") {
  const auto pts = oracle::uniform_points(10, 2);
  CHECK(augment8(pts, 0) == pts);
  CHECK_THROWS(augment8(pts, 8));
  CHECK_THROWS(augment8(pts, -1));
  std::vector<int> all(10);
  std::iota(all.begin(), all.end(), 0);
  const auto d0 = distance_matrix(pts, all);
  for (int id = 0; id < 8; ++id) {
    const auto t = augment8(pts, id);
    const auto back = augment8(t, augment8_inverse(id));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(std::abs(back[i].x - pts[i].x) < 1e-15);
      CHECK(std::abs(back[i].y - pts[i].y) < 1e-15);
    }
    const auto d = distance_matrix(t, all);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(d[i] - d0[i]) < 1e-12);
  }
  std::vector<Point> one{{0.2, 0.7}};
  const std::vector<Point> want{{0.2, 0.7}, {0.7, 0.2}, {0.2, 0.3}, {0.7, 0.8},
                                {0.8, 0.7}, {0.3, 0.2}, {0.8, 0.3}, {0.3, 0.8}};
  for (int id = 0; id < 8; ++id) {
    CHECK(augment8(one, id)[0].x == doctest::Approx(want[id].x));
    CHECK(augment8(one, id)[0].y == doctest::Approx(want[id].y));
  }
}

TEST_CASE("segment positions wrap and reverse") {
  RcPlan plan;
  plan.start = 7;
  plan.offset = 2;
  plan.length = 5;
  CHECK(segment_positions(plan, 10) == std::vector<int>{9, 0, 1, 2, 3});
  plan.direction = Direction::counterclockwise;
  plan.start = 1;
  plan.offset = 10;
  CHECK(segment_positions(plan, 10) == std::vector<int>{1, 0, 9, 8, 7});
  plan.length = 3;
  CHECK_THROWS(segment_positions(plan, 10));
  plan.length = 4;
  plan.offset = 0;
  CHECK_THROWS(segment_positions(plan, 10));
  plan.offset = 3;
  plan.augmentation = 8;
  CHECK_THROWS(segment_positions(plan, 10));
}

TEST_CASE("rc_step") {
  const auto p = InferParams::init(toy(), 3);
  TspInstance inst(oracle::uniform_points(40, 6));
  const Tour start = random_insertion(inst, 1);
  std::mt19937_64 rng(4);
  Tour cur = start;
  const auto solver = model_path_solver(p, 20);
  for (int it = 0; it < 200; ++it) {
    const Tour next = rc_step(inst, cur, sample_rc_plan(40, 20, it, rng), solver);
    CHECK(next.length() <= cur.length());
    cur = next;
  }

  // An optimal 4-node segment on a line stays as it is.
  TspInstance line({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {3, 1}, {0, 1}});
  const Tour opt(line, {0, 1, 2, 3, 4, 5});
  RcPlan plan;
  plan.start = 0;
  plan.offset = 6;
  plan.length = 4;
  for (int aug = 0; aug < 8; ++aug) {
    plan.augmentation = aug;
    CHECK(rc_step(line, opt, plan, solver).order() == opt.order());
    CHECK(rc_step(line, opt, plan, exact_solver()).order() == opt.order());
  }
}

TEST_CASE("exact sub-solver sweeps reach the optimum") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    TspInstance inst(oracle::uniform_points(9, 500 + s));
    Tour cur = random_insertion(inst, s);
    for (int pass = 0; pass < 20; ++pass) {
      const double before = cur.length();
      for (int len = 4; len <= 9; ++len)
        for (int start = 0; start < 9; ++start)
          for (int dir = 0; dir < 2; ++dir) {
            RcPlan plan;
            plan.start = start;
            plan.offset = 9;
            plan.length = len;
            plan.direction = dir ? Direction::counterclockwise : Direction::clockwise;
            cur = rc_step(inst, cur, plan, exact_solver());
          }
      if (cur.length() == before) break;
    }
    CHECK(cur.length() == doctest::Approx(brute_force_optimal(inst).length()).epsilon(1e-12));
  }
}

TEST_CASE("tiling covers the cycle with shared endpoints") {
  std::mt19937_64 rng(2);
  for (std::size_t n : {4, 5, 9, 37, 200}) {
    for (int it = 0; it < 20; ++it) {
      const auto plans = tile_segments(n, 20, it, rng);
      REQUIRE(!plans.empty());
      std::vector<int> interior(n, 0), touched(n, 0);
      for (std::size_t k = 0; k < plans.size(); ++k) {
        CHECK(plans[k].length >= 4);
        CHECK(plans[k].length <= std::min<int>(20, n));
        CHECK((plans[k].direction == Direction::clockwise) == (it % 2 == 0));
        const auto pos = segment_positions(plans[k], n);
        for (std::size_t t = 0; t < pos.size(); ++t) {
          ++touched[pos[t]];
          if (t > 0 && t + 1 < pos.size()) ++interior[pos[t]];
        }
        if (k > 0) CHECK(segment_positions(plans[k - 1], n).back() == pos.front());
      }
      for (std::size_t i = 0; i < n; ++i) CHECK(interior[i] <= 1);
      for (std::size_t i = 0; i < n; ++i)
        if (interior[i]) CHECK(touched[i] == 1);
    }
  }
}

TEST_CASE("prc") {
  const auto p = InferParams::init(toy(), 5);
  TspInstance inst(oracle::uniform_points(120, 8));
  const Tour init = random_insertion(inst, 3);
  PrcStats stats;
  const Tour a = prc(inst, init, p, 15, 42, 20, &stats);
  CHECK(a.length() <= init.length());
  CHECK(stats.iterations == 15);
  CHECK(stats.final_length == a.length());
  CHECK(prc(inst, init, p, 15, 42, 20).order() == a.order());
  CHECK_THROWS_AS(prc(inst, init, p, 0, 42, 20), std::invalid_argument);

  Tour cur = init;
  for (int it = 0; it < 5; ++it) {
    const Tour next = prc(inst, cur, p, 1, 100 + it, 20);
    CHECK(next.length() <= cur.length());
    cur = next;
  }

  const Tour ex = prc(inst, init, exact_solver(), 10, 1, 10);
  CHECK(ex.length() < init.length());
}

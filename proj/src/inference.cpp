#include "geld/inference.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "geld/decoder.hpp"
#include "geld/neighbors.hpp"

namespace geld {

template <typename T>
std::vector<int> greedy_decode(const NodeEmbeddings<T>& emb, std::span<const Point> norm_coords,
                               int start, int dest, const ModelParams<T>& params, int k_m) {
  const std::size_t n = norm_coords.size();
  NeighborGrid grid(norm_coords);
  std::vector<int> path;
  path.reserve(n);
  path.push_back(start);
  grid.remove(start);
  grid.remove(dest);
  int prev = start;
  while (grid.alive() > 0) {
    const auto cands = grid.nearest(prev, k_m);
    int next = cands.front();
    if (cands.size() > 1) {
      const auto step = build_decoder_input<T>(emb, prev, dest, cands, norm_coords);
      const auto lp = step_log_probs(step, params);
      next = cands[std::max_element(lp.begin(), lp.end()) - lp.begin()];
    }
    grid.remove(next);
    path.push_back(next);
    prev = next;
  }
  if (dest != start) path.push_back(dest);
  return path;
}

template <typename T>
Tour greedy_rollout(const TspInstance& inst, const ModelParams<T>& params, int k_m) {
  const auto norm = normalize_coords(inst.coords());
  const auto emb = encode_normalized<T>(norm, params);
  return Tour(inst, greedy_decode(emb, norm, 0, 0, params, k_m));
}

template <typename T>
Tour beam_search(const TspInstance& inst, const ModelParams<T>& params, int beam_width, int k_m) {
  if (beam_width < 1) throw std::invalid_argument("beam width must be at least 1");
  const std::size_t n = inst.size();
  const auto norm = normalize_coords(inst.coords());
  const auto emb = encode_normalized<T>(norm, params);
  const NeighborGrid grid(norm);

  BeamState beams;
  beams.paths = {{0}};
  beams.log_prob = {0.0};
  beams.visited = {std::vector<std::uint8_t>(n, 0)};
  beams.visited[0][0] = 1;

  struct Child {
    double score;
    double step;
    std::size_t beam;
    std::size_t pos;
    int node;
  };
  std::vector<Child> children;
  for (std::size_t depth = 1; depth < n; ++depth) {
    children.clear();
    for (std::size_t b = 0; b < beams.paths.size(); ++b) {
      const int prev = beams.paths[b].back();
      const auto cands = grid.nearest(prev, k_m, beams.visited[b]);
      if (cands.size() == 1) {
        children.push_back({beams.log_prob[b], 0.0, b, 0, cands[0]});
        continue;
      }
      const auto step = build_decoder_input<T>(emb, prev, 0, cands, norm);
      const auto lp = step_log_probs(step, params);
      for (std::size_t c = 0; c < cands.size(); ++c) {
        const double s = static_cast<double>(lp[c]);
        children.push_back({beams.log_prob[b] + s, s, b, c, cands[c]});
      }
    }
    const std::size_t keep = std::min<std::size_t>(beam_width, children.size());
    std::partial_sort(children.begin(), children.begin() + keep, children.end(),
                      [](const Child& a, const Child& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.step != b.step) return a.step > b.step;
                        if (a.beam != b.beam) return a.beam < b.beam;
                        return a.pos < b.pos;
                      });
    BeamState next;
    next.paths.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
      const Child& c = children[i];
      next.paths.push_back(beams.paths[c.beam]);
      next.paths.back().push_back(c.node);
      next.visited.push_back(beams.visited[c.beam]);
      next.visited.back()[c.node] = 1;
      next.log_prob.push_back(c.score);
    }
    beams = std::move(next);
  }

  std::size_t best = 0;
  double best_len = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < beams.paths.size(); ++b) {
    const double len = tour_length(inst, beams.paths[b]);
    if (len < best_len) {
      best_len = len;
      best = b;
    }
  }
  return Tour(inst, beams.paths[best]);
}

std::vector<Point> augment8(std::span<const Point> c, int id) {
  if (id < 0 || id > 7) throw std::invalid_argument("augmentation id must be in 0..7");
  std::vector<Point> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double x = c[i].x, y = c[i].y;
    switch (id) {
      case 0: out[i] = {x, y}; break;
      case 1: out[i] = {y, x}; break;
      case 2: out[i] = {x, 1.0 - y}; break;
      case 3: out[i] = {y, 1.0 - x}; break;
      case 4: out[i] = {1.0 - x, y}; break;
      case 5: out[i] = {1.0 - y, x}; break;
      case 6: out[i] = {1.0 - x, 1.0 - y}; break;
      default: out[i] = {1.0 - y, 1.0 - x}; break;
    }
  }
  return out;
}

int augment8_inverse(int id) {
  // (y,1−x) and (1−y,x) are the two quarter turns; every other map is an involution.
  if (id == 3) return 5;
  if (id == 5) return 3;
  return id;
}

void RcPlan::validate(std::size_t n) const {
  if (length < 4 || static_cast<std::size_t>(length) > n)
    throw std::invalid_argument("RC segment length must lie in [4, n]");
  if (start < 0 || static_cast<std::size_t>(start) >= n)
    throw std::invalid_argument("RC start index out of range");
  if (offset < 1 || static_cast<std::size_t>(offset) > n)
    throw std::invalid_argument("RC offset must lie in 1..n");
  if (augmentation < 0 || augmentation > 7)
    throw std::invalid_argument("RC augmentation id must lie in 0..7");
}

std::vector<int> segment_positions(const RcPlan& plan, std::size_t n) {
  plan.validate(n);
  const long nn = static_cast<long>(n);
  const long s = (plan.start + plan.offset) % nn;
  std::vector<int> pos(plan.length);
  for (long t = 0; t < plan.length; ++t) {
    const long p = plan.direction == Direction::clockwise ? s + t : s - t;
    pos[t] = static_cast<int>(((p % nn) + nn) % nn);
  }
  return pos;
}

SubPathSolver model_path_solver(const InferParams& params, int k_m) {
  return [&params, k_m](std::span<const Point> coords) {
    const auto emb = encode_normalized<float>(coords, params);
    return greedy_decode<float>(emb, coords, 0, static_cast<int>(coords.size()) - 1, params, k_m);
  };
}

namespace {

bool valid_open_path(const std::vector<int>& order, std::size_t m) {
  if (order.size() != m || order.front() != 0 || order.back() != static_cast<int>(m) - 1)
    return false;
  std::vector<std::uint8_t> seen(m, 0);
  for (int v : order) {
    if (v < 0 || static_cast<std::size_t>(v) >= m || seen[v]) return false;
    seen[v] = 1;
  }
  return true;
}

// Applies the plan in place; returns true when the segment was replaced.
bool rc_apply(const TspInstance& inst, std::vector<int>& order, const RcPlan& plan,
              const SubPathSolver& solver) {
  const std::size_t n = order.size();
  const auto pos = segment_positions(plan, n);
  const std::size_t m = pos.size();
  std::vector<int> nodes(m);
  std::vector<Point> sub(m);
  for (std::size_t t = 0; t < m; ++t) {
    nodes[t] = order[pos[t]];
    sub[t] = inst[nodes[t]];
  }
  const bool degenerate =
      std::all_of(sub.begin(), sub.end(), [&](const Point& p) { return p == sub.front(); });
  if (degenerate) return false;
  const auto local = solver(augment8(normalize_coords(sub), plan.augmentation));
  if (!valid_open_path(local, m)) throw std::logic_error("sub-path solver returned an invalid path");

  std::vector<int> replaced(m);
  for (std::size_t t = 0; t < m; ++t) replaced[t] = nodes[local[t]];
  const double old_len = path_length(inst, nodes);
  const double new_len = path_length(inst, replaced);
  // The margin keeps a recomputed full-tour length from creeping up by rounding.
  if (!(new_len < old_len - 1e-12 * (1.0 + old_len))) return false;
  for (std::size_t t = 0; t < m; ++t) order[pos[t]] = replaced[t];
  return true;
}

}  // namespace

Tour rc_step(const TspInstance& inst, const Tour& tour, const RcPlan& plan,
             const SubPathSolver& solver) {
  std::vector<int> order = tour.order();
  if (!rc_apply(inst, order, plan, solver)) return tour;
  return Tour(inst, std::move(order));
}

RcPlan sample_rc_plan(std::size_t n, int k_m, int iteration, std::mt19937_64& rng) {
  if (n < 4) throw std::invalid_argument("RC needs at least 4 nodes");
  const int max_len = static_cast<int>(std::min<std::size_t>(std::max(k_m, 4), n));
  RcPlan plan;
  plan.length = std::uniform_int_distribution<int>(4, max_len)(rng);
  plan.start = std::uniform_int_distribution<int>(0, static_cast<int>(n) - 1)(rng);
  plan.offset = std::uniform_int_distribution<int>(1, static_cast<int>(n))(rng);
  plan.direction = iteration % 2 == 0 ? Direction::clockwise : Direction::counterclockwise;
  plan.augmentation = std::uniform_int_distribution<int>(0, 7)(rng);
  return plan;
}

std::vector<RcPlan> tile_segments(std::size_t n, int k_m, int iteration, std::mt19937_64& rng) {
  if (n < 4) throw std::invalid_argument("RC needs at least 4 nodes");
  const int nn = static_cast<int>(n);
  const int max_len = std::min(std::max(k_m, 4), nn);
  const Direction dir = iteration % 2 == 0 ? Direction::clockwise : Direction::counterclockwise;
  const int rotation = std::uniform_int_distribution<int>(1, nn)(rng);
  std::vector<RcPlan> plans;
  // Directional positions 0..n, where position n is position 0 again.
  int pos = 0;
  while (nn - pos + 1 >= 4) {
    const int len = std::min(std::uniform_int_distribution<int>(4, max_len)(rng), nn - pos + 1);
    RcPlan plan;
    plan.length = len;
    plan.direction = dir;
    plan.offset = rotation;
    plan.start = dir == Direction::clockwise ? pos % nn : (nn - pos) % nn;
    plan.augmentation = std::uniform_int_distribution<int>(0, 7)(rng);
    plans.push_back(plan);
    pos += len - 1;
  }
  return plans;
}

Tour prc(const TspInstance& inst, const Tour& tour, const SubPathSolver& solver, int iterations,
         std::uint64_t seed, int k_m, PrcStats* stats) {
  if (iterations < 1) throw std::invalid_argument("PRC needs at least one iteration");
  std::mt19937_64 rng(seed);
  std::vector<int> order = tour.order();
  int accepted = 0;
  std::vector<double> lengths;
  for (int it = 0; it < iterations; ++it) {
    // Segments share only endpoints, so applying them one after another is
    // equivalent to applying them together.
    for (const RcPlan& plan : tile_segments(inst.size(), k_m, it, rng))
      accepted += rc_apply(inst, order, plan, solver) ? 1 : 0;
    if (stats) lengths.push_back(tour_length(inst, order));
  }
  Tour out(inst, std::move(order));
  if (stats) *stats = {iterations, accepted, tour.length(), out.length(), std::move(lengths)};
  return out;
}

Tour prc(const TspInstance& inst, const Tour& tour, const InferParams& params, int iterations,
         std::uint64_t seed, int k_m, PrcStats* stats) {
  return prc(inst, tour, model_path_solver(params, k_m), iterations, seed, k_m, stats);
}

template std::vector<int> greedy_decode<float>(const NodeEmbeddings<float>&,
                                               std::span<const Point>, int, int,
                                               const ModelParams<float>&, int);
template std::vector<int> greedy_decode<double>(const NodeEmbeddings<double>&,
                                                std::span<const Point>, int, int,
                                                const ModelParams<double>&, int);
template Tour greedy_rollout<float>(const TspInstance&, const ModelParams<float>&, int);
template Tour greedy_rollout<double>(const TspInstance&, const ModelParams<double>&, int);
template Tour beam_search<float>(const TspInstance&, const ModelParams<float>&, int, int);
template Tour beam_search<double>(const TspInstance&, const ModelParams<double>&, int, int);

}  // namespace geld

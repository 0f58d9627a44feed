#include "geld/generate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

namespace geld {

Pattern parse_pattern(const std::string& name) {
  if (name == "uniform") return Pattern::uniform;
  if (name == "clustered") return Pattern::clustered;
  if (name == "explosion") return Pattern::explosion;
  if (name == "implosion") return Pattern::implosion;
  throw std::invalid_argument("unknown pattern: " + name);
}

std::string pattern_name(Pattern p) {
  switch (p) {
    case Pattern::uniform: return "uniform";
    case Pattern::clustered: return "clustered";
    case Pattern::explosion: return "explosion";
    case Pattern::implosion: return "implosion";
  }
  return "uniform";
}

namespace {

std::vector<Point> uniform(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point> pts(n);
  for (auto& p : pts) {
    p.x = u(rng);
    p.y = u(rng);
  }
  return pts;
}

std::vector<Point> clustered(std::size_t n, std::mt19937_64& rng, const GeneratorParams& g) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int k = std::uniform_int_distribution<int>(g.min_clusters, g.max_clusters)(rng);
  std::vector<Point> centers(k);
  for (auto& c : centers) {
    c.x = u(rng);
    c.y = u(rng);
  }
  std::uniform_int_distribution<int> pick(0, k - 1);
  std::normal_distribution<double> noise(0.0, g.cluster_sigma);
  std::vector<Point> pts(n);
  for (auto& p : pts) {
    const Point& c = centers[pick(rng)];
    p.x = std::clamp(c.x + noise(rng), 0.0, 1.0);
    p.y = std::clamp(c.y + noise(rng), 0.0, 1.0);
  }
  return pts;
}

std::vector<Point> radial(std::size_t n, std::mt19937_64& rng, const GeneratorParams& g,
                          bool explode, std::vector<Point>* centers) {
  auto pts = uniform(n, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Point c{u(rng), u(rng)};
  if (centers) centers->push_back(c);
  const double r = g.radius;
  for (auto& p : pts) {
    const double dx = p.x - c.x, dy = p.y - c.y;
    const double d = std::sqrt(dx * dx + dy * dy);
    if (d >= r) continue;
    if (!explode) {
      p = {c.x + 0.5 * dx, c.y + 0.5 * dy};
      continue;
    }
    double ux, uy;
    if (d > 0) {
      ux = dx / d;
      uy = dy / d;
    } else {
      const double a = 2.0 * std::numbers::pi * u(rng);
      ux = std::cos(a);
      uy = std::sin(a);
    }
    const double nd = r + (r - d);
    p = {c.x + nd * ux, c.y + nd * uy};
    // Rounding can leave a point a hair inside the circle.
    while (std::hypot(p.x - c.x, p.y - c.y) < r) p = {p.x + 1e-15 * ux, p.y + 1e-15 * uy};
  }
  return pts;
}

}  // namespace

std::vector<TspInstance> generate_instances(Pattern pattern, std::size_t n, std::size_t count,
                                            std::uint64_t seed, const GeneratorParams& params,
                                            std::vector<Point>* centers) {
  if (n < TspInstance::kMinNodes) throw std::invalid_argument("instances need at least 4 nodes");
  std::mt19937_64 rng(seed);
  std::vector<TspInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<Point> pts;
    switch (pattern) {
      case Pattern::uniform: pts = uniform(n, rng); break;
      case Pattern::clustered: pts = clustered(n, rng, params); break;
      case Pattern::explosion: pts = radial(n, rng, params, true, centers); break;
      case Pattern::implosion: pts = radial(n, rng, params, false, centers); break;
    }
    char name[96];
    std::snprintf(name, sizeof name, "%s-%zu-%06zu", pattern_name(pattern).c_str(), n, i);
    out.emplace_back(std::move(pts), MetricMode::continuous_euclid, name);
  }
  return out;
}

}  // namespace geld

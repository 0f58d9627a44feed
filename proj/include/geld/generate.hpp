#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geld/tsp.hpp"

namespace geld {

enum class Pattern { uniform, clustered, explosion, implosion };

/// Throws std::invalid_argument for unknown names.
Pattern parse_pattern(const std::string& name);
std::string pattern_name(Pattern p);

struct GeneratorParams {
  double cluster_sigma = 0.05;
  int min_clusters = 3;
  int max_clusters = 8;
  double radius = 0.3;  // explosion / implosion
};

/// Deterministic per (pattern, n, count, seed, params). When `centers` is set,
/// it receives the radial centre of each explosion/implosion instance.
///  uniform    i.i.d. on [0,1]²
///  clustered  3–8 uniform centres, Gaussian points around a random centre, clipped to [0,1]²
///  explosion  uniform points; those within `radius` of a random centre c are
///             reflected radially to distance radius + (radius − d)
///  implosion  uniform points; those within `radius` of c move halfway to c
std::vector<TspInstance> generate_instances(Pattern pattern, std::size_t n, std::size_t count,
                                            std::uint64_t seed, const GeneratorParams& params = {},
                                            std::vector<Point>* centers = nullptr);

}  // namespace geld

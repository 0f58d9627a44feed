#include <cstdio>
#include <map>
#include <sstream>

#include "geld/io.hpp"

namespace geld {

nlohmann::json RunReport::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  // Aggregates per method, in first-appearance order.
  std::vector<std::string> methods;
  struct Acc {
    double length = 0, seconds = 0, gap = 0;
    std::size_t count = 0, gaps = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : rows) {
    rows_j.push_back({{"name", r.name},
                      {"n", r.n},
                      {"method", r.method},
                      {"length", r.length},
                      {"gap_pct", r.gap_pct ? nlohmann::json(*r.gap_pct) : nlohmann::json(nullptr)},
                      {"seconds", r.seconds},
                      {"seed", r.seed}});
    if (!acc.count(r.method)) methods.push_back(r.method);
    Acc& a = acc[r.method];
    a.length += r.length;
    a.seconds += r.seconds;
    ++a.count;
    if (r.gap_pct) {
      a.gap += *r.gap_pct;
      ++a.gaps;
    }
  }
  nlohmann::json agg = nlohmann::json::array();
  for (const auto& m : methods) {
    const Acc& a = acc[m];
    agg.push_back({{"method", m},
                   {"count", a.count},
                   {"mean_length", a.length / a.count},
                   {"mean_gap_pct", a.gaps ? nlohmann::json(a.gap / a.gaps) : nlohmann::json(nullptr)},
                   {"mean_seconds", a.seconds / a.count}});
  }
  return {{"rows", rows_j}, {"aggregate", agg}};
}

RunReport RunReport::from_json(const nlohmann::json& j) {
  RunReport rep;
  for (const auto& r : j.at("rows")) {
    ReportRow row;
    row.name = r.at("name").get<std::string>();
    row.n = r.at("n").get<std::size_t>();
    row.method = r.at("method").get<std::string>();
    row.length = r.at("length").get<double>();
    if (!r.at("gap_pct").is_null()) row.gap_pct = r.at("gap_pct").get<double>();
    row.seconds = r.at("seconds").get<double>();
    row.seed = r.at("seed").get<std::uint64_t>();
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

std::string RunReport::to_table() const {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s %8s %-10s %14s %9s %10s\n", "name", "n", "method", "length",
                "gap(%)", "time(s)");
  out << buf;
  for (const auto& r : rows) {
    char gap[32] = "";
    if (r.gap_pct) std::snprintf(gap, sizeof gap, "%.3f", *r.gap_pct);
    std::snprintf(buf, sizeof buf, "%-28s %8zu %-10s %14.6f %9s %10.4f\n", r.name.c_str(), r.n,
                  r.method.c_str(), r.length, gap, r.seconds);
    out << buf;
  }
  const nlohmann::json summary = to_json();
  for (const auto& a : summary.at("aggregate")) {
    char gap[32] = "";
    if (!a.at("mean_gap_pct").is_null())
      std::snprintf(gap, sizeof gap, "%.3f", a.at("mean_gap_pct").get<double>());
    std::snprintf(buf, sizeof buf, "%-28s %8zu %-10s %14.6f %9s %10.4f\n", "mean",
                  a.at("count").get<std::size_t>(), a.at("method").get<std::string>().c_str(),
                  a.at("mean_length").get<double>(), gap, a.at("mean_seconds").get<double>());
    out << buf;
  }
  return out.str();
}

}  // namespace geld

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "geld/io.hpp"

namespace geld {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    lines.push_back(trim(text.substr(pos, end - pos)));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return lines;
}

double parse_double(const std::string& tok, std::size_t line_no) {
  double v = 0;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
    throw MalformedLineError("line " + std::to_string(line_no) + ": bad number '" + tok + "'");
  return v;
}

long parse_long(const std::string& tok, std::size_t line_no) {
  long v = 0;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
    throw MalformedLineError("line " + std::to_string(line_no) + ": bad integer '" + tok + "'");
  return v;
}

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TspInstance parse_tsplib(std::string_view text) {
  const auto lines = split_lines(text);
  std::string name, type, ewt;
  long dimension = -1;
  bool continuous = false;
  std::size_t i = 0;
  bool have_section = false;
  for (; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    if (upper(line) == "EOF") break;
    if (upper(line).rfind("NODE_COORD_SECTION", 0) == 0) {
      have_section = true;
      ++i;
      break;
    }
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      const std::string key = upper(line);
      if (key.find("_SECTION") != std::string::npos)
        throw UnsupportedFormatError("unsupported section " + key);
      throw MalformedLineError("line " + std::to_string(i + 1) + ": expected 'KEY : VALUE'");
    }
    const std::string key = upper(trim(std::string_view(line).substr(0, colon)));
    const std::string value = trim(std::string_view(line).substr(colon + 1));
    if (key == "NAME") name = value;
    else if (key == "TYPE") type = upper(value);
    else if (key == "DIMENSION") dimension = parse_long(value, i + 1);
    else if (key == "EDGE_WEIGHT_TYPE") ewt = upper(value);
    else if (key == "METRIC_MODE") continuous = upper(value) == "CONTINUOUS";
  }
  if (!type.empty() && type != "TSP") throw UnsupportedFormatError("unsupported TYPE " + type);
  if (ewt.empty()) throw MissingFieldError("missing EDGE_WEIGHT_TYPE");
  if (ewt != "EUC_2D") throw UnsupportedFormatError("unsupported EDGE_WEIGHT_TYPE " + ewt);
  if (dimension < 0) throw MissingFieldError("missing DIMENSION");
  if (!have_section) throw MissingFieldError("missing NODE_COORD_SECTION");

  std::vector<Point> coords(static_cast<std::size_t>(dimension));
  std::vector<std::uint8_t> seen(coords.size(), 0);
  long rows = 0;
  for (; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    if (upper(line) == "EOF") break;
    const auto tok = tokens(line);
    if (tok.size() != 3)
      throw MalformedLineError("line " + std::to_string(i + 1) + ": expected 'id x y'");
    const long id = parse_long(tok[0], i + 1);
    const double x = parse_double(tok[1], i + 1), y = parse_double(tok[2], i + 1);
    ++rows;
    if (rows > dimension)
      throw DimensionMismatchError("more coordinate rows than DIMENSION " + std::to_string(dimension));
    if (id < 1 || id > dimension) throw NodeIdError("node id " + std::to_string(id) + " out of range");
    if (seen[id - 1]) throw NodeIdError("node id " + std::to_string(id) + " repeated");
    seen[id - 1] = 1;
    coords[id - 1] = {x, y};
  }
  if (rows != dimension)
    throw DimensionMismatchError("DIMENSION " + std::to_string(dimension) + " but " +
                                 std::to_string(rows) + " coordinate rows");
  return TspInstance(std::move(coords),
                     continuous ? MetricMode::continuous_euclid : MetricMode::tsplib_rounded_euclid,
                     name);
}

std::string write_tsplib(const TspInstance& inst, std::string_view comment) {
  std::ostringstream out;
  out << "NAME : " << (inst.name().empty() ? "unnamed" : inst.name()) << "\n";
  out << "TYPE : TSP\n";
  if (!comment.empty()) out << "COMMENT : " << comment << "\n";
  out << "DIMENSION : " << inst.size() << "\n";
  out << "EDGE_WEIGHT_TYPE : EUC_2D\n";
  if (inst.metric() == MetricMode::continuous_euclid) out << "METRIC_MODE : CONTINUOUS\n";
  out << "NODE_COORD_SECTION\n";
  char buf[96];
  for (std::size_t i = 0; i < inst.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu %.17g %.17g\n", i + 1, inst[i].x, inst[i].y);
    out << buf;
  }
  out << "EOF\n";
  return out.str();
}

TspInstance load_tsplib(const std::filesystem::path& path) { return parse_tsplib(read_file(path)); }

void save_tsplib(const std::filesystem::path& path, const TspInstance& inst) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << write_tsplib(inst);
}

std::vector<int> parse_tsplib_tour(std::string_view text) {
  const auto lines = split_lines(text);
  std::vector<int> order;
  bool in_section = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string u = upper(lines[i]);
    if (!in_section) {
      if (u == "TOUR_SECTION") in_section = true;
      continue;
    }
    if (u == "EOF") break;
    for (const auto& t : tokens(lines[i])) {
      const long id = parse_long(t, i + 1);
      if (id == -1) return order;
      if (id < 1) throw NodeIdError("tour node id " + t + " out of range");
      order.push_back(static_cast<int>(id - 1));
    }
  }
  if (!in_section) throw MissingFieldError("missing TOUR_SECTION");
  return order;
}

}  // namespace geld

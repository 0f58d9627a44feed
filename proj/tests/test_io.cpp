#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "geld/generate.hpp"
#include "geld/inference.hpp"
#include "geld/io.hpp"
#include "geld/training.hpp"

using namespace geld;

namespace {

std::string fixture(const std::string& rel) {
  std::ifstream in(std::string(GELD_FIXTURES) + "/" + rel, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ModelConfig toy() {
  ModelConfig c;
  c.hidden = 16;
  c.heads = 4;
  c.decoder_layers = 2;
  return c;
}

bool bit_equal(const InferParams& a, const InferParams& b) {
  std::vector<std::vector<float>> av, bv;
  a.for_each([&](const std::string&, const nn::Tensor<float>& t) { av.push_back(t.data); });
  b.for_each([&](const std::string&, const nn::Tensor<float>& t) { bv.push_back(t.data); });
  if (av.size() != bv.size()) return false;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (av[i].size() != bv[i].size()) return false;
    if (std::memcmp(av[i].data(), bv[i].data(), av[i].size() * sizeof(float)) != 0) return false;
  }
  return true;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("geld_test_io_" + name);
}

}  // namespace

TEST_CASE("minimal TSPLIB file") {
  const auto inst = parse_tsplib(fixture("minimal4.tsp"));
  REQUIRE(inst.size() == 4);
  CHECK(inst.name() == "square4");
  CHECK(inst.metric() == MetricMode::tsplib_rounded_euclid);
  CHECK(inst[0].x == 0.0);
  CHECK(inst[2].x == 10.0);
  CHECK(inst[2].y == 10.0);
  CHECK(inst[3].y == 10.0);
  CHECK(Tour(inst, {0, 1, 2, 3}).length() == 40.0);
}

TEST_CASE("explicit weights are unsupported") {
  CHECK_THROWS_AS(parse_tsplib(fixture("explicit.tsp")), UnsupportedFormatError);
}

TEST_CASE("malformed corpus maps to distinct error classes") {
  CHECK_THROWS_AS(parse_tsplib(fixture("malformed/dimension_mismatch.tsp")), DimensionMismatchError);
  CHECK_THROWS_AS(parse_tsplib(fixture("malformed/missing_dimension.tsp")), MissingFieldError);
  CHECK_THROWS_AS(parse_tsplib(fixture("malformed/bad_number.tsp")), MalformedLineError);
  CHECK_THROWS_AS(parse_tsplib(fixture("malformed/repeated_id.tsp")), NodeIdError);
  CHECK_THROWS_AS(parse_tsplib(fixture("malformed/atsp_type.tsp")), UnsupportedFormatError);
}

TEST_CASE("berlin52 round trip and optimal tour") {
  const auto inst = parse_tsplib(fixture("berlin52.tsp"));
  REQUIRE(inst.size() == 52);
  CHECK(inst[0].x == 565.0);
  CHECK(inst[51].y == 245.0);
  const auto again = parse_tsplib(write_tsplib(inst));
  REQUIRE(again.size() == inst.size());
  CHECK(again.metric() == inst.metric());
  CHECK(again.name() == inst.name());
  for (std::size_t i = 0; i < inst.size(); ++i) {
    CHECK(again[i].x == inst[i].x);
    CHECK(again[i].y == inst[i].y);
  }
  const auto order = parse_tsplib_tour(fixture("berlin52.opt.tour"));
  CHECK(Tour(inst, order).length() == 7542.0);
}

TEST_CASE("continuous instances survive a TSPLIB round trip") {
  const auto insts = generate_instances(Pattern::clustered, 30, 2, 3);
  for (const auto& inst : insts) {
    const auto again = parse_tsplib(write_tsplib(inst, "generated"));
    CHECK(again.metric() == MetricMode::continuous_euclid);
    for (std::size_t i = 0; i < inst.size(); ++i) {
      CHECK(again[i].x == inst[i].x);
      CHECK(again[i].y == inst[i].y);
    }
  }
}

TEST_CASE("checkpoint round trip is bit-identical") {
  const auto p = InferParams::init(toy(), 11);
  const auto bytes = serialize_checkpoint(p);
  const auto q = deserialize_checkpoint(bytes);
  CHECK(bit_equal(p, q));
  CHECK(q.config.hidden == 16);
  CHECK(q.config.decoder_layers == 2);

  const auto path = temp_path("roundtrip.geld");
  save_checkpoint(p, path);
  CHECK(bit_equal(p, load_checkpoint(path)));
  std::filesystem::remove(path);
}

TEST_CASE("damaged checkpoints are rejected") {
  const auto bytes = serialize_checkpoint(InferParams::init(toy(), 12));
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{30}}) {
    std::vector<std::uint8_t> shorter(bytes.begin(), bytes.begin() + cut);
    CHECK_THROWS_AS(deserialize_checkpoint(shorter), ChecksumError);
  }
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), ChecksumError);

  auto versioned = bytes;
  versioned[8] = 2;
  CHECK_THROWS_AS(deserialize_checkpoint(versioned), CheckpointVersionError);

  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(magic), CheckpointFormatError);
}

TEST_CASE("trained checkpoint reproduces greedy tours") {
  const auto data = label_brute_force(generate_instances(Pattern::uniform, 8, 16, 21));
  TrainConfig cfg;
  cfg.k_m = 8;
  cfg.n_max = 16;
  cfg.n_e1 = 1;
  cfg.sl_batch = 8;
  cfg.lr1 = 1e-3;
  auto tp = TrainParams::init(toy(), 9);
  train_stage1(tp, data, cfg);
  const auto p = tp.cast<float>();
  const auto q = deserialize_checkpoint(serialize_checkpoint(p));
  for (const auto& inst : generate_instances(Pattern::uniform, 40, 5, 22))
    CHECK(greedy_rollout(inst, p, 20).order() == greedy_rollout(inst, q, 20).order());
}

TEST_CASE("generator determinism and patterns") {
  for (Pattern pat : {Pattern::uniform, Pattern::clustered, Pattern::explosion, Pattern::implosion}) {
    const auto a = generate_instances(pat, 50, 3, 7);
    const auto b = generate_instances(pat, 50, 3, 7);
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].name() == b[i].name());
      for (std::size_t k = 0; k < a[i].size(); ++k) {
        CHECK(a[i][k].x == b[i][k].x);
        CHECK(a[i][k].y == b[i][k].y);
      }
    }
    CHECK(parse_pattern(pattern_name(pat)) == pat);
  }
  CHECK(generate_instances(Pattern::uniform, 10, 1, 7)[0].name() == "uniform-10-000000");
  CHECK_THROWS_AS(parse_pattern("spiral"), std::invalid_argument);
  CHECK_THROWS_AS(generate_instances(Pattern::uniform, 3, 1, 7), std::invalid_argument);
}

TEST_CASE("uniform means lie in the law-of-large-numbers band") {
  const auto inst = generate_instances(Pattern::uniform, 10000, 1, 5)[0];
  double mx = 0, my = 0;
  for (const auto& p : inst.coords()) {
    mx += p.x;
    my += p.y;
  }
  mx /= 10000;
  my /= 10000;
  CHECK(mx >= 0.48);
  CHECK(mx <= 0.52);
  CHECK(my >= 0.48);
  CHECK(my <= 0.52);
}

TEST_CASE("explosion leaves the disc empty, implosion fills it") {
  GeneratorParams g;
  std::vector<Point> centers;
  const auto ex = generate_instances(Pattern::explosion, 2000, 10, 8, g, &centers);
  REQUIRE(centers.size() == 10);
  for (std::size_t i = 0; i < ex.size(); ++i)
    for (const auto& p : ex[i].coords())
      CHECK(std::hypot(p.x - centers[i].x, p.y - centers[i].y) >= g.radius);

  centers.clear();
  const auto im = generate_instances(Pattern::implosion, 2000, 10, 8, g, &centers);
  for (std::size_t i = 0; i < im.size(); ++i) {
    std::size_t inner = 0;
    for (const auto& p : im[i].coords())
      if (std::hypot(p.x - centers[i].x, p.y - centers[i].y) < 0.5 * g.radius) ++inner;
    // Without the pull, about pi * 0.15² * 2000 ≈ 141 points would land in the
    // inner disc; with it, everything from the outer disc lands there too.
    CHECK(inner > 141);
  }
}

TEST_CASE("clustered points stay in the unit square") {
  for (const auto& inst : generate_instances(Pattern::clustered, 500, 5, 4))
    for (const auto& p : inst.coords()) {
      CHECK(p.x >= 0.0);
      CHECK(p.x <= 1.0);
      CHECK(p.y >= 0.0);
      CHECK(p.y <= 1.0);
    }
}

TEST_CASE("reports") {
  RunReport rep;
  rep.rows.push_back({"a", 10, "greedy", 3.0, 1.5, 0.25, 7});
  rep.rows.push_back({"b", 10, "greedy", 5.0, std::nullopt, 0.75, 7});
  rep.rows.push_back({"a", 10, "ri", 4.0, 2.5, 0.5, 7});
  const auto j = rep.to_json();
  REQUIRE(j.at("rows").size() == 3);
  CHECK(j["rows"][1]["gap_pct"].is_null());
  for (const char* key : {"name", "n", "method", "length", "gap_pct", "seconds", "seed"})
    CHECK(j["rows"][0].contains(key));
  const auto& agg = j.at("aggregate");
  REQUIRE(agg.size() == 2);
  CHECK(agg[0]["method"] == "greedy");
  CHECK(agg[0]["mean_length"].get<double>() == 4.0);
  CHECK(agg[0]["mean_gap_pct"].get<double>() == 1.5);
  CHECK(agg[1]["mean_gap_pct"].get<double>() == 2.5);

  const auto back = RunReport::from_json(nlohmann::json::parse(j.dump()));
  REQUIRE(back.rows.size() == 3);
  CHECK(back.rows[0].length == 3.0);
  CHECK(!back.rows[1].gap_pct);
  CHECK(*back.rows[2].gap_pct == 2.5);

  const auto table = rep.to_table();
  CHECK(table.find("gap(%)") != std::string::npos);
  CHECK(table.find("mean") != std::string::npos);
}

#include <random>

#include "doctest.h"
#include "geld/encoder.hpp"
#include "oracles.hpp"

using namespace geld;
using nn::Tensor;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.hidden = 16;
  c.heads = 4;
  c.decoder_layers = 1;
  return c;
}

Tensor<double> head_slice(const Tensor<double>& t, std::size_t off, std::size_t d) {
  Tensor<double> out({t.rows(), d});
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t c = 0; c < d; ++c) out(i, c) = t(i, off + c);
  return out;
}

}  // namespace

TEST_CASE("embed_nodes") {
  auto p = TrainParams::init(small_config(), 1);
  const auto pts = oracle::uniform_points(6, 2);
  std::fill(p.enc.embed_w.data.begin(), p.enc.embed_w.data.end(), 0.0);
  for (std::size_t j = 0; j < 16; ++j) p.enc.embed_b.data[j] = 0.1 * j;
  auto e = embed_nodes<double>(pts, p.enc);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 16; ++j) CHECK(e(i, j) == 0.1 * j);

  std::fill(p.enc.embed_b.data.begin(), p.enc.embed_b.data.end(), 0.0);
  p.enc.embed_w(0, 0) = 1.0;
  p.enc.embed_w(1, 1) = 1.0;
  e = embed_nodes<double>(pts, p.enc);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(e(i, 0) == pts[i].x);
    CHECK(e(i, 1) == pts[i].y);
  }

  auto q = TrainParams::init(small_config(), 5);
  Tensor<double> x({6, 2});
  for (std::size_t i = 0; i < 6; ++i) {
    x(i, 0) = pts[i].x;
    x(i, 1) = pts[i].y;
  }
  CHECK(embed_nodes<double>(pts, q.enc).data == nn::linear_forward(x, q.enc.embed_w, q.enc.embed_b).data);
}

TEST_CASE("rala m=1 reduces to one weighted average") {
  std::mt19937_64 rng(7);
  for (std::size_t n : {8, 64, 512}) {
    const auto pts = oracle::uniform_points(n, n);
    const auto regions = assign_regions(pts, 1, 1);
    auto q = oracle::random_tensor(n, 8, rng), k = oracle::random_tensor(n, 8, rng),
         v = oracle::random_tensor(n, 8, rng);
    RalaCache<double> cache;
    const auto out = rala_attention(q, k, v, regions, &cache);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(out(i, c) - out(0, c)) < 1e-10);
    std::vector<double> logits(n);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t c = 0; c < 8; ++c) s += cache.proxies(0, c) * k(j, c);
      logits[j] = s;
    }
    const auto w = oracle::softmax(logits);
    for (std::size_t c = 0; c < 8; ++c) {
      double ref = 0;
      for (std::size_t j = 0; j < n; ++j) ref += w[j] * v(j, c);
      CHECK(std::abs(out(0, c) - ref) < 1e-10);
    }
  }
}

TEST_CASE("rala proxies and weights") {
  std::mt19937_64 rng(3);
  // One node in each of four cells of a 2×2 grid.
  std::vector<Point> pts{{0.1, 0.1}, {0.9, 0.1}, {0.1, 0.9}, {0.9, 0.9}};
  const auto regions = assign_regions(pts, 2, 2);
  auto q = oracle::random_tensor(4, 5, rng), k = oracle::random_tensor(4, 5, rng),
       v = oracle::random_tensor(4, 5, rng);
  RalaCache<double> cache;
  rala_attention(q, k, v, regions, &cache);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 5; ++c)
      CHECK(cache.proxies(regions.region_of[i], c) == q(i, c));

  // Empty regions keep a zero proxy; rows of both weight matrices sum to one.
  const auto sparse = assign_regions(std::vector<Point>{{0.1, 0.1}, {0.2, 0.1}, {0.15, 0.2}, {0.1, 0.15}}, 3, 3);
  rala_attention(q, k, v, sparse, &cache);
  for (int r = 1; r < 9; ++r)
    for (std::size_t c = 0; c < 5; ++c) CHECK(cache.proxies(r, c) == 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0;
    for (double w : cache.q_weight.row(i)) s += w;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  for (std::size_t r = 0; r < 9; ++r) {
    double s = 0;
    for (double w : cache.k_weight.row(r)) s += w;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }

  CHECK_THROWS_AS(rala_attention(oracle::random_tensor(3, 5, rng), k, v, regions), DimensionError);
}

TEST_CASE("rala matches the loop oracle") {
  std::mt19937_64 rng(12);
  const auto pts = oracle::uniform_points(12, 4);
  const auto regions = assign_regions(pts, 2, 2);
  auto q = oracle::random_tensor(12, 6, rng), k = oracle::random_tensor(12, 6, rng),
       v = oracle::random_tensor(12, 6, rng);
  const auto out = rala_attention(q, k, v, regions);
  const auto ref = oracle::rala(oracle::to_mat(q), oracle::to_mat(k), oracle::to_mat(v),
                                regions.region_of, 4);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t c = 0; c < 6; ++c) CHECK(std::abs(out(i, c) - ref[i][c]) < 1e-10);

  const auto outf = rala_attention(q.cast<float>(), k.cast<float>(), v.cast<float>(), regions);
  for (std::size_t i = 0; i < outf.size(); ++i) CHECK(std::abs(outf.data[i] - out.data[i]) < 1e-4);
}

TEST_CASE("rala backward") {
  std::mt19937_64 rng(21);
  const auto pts = oracle::uniform_points(10, 6);
  const auto regions = assign_regions(pts, 2, 3);
  auto q = oracle::random_tensor(10, 4, rng), k = oracle::random_tensor(10, 4, rng),
       v = oracle::random_tensor(10, 4, rng), up = oracle::random_tensor(10, 4, rng);
  auto loss = [&] {
    const auto o = rala_attention(q, k, v, regions);
    double s = 0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o.data[i] * up.data[i];
    return s;
  };
  RalaCache<double> cache;
  rala_attention(q, k, v, regions, &cache);
  const auto g = rala_attention_backward(q, k, v, regions, cache, up);
  q.grad = g.dq.data;
  k.grad = g.dk.data;
  v.grad = g.dv.data;
  q.requires_grad = k.requires_grad = v.requires_grad = true;
  std::vector<nn::NamedParam> params{{"q", &q}, {"k", &k}, {"v", &v}};
  nn::GradCheckOptions opt;
  opt.coords_per_param = 40;
  CHECK(nn::check_gradients(loss, params, opt).max_rel_diff < 1e-6);
}

TEST_CASE("encode determinism and invariance") {
  const auto p = InferParams::init(small_config(), 3);
  auto pts = oracle::uniform_points(40, 8);
  TspInstance a(pts);
  const auto e1 = encode(a, p), e2 = encode(a, p);
  CHECK(e1.E.data == e2.E.data);
  CHECK(e1.size() == 40);
  for (auto& pt : pts) pt = {3.0 * pt.x - 7.0, 3.0 * pt.y + 11.0};
  const auto e3 = encode(TspInstance(pts), p);
  for (std::size_t i = 0; i < e1.E.size(); ++i) CHECK(std::abs(e3.E.data[i] - e1.E.data[i]) < 1e-5);

  const auto pd = TrainParams::init(small_config(), 3);
  const auto ed1 = encode(a, pd);
  for (auto& pt : pts) pt = {0.5 * pt.x + 2.0, 0.5 * pt.y - 1.0};
  const auto ed2 = encode(TspInstance(pts), pd);
  for (std::size_t i = 0; i < ed1.E.size(); ++i) CHECK(std::abs(ed2.E.data[i] - ed1.E.data[i]) < 1e-12);
}

TEST_CASE("multi-head encoder attention is per-head rala") {
  auto p = TrainParams::init(small_config(), 9);
  const auto pts = oracle::uniform_points(30, 1);
  EncoderCache cache;
  encode_normalized<double>(pts, p, &cache);
  const std::size_t d = 4;
  for (std::size_t hd = 0; hd < 4; ++hd) {
    const auto ref = oracle::rala(oracle::to_mat(head_slice(cache.q, hd * d, d)),
                                  oracle::to_mat(head_slice(cache.k, hd * d, d)),
                                  oracle::to_mat(head_slice(cache.v, hd * d, d)),
                                  cache.regions.region_of, 9);
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t c = 0; c < d; ++c) CHECK(std::abs(cache.o(i, hd * d + c) - ref[i][c]) < 1e-10);
  }
}

TEST_CASE("encoder backward") {
  auto p = TrainParams::init(small_config(), 4);
  enable_grads(p);
  const auto pts = oracle::uniform_points(15, 2);
  std::mt19937_64 rng(1);
  const auto up = oracle::random_tensor(15, 16, rng);
  auto loss = [&] {
    const auto e = encode_normalized<double>(pts, p);
    double s = 0;
    for (std::size_t i = 0; i < up.size(); ++i) s += e.E.data[i] * up.data[i];
    return s;
  };
  EncoderCache cache;
  encode_normalized<double>(pts, p, &cache);
  zero_grads(p);
  encode_backward(p, cache, up);
  auto named = named_params(p);
  std::vector<nn::NamedParam> enc;
  for (auto& np : named)
    if (np.name.rfind("enc.", 0) == 0) enc.push_back(np);
  nn::GradCheckOptions opt;
  opt.coords_per_param = 12;
  const auto rep = nn::check_gradients(loss, enc, opt);
  CHECK(rep.max_rel_diff < 1e-5);
  CHECK(rep.flagged.empty());
}

TEST_CASE("dense attention reference") {
  std::mt19937_64 rng(2);
  auto q = oracle::random_tensor(9, 4, rng), k = oracle::random_tensor(9, 4, rng),
       v = oracle::random_tensor(9, 4, rng);
  const auto out = dense_attention(q, k, v);
  const auto qm = oracle::to_mat(q), km = oracle::to_mat(k), vm = oracle::to_mat(v);
  for (std::size_t i = 0; i < 9; ++i) {
    std::vector<double> s(9);
    for (std::size_t j = 0; j < 9; ++j) {
      s[j] = 0;
      for (std::size_t c = 0; c < 4; ++c) s[j] += qm[i][c] * km[j][c];
    }
    const auto w = oracle::softmax(s);
    for (std::size_t c = 0; c < 4; ++c) {
      double r = 0;
      for (std::size_t j = 0; j < 9; ++j) r += w[j] * vm[j][c];
      CHECK(std::abs(out(i, c) - r) < 1e-12);
    }
  }
}

TEST_CASE("encode_batch matches single encodes") {
  const auto p = InferParams::init(small_config(), 6);
  std::vector<TspInstance> batch{TspInstance(oracle::uniform_points(20, 1)),
                                 TspInstance(oracle::uniform_points(20, 2))};
  const auto out = encode_batch<float>(batch, p);
  REQUIRE(out.size() == 2);
  CHECK(out[1].E.data == encode(batch[1], p).E.data);
  CHECK(out[0].source_hash != out[1].source_hash);
}

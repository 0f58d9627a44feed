#include <random>

#include "doctest.h"
#include "geld/decoder.hpp"
#include "oracles.hpp"

using namespace geld;
using nn::Tensor;

namespace {

ModelConfig cfg(int layers) {
  ModelConfig c;
  c.hidden = 16;
  c.heads = 4;
  c.decoder_layers = layers;
  return c;
}

// Decoder parameters with non-trivial λ, gains and role vectors.
TrainParams perturbed(int layers, std::uint64_t seed) {
  auto p = TrainParams::init(cfg(layers), seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& l : p.dec.layers) {
    for (auto& v : l.dist_scale.data) v = g(rng);
    for (auto& v : l.attn_norm.data) v += g(rng);
    for (auto& v : l.ff_b1.data) v = g(rng);
  }
  for (auto& v : p.dec.role_prev.data) v = g(rng);
  for (auto& v : p.dec.role_dest.data) v = g(rng);
  return p;
}

}  // namespace

TEST_CASE("build_decoder_input placement") {
  const auto p = TrainParams::init(cfg(1), 1);
  const auto pts = oracle::uniform_points(12, 3);
  const auto emb = encode_normalized<double>(pts, p);
  std::vector<int> one{4};
  const auto s1 = build_decoder_input(emb, 0, 11, std::span<const int>(one), pts);
  CHECK(s1.input.rows() == 3);
  CHECK(s1.input.cols() == 16);
  std::vector<int> five{3, 7, 1, 9, 2};
  const auto s = build_decoder_input(emb, 5, 8, std::span<const int>(five), pts);
  REQUIRE(s.input.rows() == 7);
  for (std::size_t j = 0; j < 16; ++j) {
    CHECK(s.input(0, j) == emb.E(5, j));
    CHECK(s.input(6, j) == emb.E(8, j));
    CHECK(s.input(2, j) == emb.E(7, j));
  }
  std::vector<int> ids{5, 3, 7, 1, 9, 2, 8};
  const auto ref = distance_matrix(pts, ids);
  for (std::size_t i = 0; i < 49; ++i) CHECK(std::abs(s.dist.data[i] - ref[i]) < 1e-12);
  std::vector<int> none;
  CHECK_THROWS_AS(build_decoder_input(emb, 5, 8, std::span<const int>(none), pts), ExhaustedError);
}

TEST_CASE("decoder layer matches the loop oracle") {
  const auto p = perturbed(1, 5);
  std::mt19937_64 rng(8);
  const auto d = oracle::random_tensor(8, 16, rng);
  const auto pts = oracle::uniform_points(8, 2);
  std::vector<int> all{0, 1, 2, 3, 4, 5, 6, 7};
  Tensor<double> a = Tensor<double>::from({8, 8}, distance_matrix(pts, all));
  const auto out = decoder_layer(d, a, p.dec.layers[0], 4);
  const auto ref = oracle::decoder_layer(oracle::to_mat(d), oracle::to_mat(a), p.dec.layers[0], 4);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 16; ++j) CHECK(std::abs(out(i, j) - ref[i][j]) < 1e-10);
}

TEST_CASE("distance bias switches off") {
  auto p = perturbed(1, 6);
  std::mt19937_64 rng(9);
  const auto d = oracle::random_tensor(6, 16, rng);
  const auto a = oracle::random_tensor(6, 6, rng);
  Tensor<double> zero({6, 6});
  for (auto& v : p.dec.layers[0].dist_scale.data) v = -800.0;
  const auto biased = decoder_layer(d, a, p.dec.layers[0], 4);
  const auto plain = decoder_layer(d, zero, p.dec.layers[0], 4);
  for (std::size_t i = 0; i < biased.size(); ++i) CHECK(std::abs(biased.data[i] - plain.data[i]) < 1e-12);
}

TEST_CASE("two identical rows split attention evenly") {
  const auto p = perturbed(1, 7);
  std::mt19937_64 rng(1);
  auto row = oracle::random_tensor(1, 16, rng);
  Tensor<double> d({2, 16});
  for (std::size_t j = 0; j < 16; ++j) d(0, j) = d(1, j) = row.data[j];
  DecoderLayerCache cache;
  decoder_layer(d, Tensor<double>({2, 2}), p.dec.layers[0], 4, &cache);
  for (const auto& w : cache.weights)
    for (double x : w.data) CHECK(x == 0.5);
}

TEST_CASE("next-node distribution") {
  const auto p = perturbed(2, 3);
  std::mt19937_64 rng(4);
  auto refined = oracle::random_tensor(3, 16, rng);
  const auto single = next_node_distribution(refined, p.dec);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == 1.0);

  auto r4 = oracle::random_tensor(4, 16, rng);
  for (std::size_t j = 0; j < 16; ++j) r4(2, j) = r4(1, j);
  const auto even = next_node_distribution(r4, p.dec);
  CHECK(even[0] == doctest::Approx(0.5));
  CHECK(even[1] == doctest::Approx(0.5));

  auto r = oracle::random_tensor(9, 16, rng);
  const auto probs = next_node_distribution(r, p.dec);
  std::vector<double> scores(9);
  std::vector<bool> mask(9, false);
  mask[0] = mask[8] = true;
  double sum = 0;
  for (std::size_t i = 0; i < 9; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 16; ++j) s += r(i, j) * p.dec.w_out.data[j];
    scores[i] = mask[i] ? -INFINITY : s;
  }
  const auto ref = oracle::softmax(scores);
  CHECK(ref[0] == 0.0);
  CHECK(ref[8] == 0.0);
  for (std::size_t c = 0; c < 7; ++c) {
    CHECK(std::abs(probs[c] - ref[c + 1]) < 1e-12);
    sum += probs[c];
  }
  CHECK(std::abs(sum - 1.0) < 1e-9);
  CHECK(std::max_element(probs.begin(), probs.end()) - probs.begin() ==
        std::max_element(ref.begin(), ref.end()) - ref.begin() - 1);
  const auto lp = next_node_log_probs(r, p.dec);
  for (std::size_t c = 0; c < 7; ++c) CHECK(std::abs(std::exp(lp[c]) - probs[c]) < 1e-12);
}

TEST_CASE("decoder is equivariant to candidate order") {
  const auto p = perturbed(2, 11);
  const auto pts = oracle::uniform_points(20, 5);
  const auto emb = encode_normalized<double>(pts, p);
  std::vector<int> c{3, 9, 14, 1, 7, 12};
  std::vector<int> perm{12, 1, 9, 7, 3, 14};
  const auto a = step_log_probs(build_decoder_input(emb, 0, 19, std::span<const int>(c), pts), p);
  const auto b = step_log_probs(build_decoder_input(emb, 0, 19, std::span<const int>(perm), pts), p);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::size_t j = std::find(perm.begin(), perm.end(), c[i]) - perm.begin();
    CHECK(std::abs(a[i] - b[j]) < 1e-12);
  }
  CHECK(step_log_probs(build_decoder_input(emb, 0, 19, std::span<const int>(c), pts), p) == a);
}

TEST_CASE("decoder backward through every layer") {
  auto p = perturbed(3, 13);
  enable_grads(p);
  const auto pts = oracle::uniform_points(10, 8);
  const auto emb = encode_normalized<double>(pts, p);
  std::vector<int> c{2, 5, 6, 8, 1};
  auto step = build_decoder_input(emb, 3, 0, std::span<const int>(c), pts);
  step.input.enable_grad();
  const std::size_t target = 2;
  auto loss = [&] {
    const auto refined = decode_refine(step, p);
    const auto scores = masked_scores(refined, p.dec);
    const std::vector<double> logits(scores.begin() + 1, scores.end() - 1);
    return nn::cross_entropy(logits, target).loss;
  };
  zero_grads(p);
  DecoderCache cache;
  const auto refined = decode_refine(step, p, &cache);
  const auto scores = masked_scores(refined, p.dec);
  const std::vector<double> logits(scores.begin() + 1, scores.end() - 1);
  const auto ce = nn::cross_entropy(logits, target);
  const auto din = decode_backward(p, step, cache, ce.grad);
  step.input.grad = din.data;

  auto named = named_params(p);
  std::vector<nn::NamedParam> dec{{"input", &step.input}};
  for (auto& np : named)
    if (np.name.rfind("dec.", 0) == 0) dec.push_back(np);
  nn::GradCheckOptions opt;
  opt.coords_per_param = 10;
  const auto rep = nn::check_gradients(loss, dec, opt);
  // The last layer's ff_b2 has an exactly zero gradient (a shared shift of all
  // candidate scores), so its entries are pure finite-difference noise.
  CHECK(rep.max_rel_diff < 1e-4);
  CHECK(rep.flagged.empty());
}

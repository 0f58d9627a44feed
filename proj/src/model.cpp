#include "geld/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace geld {

void ModelConfig::validate() const {
  if (hidden < 1 || heads < 1 || hidden % heads != 0)
    throw std::invalid_argument("hidden size must be a positive multiple of the head count");
  if (decoder_layers < 1) throw std::invalid_argument("decoder needs at least one layer");
  if (ff_mult < 1) throw std::invalid_argument("feed-forward multiplier must be positive");
  if (region_rows < 1 || region_cols < 1) throw std::invalid_argument("region grid must be >= 1x1");
}

namespace {

template <typename T, typename Fn>
void visit_layer(DecoderLayerParams<T>& l, const std::string& p, Fn&& fn) {
  fn(p + ".attn_norm", l.attn_norm);
  fn(p + ".wq", l.wq);
  fn(p + ".wk", l.wk);
  fn(p + ".wv", l.wv);
  fn(p + ".wo", l.wo);
  fn(p + ".dist_scale", l.dist_scale);
  fn(p + ".ff_norm", l.ff_norm);
  fn(p + ".ff_w1", l.ff_w1);
  fn(p + ".ff_b1", l.ff_b1);
  fn(p + ".ff_w2", l.ff_w2);
  fn(p + ".ff_b2", l.ff_b2);
}

template <typename T, typename Fn>
void visit_all(ModelParams<T>& m, Fn&& fn) {
  auto& e = m.enc;
  fn("enc.embed_w", e.embed_w);
  fn("enc.embed_b", e.embed_b);
  fn("enc.attn_norm", e.attn_norm);
  fn("enc.wq", e.wq);
  fn("enc.wk", e.wk);
  fn("enc.wv", e.wv);
  fn("enc.wo", e.wo);
  fn("enc.ff_norm", e.ff_norm);
  fn("enc.ff_w1", e.ff_w1);
  fn("enc.ff_b1", e.ff_b1);
  fn("enc.ff_w2", e.ff_w2);
  fn("enc.ff_b2", e.ff_b2);
  fn("dec.role_prev", m.dec.role_prev);
  fn("dec.role_dest", m.dec.role_dest);
  for (std::size_t i = 0; i < m.dec.layers.size(); ++i)
    visit_layer(m.dec.layers[i], "dec.layer" + std::to_string(i), fn);
  fn("dec.w_out", m.dec.w_out);
}

}  // namespace

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t h = config.hidden, f = static_cast<std::size_t>(config.hidden) * config.ff_mult;
  ModelParams<T> m;
  m.config = config;
  auto& e = m.enc;
  e.embed_w = nn::Tensor<T>({2, h});
  e.embed_b = nn::Tensor<T>({h});
  e.attn_norm = nn::Tensor<T>({h}, T(1));
  e.wq = e.wk = e.wv = e.wo = nn::Tensor<T>({h, h});
  e.ff_norm = nn::Tensor<T>({h}, T(1));
  e.ff_w1 = nn::Tensor<T>({h, f});
  e.ff_b1 = nn::Tensor<T>({f});
  e.ff_w2 = nn::Tensor<T>({f, h});
  e.ff_b2 = nn::Tensor<T>({h});
  m.dec.role_prev = nn::Tensor<T>({h});
  m.dec.role_dest = nn::Tensor<T>({h});
  m.dec.layers.resize(config.decoder_layers);
  for (auto& l : m.dec.layers) {
    l.attn_norm = nn::Tensor<T>({h}, T(1));
    l.wq = l.wk = l.wv = l.wo = nn::Tensor<T>({h, h});
    l.dist_scale = nn::Tensor<T>({static_cast<std::size_t>(config.heads)});
    l.ff_norm = nn::Tensor<T>({h}, T(1));
    l.ff_w1 = nn::Tensor<T>({h, f});
    l.ff_b1 = nn::Tensor<T>({f});
    l.ff_w2 = nn::Tensor<T>({f, h});
    l.ff_b2 = nn::Tensor<T>({h});
  }
  m.dec.w_out = nn::Tensor<T>({h, 1});

  std::mt19937_64 rng(seed);
  m.for_each([&](const std::string&, nn::Tensor<T>& t) {
    if (t.rank() != 2) return;  // gains, biases, λ, role vectors keep their constants
    const double bound = std::sqrt(1.0 / static_cast<double>(t.shape[0]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : t.data) v = static_cast<T>(u(rng));
  });
  return m;
}

template <typename T>
void ModelParams<T>::for_each(
    const std::function<void(const std::string&, nn::Tensor<T>&)>& fn) {
  visit_all(*this, fn);
}

template <typename T>
void ModelParams<T>::for_each(
    const std::function<void(const std::string&, const nn::Tensor<T>&)>& fn) const {
  visit_all(const_cast<ModelParams<T>&>(*this),
            [&](const std::string& name, nn::Tensor<T>& t) { fn(name, t); });
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.config = config;
  out.dec.layers.resize(dec.layers.size());
  std::vector<const nn::Tensor<T>*> src;
  for_each([&](const std::string&, const nn::Tensor<T>& t) { src.push_back(&t); });
  std::size_t i = 0;
  out.for_each([&](const std::string&, nn::Tensor<U>& t) { t = src[i++]->template cast<U>(); });
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t total = 0;
  for_each([&](const std::string&, const nn::Tensor<T>& t) { total += t.size(); });
  return total;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;

std::vector<nn::NamedParam> named_params(TrainParams& params) {
  std::vector<nn::NamedParam> out;
  params.for_each([&](const std::string& name, nn::Tensor<double>& t) { out.push_back({name, &t}); });
  return out;
}

void enable_grads(TrainParams& params) {
  params.for_each([](const std::string&, nn::Tensor<double>& t) { t.enable_grad(); });
}

void zero_grads(TrainParams& params) {
  params.for_each([](const std::string&, nn::Tensor<double>& t) { t.zero_grad(); });
}

}  // namespace geld

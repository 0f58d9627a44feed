#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "geld/numeric.hpp"

namespace geld {

struct ModelConfig {
  int hidden = 128;
  int heads = 8;
  int decoder_layers = 6;
  int ff_mult = 4;
  int region_rows = 3;  // m_r
  int region_cols = 3;  // m_c

  int head_dim() const { return hidden / heads; }
  int regions() const { return region_rows * region_cols; }
  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct EncoderParams {
  nn::Tensor<T> embed_w;  // 2×h
  nn::Tensor<T> embed_b;  // h
  nn::Tensor<T> attn_norm;
  nn::Tensor<T> wq, wk, wv, wo;  // h×h
  nn::Tensor<T> ff_norm;
  nn::Tensor<T> ff_w1, ff_b1;  // h×4h, 4h
  nn::Tensor<T> ff_w2, ff_b2;  // 4h×h, h
};

template <typename T>
struct DecoderLayerParams {
  nn::Tensor<T> attn_norm;
  nn::Tensor<T> wq, wk, wv, wo;
  nn::Tensor<T> dist_scale;  // one λ per head; bias is −softplus(λ)·A
  nn::Tensor<T> ff_norm;
  nn::Tensor<T> ff_w1, ff_b1, ff_w2, ff_b2;
};

template <typename T>
struct DecoderParams {
  // Added to the previous-node and destination rows so the layers can tell
  // the two context tokens apart.
  nn::Tensor<T> role_prev, role_dest;
  std::vector<DecoderLayerParams<T>> layers;
  nn::Tensor<T> w_out;  // h×1
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  EncoderParams<T> enc;
  DecoderParams<T> dec;

  /// Allocates every tensor for `config`. Weights are uniform in
  /// ±sqrt(1/fan_in); norm gains are 1; biases, λ and role vectors are 0.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  /// Visits every learnable tensor with a stable name, in a fixed order.
  void for_each(const std::function<void(const std::string&, nn::Tensor<T>&)>& fn);
  void for_each(const std::function<void(const std::string&, const nn::Tensor<T>&)>& fn) const;

  template <typename U>
  ModelParams<U> cast() const;

  std::size_t parameter_count() const;
};

using TrainParams = ModelParams<double>;
using InferParams = ModelParams<float>;

std::vector<nn::NamedParam> named_params(TrainParams& params);
void enable_grads(TrainParams& params);
void zero_grads(TrainParams& params);

}  // namespace geld

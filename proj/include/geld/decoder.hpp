#pragma once

// Local-view decoder: attention over (previous node, k candidates,
// destination) with a per-head distance penalty, then a masked softmax over
// the candidate rows.

#include <span>
#include <vector>

#include "geld/encoder.hpp"
#include "geld/model.hpp"
#include "geld/numeric.hpp"
#include "geld/tsp.hpp"

namespace geld {

template <typename T>
struct DecoderStep {
  int prev = -1;
  int dest = -1;
  std::vector<int> candidates;
  nn::Tensor<T> input;  // (k+2)×h: prev row, candidate rows, destination row
  nn::Tensor<T> dist;   // (k+2)×(k+2) Euclidean distances over normalized coordinates

  std::size_t k() const { return candidates.size(); }
};

/// Throws ExhaustedError for an empty candidate list.
template <typename T>
DecoderStep<T> build_decoder_input(const NodeEmbeddings<T>& emb, int prev, int dest,
                                   std::span<const int> candidates,
                                   std::span<const Point> norm_coords);

struct DecoderLayerCache {
  nn::Tensor<double> in, x1, inv1, q, k, v, o, mid, x2, inv2, z, act;
  std::vector<nn::Tensor<double>> weights;  // per-head attention matrices
};

/// Pre-norm attention with logits Q_h·K_hᵀ/√d − softplus(λ_h)·A, residual;
/// then pre-norm feed-forward, residual.
template <typename T>
nn::Tensor<T> decoder_layer(const nn::Tensor<T>& d, const nn::Tensor<T>& a,
                            const DecoderLayerParams<T>& layer, int heads,
                            DecoderLayerCache* cache = nullptr);

/// Returns dD and accumulates the layer's parameter gradients.
nn::Tensor<double> decoder_layer_backward(DecoderLayerParams<double>& layer, int heads,
                                          const nn::Tensor<double>& a,
                                          const DecoderLayerCache& cache,
                                          const nn::Tensor<double>& dout);

struct DecoderCache {
  std::vector<DecoderLayerCache> layers;
  nn::Tensor<double> refined;
};

/// Role offsets on the context rows, then every decoder layer.
template <typename T>
nn::Tensor<T> decode_refine(const DecoderStep<T>& step, const ModelParams<T>& params,
                            DecoderCache* cache = nullptr);

/// Scores D_i·W_out for all k+2 rows with the previous/destination rows set
/// to −∞.
template <typename T>
std::vector<T> masked_scores(const nn::Tensor<T>& refined, const DecoderParams<T>& params);

/// Probabilities over the k candidates (sum 1).
template <typename T>
std::vector<T> next_node_distribution(const nn::Tensor<T>& refined, const DecoderParams<T>& params);

/// Log-probabilities over the k candidates.
template <typename T>
std::vector<T> next_node_log_probs(const nn::Tensor<T>& refined, const DecoderParams<T>& params);

/// Convenience: full step from inputs to candidate log-probabilities.
template <typename T>
std::vector<T> step_log_probs(const DecoderStep<T>& step, const ModelParams<T>& params);

/// Backpropagates d(candidate logits) (length k) through scoring and every
/// layer. Returns d(step.input).
nn::Tensor<double> decode_backward(TrainParams& params, const DecoderStep<double>& step,
                                   const DecoderCache& cache, std::span<const double> dlogits);

}  // namespace geld

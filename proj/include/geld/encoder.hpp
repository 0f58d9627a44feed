#pragma once

// Global-view encoder: coordinate embedding followed by one multi-head
// region-average linear attention (RALA) block and a feed-forward block.

#include <cstdint>
#include <span>
#include <vector>

#include "geld/model.hpp"
#include "geld/numeric.hpp"
#include "geld/tsp.hpp"

namespace geld {

template <typename T>
struct NodeEmbeddings {
  nn::Tensor<T> E;  // n×h
  std::uint64_t source_hash = 0;
  std::size_t size() const { return E.rows(); }
};

/// FNV-1a digest of the raw coordinate bytes.
std::uint64_t coords_digest(std::span<const Point> coords);

/// E = coords·W + b.
template <typename T>
nn::Tensor<T> embed_nodes(std::span<const Point> norm_coords, const EncoderParams<T>& params);

template <typename T>
struct RalaCache {
  nn::Tensor<T> proxies;  // m×d, mean query per region (zero when empty)
  nn::Tensor<T> q_weight;  // n×m
  nn::Tensor<T> k_weight;  // m×n
  nn::Tensor<T> kv;        // m×d, K_w·V
};

/// Single-head RALA. Q, K, V are n×d; returns Q_w·(K_w·V). Throws
/// DimensionError when row counts disagree with `regions`.
template <typename T>
nn::Tensor<T> rala_attention(const nn::Tensor<T>& q, const nn::Tensor<T>& k,
                             const nn::Tensor<T>& v, const RegionAssignment& regions,
                             RalaCache<T>* cache = nullptr);

struct RalaGrads {
  nn::Tensor<double> dq, dk, dv;
};

RalaGrads rala_attention_backward(const nn::Tensor<double>& q, const nn::Tensor<double>& k,
                                  const nn::Tensor<double>& v, const RegionAssignment& regions,
                                  const RalaCache<double>& cache, const nn::Tensor<double>& dout);

/// Reference softmax(Q·Kᵀ)·V, row by row, O(n²d) time and O(n) scratch.
template <typename T>
nn::Tensor<T> dense_attention(const nn::Tensor<T>& q, const nn::Tensor<T>& k,
                              const nn::Tensor<T>& v);

struct EncoderCache {
  std::vector<Point> coords;
  RegionAssignment regions;
  nn::Tensor<double> e0, x1, inv1, q, k, v, o, e1, x2, inv2, z, act;
  std::vector<nn::Tensor<double>> qh, kh, vh;
  std::vector<RalaCache<double>> heads;
};

enum class EncoderAttention { rala, dense };

/// Embedding + attention block + feed-forward block over already-normalized
/// coordinates. `cache` (double only) keeps what encode_backward needs.
template <typename T>
NodeEmbeddings<T> encode_normalized(std::span<const Point> norm_coords,
                                    const ModelParams<T>& params, EncoderCache* cache = nullptr,
                                    EncoderAttention attention = EncoderAttention::rala);

/// Normalizes the instance, then encodes it.
template <typename T>
NodeEmbeddings<T> encode(const TspInstance& inst, const ModelParams<T>& params);

template <typename T>
std::vector<NodeEmbeddings<T>> encode_batch(std::span<const TspInstance> instances,
                                            const ModelParams<T>& params);

/// Accumulates encoder parameter gradients from dE (n×h).
void encode_backward(TrainParams& params, const EncoderCache& cache, const nn::Tensor<double>& de);

}  // namespace geld

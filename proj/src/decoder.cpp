#include "geld/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace geld {

using nn::Tensor;

template <typename T>
DecoderStep<T> build_decoder_input(const NodeEmbeddings<T>& emb, int prev, int dest,
                                   std::span<const int> candidates,
                                   std::span<const Point> norm_coords) {
  if (candidates.empty()) throw ExhaustedError("decoder step without candidates");
  DecoderStep<T> step;
  step.prev = prev;
  step.dest = dest;
  step.candidates.assign(candidates.begin(), candidates.end());
  const std::size_t k = candidates.size(), t = k + 2, h = emb.E.cols();

  std::vector<int> nodes;
  nodes.reserve(t);
  nodes.push_back(prev);
  nodes.insert(nodes.end(), candidates.begin(), candidates.end());
  nodes.push_back(dest);

  step.input = Tensor<T>({t, h});
  for (std::size_t r = 0; r < t; ++r) {
    const auto src = emb.E.row(nodes[r]);
    std::copy(src.begin(), src.end(), step.input.row(r).begin());
  }
  const auto dist = distance_matrix(norm_coords, nodes);
  step.dist = Tensor<T>({t, t});
  for (std::size_t i = 0; i < dist.size(); ++i) step.dist.data[i] = static_cast<T>(dist[i]);
  return step;
}

template <typename T>
Tensor<T> decoder_layer(const Tensor<T>& din, const Tensor<T>& a, const DecoderLayerParams<T>& p,
                        int heads, DecoderLayerCache* cache) {
  const std::size_t t = din.rows(), h = din.cols(), f = p.ff_w1.cols();
  const std::size_t nh = static_cast<std::size_t>(heads), d = h / nh;
  if (a.rows() != t || a.cols() != t) throw DimensionError("decoder distance matrix shape");
  const T scale = T(1) / std::sqrt(static_cast<T>(d));

  Tensor<T> x1({t, h}), inv1({t});
  nn::rms_norm_rows(din.data.data(), p.attn_norm.data.data(), x1.data.data(), inv1.data.data(), t,
                    h);
  Tensor<T> q({t, h}), k({t, h}), v({t, h});
  nn::gemm(x1.data.data(), p.wq.data.data(), q.data.data(), t, h, h, false);
  nn::gemm(x1.data.data(), p.wk.data.data(), k.data.data(), t, h, h, false);
  nn::gemm(x1.data.data(), p.wv.data.data(), v.data.data(), t, h, h, false);

  // Scores run over all t keys in the inner loop (K transposed); each score
  // still sums its head's channels in ascending order.
  std::vector<T> w(nh * t * t, T(0)), kt(h * t), penalty(nh);
  for (std::size_t hd = 0; hd < nh; ++hd) penalty[hd] = nn::softplus(p.dist_scale.data[hd]);
  const T* qd = q.data.data();
  const T* vd = v.data.data();
  const T* ad = a.data.data();
  for (std::size_t j = 0; j < t; ++j)
    for (std::size_t c = 0; c < h; ++c) kt[c * t + j] = k.data[j * h + c];
  for (std::size_t hd = 0; hd < nh; ++hd) {
    for (std::size_t i = 0; i < t; ++i) {
      T* row = w.data() + (hd * t + i) * t;
      for (std::size_t c = hd * d; c < (hd + 1) * d; ++c) {
        const T x = qd[i * h + c];
        const T* kc = kt.data() + c * t;
        for (std::size_t j = 0; j < t; ++j) row[j] += x * kc[j];
      }
      const T pen = penalty[hd];
      const T* ai = ad + i * t;
      for (std::size_t j = 0; j < t; ++j) row[j] = row[j] * scale - pen * ai[j];
    }
    nn::softmax_rows_inplace(w.data() + hd * t * t, t, t);
  }
  Tensor<T> o({t, h});
  for (std::size_t i = 0; i < t; ++i) {
    T* oi = o.data.data() + i * h;
    for (std::size_t hd = 0; hd < nh; ++hd) {
      const T* wi = w.data() + (hd * t + i) * t;
      T* oh = oi + hd * d;
      for (std::size_t j = 0; j < t; ++j) {
        const T x = wi[j];
        const T* vj = vd + j * h + hd * d;
        for (std::size_t c = 0; c < d; ++c) oh[c] += x * vj[c];
      }
    }
  }

  Tensor<T> mid = din;
  nn::gemm(o.data.data(), p.wo.data.data(), mid.data.data(), t, h, h, true);

  Tensor<T> x2({t, h}), inv2({t});
  nn::rms_norm_rows(mid.data.data(), p.ff_norm.data.data(), x2.data.data(), inv2.data.data(), t, h);
  Tensor<T> z({t, f});
  for (std::size_t i = 0; i < t; ++i) std::copy(p.ff_b1.data.begin(), p.ff_b1.data.end(), &z(i, 0));
  nn::gemm(x2.data.data(), p.ff_w1.data.data(), z.data.data(), t, h, f, true);
  Tensor<T> act({t, f});
  nn::silu_forward(z.data.data(), act.data.data(), z.size());

  Tensor<T> out = mid;
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < h; ++j) out(i, j) += p.ff_b2.data[j];
  nn::gemm(act.data.data(), p.ff_w2.data.data(), out.data.data(), t, f, h, true);

  if constexpr (std::is_same_v<T, double>) {
    if (cache) {
      cache->in = din;
      cache->x1 = std::move(x1);
      cache->inv1 = std::move(inv1);
      cache->q = std::move(q);
      cache->k = std::move(k);
      cache->v = std::move(v);
      cache->o = std::move(o);
      cache->mid = std::move(mid);
      cache->x2 = std::move(x2);
      cache->inv2 = std::move(inv2);
      cache->z = std::move(z);
      cache->act = std::move(act);
      cache->weights.assign(nh, Tensor<T>({t, t}));
      for (std::size_t hd = 0; hd < nh; ++hd)
        std::copy_n(w.data() + hd * t * t, t * t, cache->weights[hd].data.data());
    }
  }
  return out;
}

Tensor<double> decoder_layer_backward(DecoderLayerParams<double>& p, int heads,
                                      const Tensor<double>& a, const DecoderLayerCache& c,
                                      const Tensor<double>& dout) {
  const std::size_t t = c.in.rows(), h = c.in.cols(), f = p.ff_w1.cols();
  const std::size_t nh = static_cast<std::size_t>(heads), d = h / nh;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  // Feed-forward block.
  Tensor<double> dmid = dout;
  nn::gemm_tn(c.act.data.data(), dout.data.data(), p.ff_w2.grad.data(), f, t, h, true);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < h; ++j) p.ff_b2.grad[j] += dout(i, j);
  Tensor<double> dz({t, f});
  nn::gemm_nt(dout.data.data(), p.ff_w2.data.data(), dz.data.data(), t, h, f, false);
  for (std::size_t i = 0; i < dz.size(); ++i) dz.data[i] *= nn::silu_grad(c.z.data[i]);
  nn::gemm_tn(c.x2.data.data(), dz.data.data(), p.ff_w1.grad.data(), h, t, f, true);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < f; ++j) p.ff_b1.grad[j] += dz(i, j);
  Tensor<double> dx2({t, h});
  nn::gemm_nt(dz.data.data(), p.ff_w1.data.data(), dx2.data.data(), t, f, h, false);
  Tensor<double> tmp({t, h});
  nn::rms_norm_rows_backward(c.mid.data.data(), p.ff_norm.data.data(), c.inv2.data.data(),
                             dx2.data.data(), tmp.data.data(), p.ff_norm.grad.data(), t, h);
  for (std::size_t i = 0; i < dmid.size(); ++i) dmid.data[i] += tmp.data[i];

  // Attention block.
  Tensor<double> din = dmid;
  nn::gemm_tn(c.o.data.data(), dmid.data.data(), p.wo.grad.data(), h, t, h, true);
  Tensor<double> d_o({t, h});
  nn::gemm_nt(dmid.data.data(), p.wo.data.data(), d_o.data.data(), t, h, h, false);

  Tensor<double> dq({t, h}), dk({t, h}), dv({t, h});
  Tensor<double> dw({t, t}), ds({t, t});
  for (std::size_t hd = 0; hd < nh; ++hd) {
    const Tensor<double>& w = c.weights[hd];
    const std::size_t off = hd * d;
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < t; ++j) {
        double s = 0.0;
        for (std::size_t cc = 0; cc < d; ++cc) s += d_o(i, off + cc) * c.v(j, off + cc);
        dw(i, j) = s;
        for (std::size_t cc = 0; cc < d; ++cc) dv(j, off + cc) += w(i, j) * d_o(i, off + cc);
      }
    nn::softmax_rows_backward(w.data.data(), dw.data.data(), ds.data.data(), t, t);
    const double lam = p.dist_scale.data[hd];
    double dpen = 0.0;
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < t; ++j) {
        const double g = ds(i, j);
        dpen -= g * a(i, j);
        for (std::size_t cc = 0; cc < d; ++cc) {
          dq(i, off + cc) += scale * g * c.k(j, off + cc);
          dk(j, off + cc) += scale * g * c.q(i, off + cc);
        }
      }
    p.dist_scale.grad[hd] += dpen * nn::sigmoid(lam);
  }
  nn::gemm_tn(c.x1.data.data(), dq.data.data(), p.wq.grad.data(), h, t, h, true);
  nn::gemm_tn(c.x1.data.data(), dk.data.data(), p.wk.grad.data(), h, t, h, true);
  nn::gemm_tn(c.x1.data.data(), dv.data.data(), p.wv.grad.data(), h, t, h, true);
  Tensor<double> dx1({t, h});
  nn::gemm_nt(dq.data.data(), p.wq.data.data(), dx1.data.data(), t, h, h, false);
  nn::gemm_nt(dk.data.data(), p.wk.data.data(), dx1.data.data(), t, h, h, true);
  nn::gemm_nt(dv.data.data(), p.wv.data.data(), dx1.data.data(), t, h, h, true);
  nn::rms_norm_rows_backward(c.in.data.data(), p.attn_norm.data.data(), c.inv1.data.data(),
                             dx1.data.data(), tmp.data.data(), p.attn_norm.grad.data(), t, h);
  for (std::size_t i = 0; i < din.size(); ++i) din.data[i] += tmp.data[i];
  return din;
}

template <typename T>
Tensor<T> decode_refine(const DecoderStep<T>& step, const ModelParams<T>& params,
                        DecoderCache* cache) {
  Tensor<T> x = step.input;
  const std::size_t t = x.rows(), h = x.cols();
  for (std::size_t j = 0; j < h; ++j) {
    x(0, j) += params.dec.role_prev.data[j];
    x(t - 1, j) += params.dec.role_dest.data[j];
  }
  if (cache) cache->layers.resize(params.dec.layers.size());
  for (std::size_t l = 0; l < params.dec.layers.size(); ++l)
    x = decoder_layer(x, step.dist, params.dec.layers[l], params.config.heads,
                      cache ? &cache->layers[l] : nullptr);
  if constexpr (std::is_same_v<T, double>) {
    if (cache) cache->refined = x;
  }
  return x;
}

template <typename T>
std::vector<T> masked_scores(const Tensor<T>& refined, const DecoderParams<T>& params) {
  const std::size_t t = refined.rows(), h = refined.cols();
  std::vector<T> scores(t, nn::kMasked<T>);
  for (std::size_t i = 1; i + 1 < t; ++i) {
    T s = T(0);
    for (std::size_t j = 0; j < h; ++j) s += refined(i, j) * params.w_out.data[j];
    scores[i] = s;
  }
  return scores;
}

template <typename T>
std::vector<T> next_node_distribution(const Tensor<T>& refined, const DecoderParams<T>& params) {
  auto scores = masked_scores(refined, params);
  nn::softmax_rows_inplace(scores.data(), 1, scores.size());
  return {scores.begin() + 1, scores.end() - 1};
}

template <typename T>
std::vector<T> next_node_log_probs(const Tensor<T>& refined, const DecoderParams<T>& params) {
  const auto scores = masked_scores(refined, params);
  const auto lp = nn::log_softmax<T>(scores);
  return {lp.begin() + 1, lp.end() - 1};
}

template <typename T>
std::vector<T> step_log_probs(const DecoderStep<T>& step, const ModelParams<T>& params) {
  return next_node_log_probs(decode_refine(step, params), params.dec);
}

Tensor<double> decode_backward(TrainParams& params, const DecoderStep<double>& step,
                               const DecoderCache& cache, std::span<const double> dlogits) {
  const std::size_t t = cache.refined.rows(), h = cache.refined.cols();
  Tensor<double> dx({t, h});
  auto& w_out = params.dec.w_out;
  for (std::size_t i = 1; i + 1 < t; ++i) {
    const double g = dlogits[i - 1];
    for (std::size_t j = 0; j < h; ++j) {
      w_out.grad[j] += g * cache.refined(i, j);
      dx(i, j) = g * w_out.data[j];
    }
  }
  for (std::size_t l = params.dec.layers.size(); l-- > 0;)
    dx = decoder_layer_backward(params.dec.layers[l], params.config.heads, step.dist,
                                cache.layers[l], dx);
  for (std::size_t j = 0; j < h; ++j) {
    params.dec.role_prev.grad[j] += dx(0, j);
    params.dec.role_dest.grad[j] += dx(t - 1, j);
  }
  return dx;
}

#define GELD_INSTANTIATE(T)                                                                     \
  template DecoderStep<T> build_decoder_input<T>(const NodeEmbeddings<T>&, int, int,            \
                                                 std::span<const int>, std::span<const Point>); \
  template Tensor<T> decoder_layer<T>(const Tensor<T>&, const Tensor<T>&,                       \
                                      const DecoderLayerParams<T>&, int, DecoderLayerCache*);   \
  template Tensor<T> decode_refine<T>(const DecoderStep<T>&, const ModelParams<T>&,             \
                                      DecoderCache*);                                           \
  template std::vector<T> masked_scores<T>(const Tensor<T>&, const DecoderParams<T>&);          \
  template std::vector<T> next_node_distribution<T>(const Tensor<T>&, const DecoderParams<T>&); \
  template std::vector<T> next_node_log_probs<T>(const Tensor<T>&, const DecoderParams<T>&);    \
  template std::vector<T> step_log_probs<T>(const DecoderStep<T>&, const ModelParams<T>&);

GELD_INSTANTIATE(float)
GELD_INSTANTIATE(double)

#undef GELD_INSTANTIATE

}  // namespace geld

#include "geld/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace geld {

using nn::Tensor;

std::uint64_t coords_digest(std::span<const Point> coords) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(coords.data());
  for (std::size_t i = 0; i < coords.size_bytes(); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

template <typename T>
Tensor<T> project(const Tensor<T>& x, const Tensor<T>& w) {
  Tensor<T> y({x.rows(), w.cols()});
  nn::gemm(x.data.data(), w.data.data(), y.data.data(), x.rows(), x.cols(), w.cols(), false);
  return y;
}

template <typename T>
Tensor<T> head_slice(const Tensor<T>& x, std::size_t head, std::size_t d) {
  const std::size_t n = x.rows(), h = x.cols();
  Tensor<T> out({n, d});
  for (std::size_t i = 0; i < n; ++i)
    std::memcpy(&out(i, 0), x.data.data() + i * h + head * d, d * sizeof(T));
  return out;
}

template <typename T>
void head_store(Tensor<T>& x, const Tensor<T>& part, std::size_t head) {
  const std::size_t n = x.rows(), h = x.cols(), d = part.cols();
  for (std::size_t i = 0; i < n; ++i)
    std::memcpy(x.data.data() + i * h + head * d, &part(i, 0), d * sizeof(T));
}

void check_rala_shapes(std::size_t qn, std::size_t kn, std::size_t vn, std::size_t qd,
                       std::size_t kd, const RegionAssignment& regions) {
  if (qn != kn || qn != vn || qd != kd || regions.region_of.size() != qn)
    throw DimensionError("rala_attention: Q/K/V rows and region assignment disagree");
}

}  // namespace

template <typename T>
Tensor<T> embed_nodes(std::span<const Point> norm_coords, const EncoderParams<T>& params) {
  const std::size_t n = norm_coords.size(), h = params.embed_w.cols();
  Tensor<T> e({n, h});
  for (std::size_t i = 0; i < n; ++i) {
    const T x = static_cast<T>(norm_coords[i].x), y = static_cast<T>(norm_coords[i].y);
    for (std::size_t j = 0; j < h; ++j)
      e(i, j) = params.embed_b.data[j] + x * params.embed_w(0, j) + y * params.embed_w(1, j);
  }
  return e;
}

template <typename T>
Tensor<T> rala_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                         const RegionAssignment& regions, RalaCache<T>* cache) {
  check_rala_shapes(q.rows(), k.rows(), v.rows(), q.cols(), k.cols(), regions);
  const std::size_t n = q.rows(), d = q.cols(), dv = v.cols();
  const std::size_t m = static_cast<std::size_t>(regions.regions());

  Tensor<T> proxies({m, d});
  for (std::size_t i = 0; i < n; ++i) {
    T* p = &proxies(regions.region_of[i], 0);
    const T* qi = &q(i, 0);
    for (std::size_t c = 0; c < d; ++c) p[c] += qi[c];
  }
  for (std::size_t r = 0; r < m; ++r) {
    if (regions.counts[r] == 0) continue;
    const T inv = T(1) / static_cast<T>(regions.counts[r]);
    for (std::size_t c = 0; c < d; ++c) proxies(r, c) *= inv;
  }

  Tensor<T> q_weight({n, m});
  nn::gemm_nt(q.data.data(), proxies.data.data(), q_weight.data.data(), n, d, m, false);
  nn::softmax_rows_inplace(q_weight.data.data(), n, m);

  Tensor<T> k_weight({m, n});
  nn::gemm_nt(proxies.data.data(), k.data.data(), k_weight.data.data(), m, d, n, false);
  nn::softmax_rows_inplace(k_weight.data.data(), m, n);

  // (K_w·V) first keeps the cost at O(n·m·d) and never forms an n×n matrix.
  Tensor<T> kv({m, dv});
  nn::gemm(k_weight.data.data(), v.data.data(), kv.data.data(), m, n, dv, false);
  Tensor<T> out({n, dv});
  nn::gemm(q_weight.data.data(), kv.data.data(), out.data.data(), n, m, dv, false);

  if (cache) {
    cache->proxies = std::move(proxies);
    cache->q_weight = std::move(q_weight);
    cache->k_weight = std::move(k_weight);
    cache->kv = std::move(kv);
  }
  return out;
}

RalaGrads rala_attention_backward(const Tensor<double>& q, const Tensor<double>& k,
                                  const Tensor<double>& v, const RegionAssignment& regions,
                                  const RalaCache<double>& cache, const Tensor<double>& dout) {
  const std::size_t n = q.rows(), d = q.cols(), dv = v.cols();
  const std::size_t m = static_cast<std::size_t>(regions.regions());
  RalaGrads g{Tensor<double>({n, d}), Tensor<double>({n, d}), Tensor<double>({n, dv})};

  Tensor<double> d_qw({n, m});
  nn::gemm_nt(dout.data.data(), cache.kv.data.data(), d_qw.data.data(), n, dv, m, false);
  Tensor<double> d_kv({m, dv});
  nn::gemm_tn(cache.q_weight.data.data(), dout.data.data(), d_kv.data.data(), m, n, dv, false);

  Tensor<double> d_kw({m, n});
  nn::gemm_nt(d_kv.data.data(), v.data.data(), d_kw.data.data(), m, dv, n, false);
  nn::gemm_tn(cache.k_weight.data.data(), d_kv.data.data(), g.dv.data.data(), n, m, dv, false);

  Tensor<double> d_s1({n, m});
  nn::softmax_rows_backward(cache.q_weight.data.data(), d_qw.data.data(), d_s1.data.data(), n, m);
  Tensor<double> d_s2({m, n});
  nn::softmax_rows_backward(cache.k_weight.data.data(), d_kw.data.data(), d_s2.data.data(), m, n);

  // S1 = Q·Pᵀ, S2 = P·Kᵀ
  nn::gemm(d_s1.data.data(), cache.proxies.data.data(), g.dq.data.data(), n, m, d, false);
  Tensor<double> d_p({m, d});
  nn::gemm_tn(d_s1.data.data(), q.data.data(), d_p.data.data(), m, n, d, false);
  nn::gemm(d_s2.data.data(), k.data.data(), d_p.data.data(), m, n, d, true);
  nn::gemm_tn(d_s2.data.data(), cache.proxies.data.data(), g.dk.data.data(), n, m, d, false);

  for (std::size_t i = 0; i < n; ++i) {
    const int r = regions.region_of[i];
    const double inv = 1.0 / regions.counts[r];
    for (std::size_t c = 0; c < d; ++c) g.dq(i, c) += d_p(r, c) * inv;
  }
  return g;
}

template <typename T>
Tensor<T> dense_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  if (q.rows() != k.rows() || k.rows() != v.rows() || q.cols() != k.cols())
    throw DimensionError("dense_attention shape mismatch");
  const std::size_t n = q.rows(), d = q.cols(), dv = v.cols();
  Tensor<T> out({n, dv});
  std::vector<T> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    nn::gemm_nt(&q(i, 0), k.data.data(), scores.data(), 1, d, n, false);
    nn::softmax_rows_inplace(scores.data(), 1, n);
    nn::gemm(scores.data(), v.data.data(), &out(i, 0), 1, n, dv, false);
  }
  return out;
}

template <typename T>
NodeEmbeddings<T> encode_normalized(std::span<const Point> norm_coords,
                                    const ModelParams<T>& params, EncoderCache* cache,
                                    EncoderAttention attention) {
  const auto& p = params.enc;
  const std::size_t n = norm_coords.size();
  const std::size_t h = params.config.hidden, heads = params.config.heads;
  const std::size_t d = h / heads, f = p.ff_w1.cols();
  if (n == 0) throw DimensionError("cannot encode an empty instance");

  RegionAssignment regions =
      assign_regions(norm_coords, params.config.region_rows, params.config.region_cols);

  Tensor<T> e0 = embed_nodes(norm_coords, p);
  Tensor<T> x1({n, h}), inv1({n});
  nn::rms_norm_rows(e0.data.data(), p.attn_norm.data.data(), x1.data.data(), inv1.data.data(), n,
                    h);
  Tensor<T> q = project(x1, p.wq), k = project(x1, p.wk), v = project(x1, p.wv);

  Tensor<T> o({n, h});
  std::vector<Tensor<T>> qh(heads), kh(heads), vh(heads);
  std::vector<RalaCache<T>> head_caches(heads);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    qh[hd] = head_slice(q, hd, d);
    kh[hd] = head_slice(k, hd, d);
    vh[hd] = head_slice(v, hd, d);
    Tensor<T> oh = attention == EncoderAttention::rala
                       ? rala_attention(qh[hd], kh[hd], vh[hd], regions, &head_caches[hd])
                       : dense_attention(qh[hd], kh[hd], vh[hd]);
    head_store(o, oh, hd);
  }

  Tensor<T> e1 = e0;
  nn::gemm(o.data.data(), p.wo.data.data(), e1.data.data(), n, h, h, true);

  Tensor<T> x2({n, h}), inv2({n});
  nn::rms_norm_rows(e1.data.data(), p.ff_norm.data.data(), x2.data.data(), inv2.data.data(), n, h);
  Tensor<T> z({n, f});
  for (std::size_t i = 0; i < n; ++i) std::copy(p.ff_b1.data.begin(), p.ff_b1.data.end(), &z(i, 0));
  nn::gemm(x2.data.data(), p.ff_w1.data.data(), z.data.data(), n, h, f, true);
  Tensor<T> act({n, f});
  nn::silu_forward(z.data.data(), act.data.data(), z.size());

  NodeEmbeddings<T> out;
  out.E = e1;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h; ++j) out.E(i, j) += p.ff_b2.data[j];
  nn::gemm(act.data.data(), p.ff_w2.data.data(), out.E.data.data(), n, f, h, true);
  out.source_hash = coords_digest(norm_coords);

  if constexpr (std::is_same_v<T, double>) {
    if (cache) {
      cache->coords.assign(norm_coords.begin(), norm_coords.end());
      cache->regions = std::move(regions);
      cache->e0 = std::move(e0);
      cache->x1 = std::move(x1);
      cache->inv1 = std::move(inv1);
      cache->q = std::move(q);
      cache->k = std::move(k);
      cache->v = std::move(v);
      cache->o = std::move(o);
      cache->e1 = std::move(e1);
      cache->x2 = std::move(x2);
      cache->inv2 = std::move(inv2);
      cache->z = std::move(z);
      cache->act = std::move(act);
      cache->qh = std::move(qh);
      cache->kh = std::move(kh);
      cache->vh = std::move(vh);
      cache->heads = std::move(head_caches);
    }
  }
  return out;
}

template <typename T>
NodeEmbeddings<T> encode(const TspInstance& inst, const ModelParams<T>& params) {
  const auto norm = normalize_coords(inst.coords());
  return encode_normalized(std::span<const Point>(norm), params);
}

template <typename T>
std::vector<NodeEmbeddings<T>> encode_batch(std::span<const TspInstance> instances,
                                            const ModelParams<T>& params) {
  std::vector<NodeEmbeddings<T>> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(encode(inst, params));
  return out;
}

void encode_backward(TrainParams& params, const EncoderCache& c, const Tensor<double>& de) {
  auto& p = params.enc;
  const std::size_t n = c.e0.rows(), h = params.config.hidden, heads = params.config.heads;
  const std::size_t d = h / heads, f = p.ff_w1.cols();

  // Feed-forward block: E2 = E1 + silu(rms(E1)·W1 + b1)·W2 + b2
  Tensor<double> de1 = de;
  nn::gemm_tn(c.act.data.data(), de.data.data(), p.ff_w2.grad.data(), f, n, h, true);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h; ++j) p.ff_b2.grad[j] += de(i, j);
  Tensor<double> dz({n, f});
  nn::gemm_nt(de.data.data(), p.ff_w2.data.data(), dz.data.data(), n, h, f, false);
  for (std::size_t i = 0; i < dz.size(); ++i) dz.data[i] *= nn::silu_grad(c.z.data[i]);
  nn::gemm_tn(c.x2.data.data(), dz.data.data(), p.ff_w1.grad.data(), h, n, f, true);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) p.ff_b1.grad[j] += dz(i, j);
  Tensor<double> dx2({n, h});
  nn::gemm_nt(dz.data.data(), p.ff_w1.data.data(), dx2.data.data(), n, f, h, false);
  Tensor<double> tmp({n, h});
  nn::rms_norm_rows_backward(c.e1.data.data(), p.ff_norm.data.data(), c.inv2.data.data(),
                             dx2.data.data(), tmp.data.data(), p.ff_norm.grad.data(), n, h);
  for (std::size_t i = 0; i < de1.size(); ++i) de1.data[i] += tmp.data[i];

  // Attention block: E1 = E0 + RALA(rms(E0))·Wo
  Tensor<double> de0 = de1;
  nn::gemm_tn(c.o.data.data(), de1.data.data(), p.wo.grad.data(), h, n, h, true);
  Tensor<double> d_o({n, h});
  nn::gemm_nt(de1.data.data(), p.wo.data.data(), d_o.data.data(), n, h, h, false);
  Tensor<double> dq({n, h}), dk({n, h}), dv({n, h});
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const Tensor<double> doh = head_slice(d_o, hd, d);
    RalaGrads g =
        rala_attention_backward(c.qh[hd], c.kh[hd], c.vh[hd], c.regions, c.heads[hd], doh);
    head_store(dq, g.dq, hd);
    head_store(dk, g.dk, hd);
    head_store(dv, g.dv, hd);
  }
  nn::gemm_tn(c.x1.data.data(), dq.data.data(), p.wq.grad.data(), h, n, h, true);
  nn::gemm_tn(c.x1.data.data(), dk.data.data(), p.wk.grad.data(), h, n, h, true);
  nn::gemm_tn(c.x1.data.data(), dv.data.data(), p.wv.grad.data(), h, n, h, true);
  Tensor<double> dx1({n, h});
  nn::gemm_nt(dq.data.data(), p.wq.data.data(), dx1.data.data(), n, h, h, false);
  nn::gemm_nt(dk.data.data(), p.wk.data.data(), dx1.data.data(), n, h, h, true);
  nn::gemm_nt(dv.data.data(), p.wv.data.data(), dx1.data.data(), n, h, h, true);
  nn::rms_norm_rows_backward(c.e0.data.data(), p.attn_norm.data.data(), c.inv1.data.data(),
                             dx1.data.data(), tmp.data.data(), p.attn_norm.grad.data(), n, h);
  for (std::size_t i = 0; i < de0.size(); ++i) de0.data[i] += tmp.data[i];

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h; ++j) {
      const double g = de0(i, j);
      p.embed_b.grad[j] += g;
      p.embed_w.grad[j] += c.coords[i].x * g;
      p.embed_w.grad[h + j] += c.coords[i].y * g;
    }
}

#define GELD_INSTANTIATE(T)                                                                     \
  template Tensor<T> embed_nodes<T>(std::span<const Point>, const EncoderParams<T>&);           \
  template Tensor<T> rala_attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                       const RegionAssignment&, RalaCache<T>*);                 \
  template Tensor<T> dense_attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);  \
  template NodeEmbeddings<T> encode_normalized<T>(std::span<const Point>, const ModelParams<T>&, \
                                                  EncoderCache*, EncoderAttention);             \
  template NodeEmbeddings<T> encode<T>(const TspInstance&, const ModelParams<T>&);              \
  template std::vector<NodeEmbeddings<T>> encode_batch<T>(std::span<const TspInstance>,         \
                                                          const ModelParams<T>&);

GELD_INSTANTIATE(float)
GELD_INSTANTIATE(double)

#undef GELD_INSTANTIATE

}  // namespace geld

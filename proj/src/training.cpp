#include "geld/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "geld/decoder.hpp"
#include "geld/encoder.hpp"
#include "geld/generate.hpp"
#include "geld/heuristics.hpp"
#include "json.hpp"

namespace geld {

using nn::Tensor;

void TrainConfig::validate() const {
  if (k_m < 1) throw std::invalid_argument("k_m must be positive");
  if (k_m >= n_max) throw std::invalid_argument("k_m must be smaller than n_max");
  if (t_max < 1) throw std::invalid_argument("t_max must be at least 1");
  if (!(eps_gap > 0)) throw std::invalid_argument("eps_gap must be positive");
  if (t_imp < 1) throw std::invalid_argument("t_imp must be at least 1");
  if (n_e1 < 0 || n_e2 < 1) throw std::invalid_argument("epoch counts out of range");
  if (n_bs_t < 1 || sl_batch < 1) throw std::invalid_argument("batch sizes must be positive");
  if (beam_width < 1 || prc_iterations < 1 || sil_updates < 1)
    throw std::invalid_argument("search and update budgets must be positive");
  if (!(lr1 > 0) || !(lr2 > 0) || !(lr_decay > 0)) throw std::invalid_argument("bad learning rate");
}

PartialSolution make_partial_solution(const TspInstance& inst, const Tour& label,
                                      const Window& window, int k_m) {
  const std::size_t n = label.size();
  const int j = window.length;
  if (j < 3 || static_cast<std::size_t>(j) > n - 1)
    throw std::invalid_argument("window length must lie in [3, n-1]");
  if (window.start < 0 || static_cast<std::size_t>(window.start) >= n)
    throw std::invalid_argument("window start out of range");

  PartialSolution ps;
  ps.window = window;
  ps.nodes.resize(j + 1);
  std::vector<Point> raw(j + 1);
  const long nn = static_cast<long>(n);
  for (int t = 0; t <= j; ++t) {
    const long p = window.direction == Direction::clockwise ? window.start + t : window.start - t;
    ps.nodes[t] = label.order()[((p % nn) + nn) % nn];
    raw[t] = inst[ps.nodes[t]];
  }
  ps.coords = augment8(normalize_coords(raw), window.augmentation);

  std::vector<std::uint8_t> visited(j + 1, 0);
  visited[0] = 1;
  visited[j] = 1;
  for (int t = 1; t < j; ++t) {
    auto cands = k_nearest_available(ps.coords, t - 1, visited, k_m);
    const auto it = std::find(cands.begin(), cands.end(), t);
    if (it != cands.end()) {
      SupervisedStep s;
      s.prev = t - 1;
      s.dest = j;
      s.target = static_cast<int>(it - cands.begin());
      s.candidates = std::move(cands);
      ps.steps.push_back(std::move(s));
    }
    visited[t] = 1;
  }
  return ps;
}

PartialSolution sample_partial_solution(const TspInstance& inst, const Tour& label, int k_m,
                                        std::mt19937_64& rng, bool augment) {
  const int n = static_cast<int>(label.size());
  if (n < 4) throw PreconditionError("partial solutions need at least 4 nodes");
  Window w;
  w.start = std::uniform_int_distribution<int>(0, n - 1)(rng);
  w.length = std::uniform_int_distribution<int>(3, n - 1)(rng);
  w.direction = std::uniform_int_distribution<int>(0, 1)(rng) ? Direction::counterclockwise
                                                              : Direction::clockwise;
  w.augmentation = augment ? std::uniform_int_distribution<int>(0, 7)(rng) : 0;
  return make_partial_solution(inst, label, w, k_m);
}

LossResult sl_loss(std::span<const PartialSolution> batch, TrainParams& params, bool with_grad) {
  LossResult r;
  for (const auto& ps : batch) r.steps += ps.steps.size();
  if (r.steps == 0) return r;
  if (with_grad && params.dec.w_out.grad.empty()) enable_grads(params);
  const double scale = 1.0 / static_cast<double>(r.steps);
  const std::size_t h = params.config.hidden;

  double total = 0.0;
  for (const auto& ps : batch) {
    if (ps.steps.empty()) continue;
    EncoderCache enc_cache;
    const auto emb = encode_normalized<double>(ps.coords, params, with_grad ? &enc_cache : nullptr);
    Tensor<double> de({emb.size(), h});
    for (const auto& s : ps.steps) {
      const auto step = build_decoder_input(emb, s.prev, s.dest, s.candidates, ps.coords);
      DecoderCache cache;
      const auto refined = decode_refine(step, params, with_grad ? &cache : nullptr);
      const auto scores = masked_scores(refined, params.dec);
      const std::vector<double> logits(scores.begin() + 1, scores.end() - 1);
      auto ce = nn::cross_entropy(logits, static_cast<std::size_t>(s.target));
      total += ce.loss;
      if (!with_grad) continue;
      for (double& g : ce.grad) g *= scale;
      const auto din = decode_backward(params, step, cache, ce.grad);
      const std::size_t t = din.rows();
      auto add_row = [&](std::size_t row, int node) {
        for (std::size_t c = 0; c < h; ++c) de(node, c) += din(row, c);
      };
      add_row(0, s.prev);
      for (std::size_t i = 0; i < s.candidates.size(); ++i) add_row(i + 1, s.candidates[i]);
      add_row(t - 1, s.dest);
    }
    if (with_grad) encode_backward(params, enc_cache, de);
  }
  r.loss = total * scale;
  return r;
}

double sl_train_step(std::span<const PartialSolution> batch, TrainParams& params, nn::Adam& opt,
                     double lr) {
  if (params.dec.w_out.grad.empty()) enable_grads(params);
  zero_grads(params);
  const LossResult r = sl_loss(batch, params, true);
  if (!std::isfinite(r.loss)) throw NumericError("non-finite training loss");
  if (r.steps == 0) return 0.0;
  const auto named = named_params(params);
  for (const auto& np : named) nn::require_finite(np.tensor->grad, "gradient of " + np.name);
  opt.step(named, lr);
  return r.loss;
}

int curriculum_scale(int epoch, const TrainConfig& cfg) {
  if (epoch < 1 || epoch > cfg.n_e2) throw std::invalid_argument("epoch must lie in [1, n_e2]");
  return cfg.k_m + static_cast<int>(static_cast<long long>(epoch) * (cfg.n_max - cfg.k_m) / cfg.n_e2);
}

Tour improved_solution(const TspInstance& inst, const InferParams& params, const TrainConfig& cfg,
                       std::uint64_t seed) {
  const Tour g = greedy_rollout(inst, params, cfg.k_m);
  const Tour b = beam_search(inst, params, cfg.beam_width, cfg.k_m);
  const Tour& start = b.length() < g.length() ? b : g;
  return prc(inst, start, params, cfg.prc_iterations, seed, cfg.k_m);
}

std::string SilEpochLog::to_json() const {
  nlohmann::json j{{"stage", 2},
                   {"epoch", epoch},
                   {"scale", scale},
                   {"len_G_start", len_greedy_start},
                   {"len_G", len_greedy},
                   {"len_I", len_improved},
                   {"loss", loss},
                   {"iterations", iterations},
                   {"refreshes", refreshes}};
  return j.dump();
}

std::string SlEpochLog::to_json() const {
  nlohmann::json j{{"stage", 1}, {"epoch", epoch}, {"loss", loss}, {"lr", lr}, {"steps", steps}};
  return j.dump();
}

namespace {

double mean_greedy(std::span<const TspInstance> data, const InferParams& p, int k_m) {
  double s = 0.0;
  for (const auto& inst : data) s += greedy_rollout(inst, p, k_m).length();
  return s / static_cast<double>(data.size());
}

std::vector<Tour> improve_all(std::span<const TspInstance> data, const InferParams& p,
                              const TrainConfig& cfg, std::mt19937_64& rng, double* mean) {
  std::vector<Tour> out;
  double s = 0.0;
  for (const auto& inst : data) {
    out.push_back(improved_solution(inst, p, cfg, rng()));
    s += out.back().length();
  }
  *mean = s / static_cast<double>(data.size());
  return out;
}

}  // namespace

SilEpochLog sil_epoch(int epoch, TrainParams& params, nn::Adam& opt, const TrainConfig& cfg,
                      std::span<const LabeledSample> data_s, std::mt19937_64& rng) {
  cfg.validate();
  if (data_s.empty()) throw std::invalid_argument("self-improvement needs labeled small instances");
  SilEpochLog log;
  log.epoch = epoch;
  log.scale = curriculum_scale(epoch, cfg);
  const auto data2 = generate_instances(Pattern::uniform, log.scale, cfg.n_bs_t, rng());

  InferParams ip = params.cast<float>();
  double len_g = mean_greedy(data2, ip, cfg.k_m);
  double len_i = 0.0;
  auto solution = improve_all(data2, ip, cfg, rng, &len_i);
  log.len_greedy_start = len_g;

  int t1 = 0, t2 = 0;
  double loss_sum = 0.0;
  int loss_count = 0;
  std::uniform_int_distribution<std::size_t> pick(0, data_s.size() - 1);
  while (t1 < cfg.t_max && len_g / len_i - 1.0 > cfg.eps_gap && t2 < cfg.t_imp) {
    std::vector<const LabeledSample*> labeled;
    for (int i = 0; i < cfg.n_bs_t; ++i) labeled.push_back(&data_s[pick(rng)]);
    for (int u = 0; u < cfg.sil_updates; ++u) {
      std::vector<PartialSolution> batch;
      for (std::size_t i = 0; i < data2.size(); ++i)
        batch.push_back(sample_partial_solution(data2[i], solution[i], cfg.k_m, rng, cfg.augment));
      for (const auto* s : labeled)
        batch.push_back(sample_partial_solution(s->instance, s->label, cfg.k_m, rng, cfg.augment));
      loss_sum += sl_train_step(batch, params, opt, cfg.lr2);
      ++loss_count;
    }
    ip = params.cast<float>();
    len_g = mean_greedy(data2, ip, cfg.k_m);
    double len_tmp = 0.0;
    auto tmp = improve_all(data2, ip, cfg, rng, &len_tmp);
    if (len_tmp < len_i) {
      t2 = 0;
      len_i = len_tmp;
      solution = std::move(tmp);
      ++log.refreshes;
    } else {
      ++t2;
    }
    ++t1;
  }
  log.len_greedy = len_g;
  log.len_improved = len_i;
  log.iterations = t1;
  log.loss = loss_count ? loss_sum / loss_count : 0.0;
  return log;
}

void train_stage1(TrainParams& params, std::span<const LabeledSample> data, const TrainConfig& cfg,
                  const std::function<void(const SlEpochLog&, const TrainParams&)>& on_epoch) {
  if (data.empty()) throw std::invalid_argument("no training data");
  for (const auto& s : data)
    if (s.instance.size() > static_cast<std::size_t>(cfg.k_m))
      throw PreconditionError("supervised instances must have at most k_m nodes");
  std::mt19937_64 rng(cfg.seed);
  nn::Adam opt;
  double lr = cfg.lr1;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.n_e1; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.sl_batch) {
      std::vector<PartialSolution> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.sl_batch); ++i) {
        const auto& s = data[order[i]];
        batch.push_back(sample_partial_solution(s.instance, s.label, cfg.k_m, rng, cfg.augment));
      }
      std::size_t n_steps = 0;
      for (const auto& ps : batch) n_steps += ps.steps.size();
      weighted += sl_train_step(batch, params, opt, lr) * static_cast<double>(n_steps);
      steps += n_steps;
    }
    SlEpochLog log{epoch, steps ? weighted / steps : 0.0, lr, steps};
    lr *= cfg.lr_decay;
    if (on_epoch) on_epoch(log, params);
  }
}

void train_stage2(TrainParams& params, std::span<const LabeledSample> data_s,
                  const TrainConfig& cfg,
                  const std::function<void(const SilEpochLog&, const TrainParams&)>& on_epoch) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  nn::Adam opt;
  for (int epoch = 1; epoch <= cfg.n_e2; ++epoch) {
    const auto log = sil_epoch(epoch, params, opt, cfg, data_s, rng);
    if (on_epoch) on_epoch(log, params);
  }
}

std::vector<LabeledSample> label_brute_force(std::span<const TspInstance> instances) {
  std::vector<LabeledSample> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back({inst, brute_force_optimal(inst)});
  return out;
}

std::vector<LabeledSample> label_nn_two_opt(std::span<const TspInstance> instances) {
  std::vector<LabeledSample> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back({inst, run_nn_two_opt(inst).tour});
  return out;
}

}  // namespace geld

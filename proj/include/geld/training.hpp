#pragma once
// Two-stage training: supervised learning on labeled small instances, then
// curriculum self-improvement on pseudo-labels from beam search + PRC.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "geld/inference.hpp"
#include "geld/model.hpp"
#include "geld/numeric.hpp"
#include "geld/tsp.hpp"

namespace geld {

struct TrainConfig {
  int k_m = 20;
  int n_max = 100;
  int n_e1 = 10;
  int n_e2 = 8;
  int n_bs_t = 16;    // SIL batch size (and labeled samples mixed in per iteration)
  int sl_batch = 64;  // instances per supervised gradient step
  double lr1 = 1e-4;
  double lr_decay = 0.97;  // per epoch
  double lr2 = 1e-5;
  int t_max = 5;
  double eps_gap = 1e-3;
  int t_imp = 3;
  int beam_width = 16;
  int prc_iterations = 1000;
  int sil_updates = 8;  // gradient steps per inner SIL iteration
  bool augment = true;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument.
  void validate() const;
};

struct LabeledSample {
  TspInstance instance;
  Tour label;
};

struct Window {
  int start = 0;
  int length = 3;  // j: the window holds j+1 consecutive label nodes
  Direction direction = Direction::clockwise;
  int augmentation = 0;
};

struct SupervisedStep {
  int prev = 0;
  int dest = 0;
  std::vector<int> candidates;
  int target = 0;  // position of the label's next node within candidates
};

/// A window of a labeled tour as its own sub-instance: the window's nodes in
/// label order (local ids 0..j), renormalized and augmented. Local node 0 is
/// the first previous node and local node j the destination.
struct PartialSolution {
  Window window;
  std::vector<int> nodes;
  std::vector<Point> coords;
  std::vector<SupervisedStep> steps;
};

PartialSolution make_partial_solution(const TspInstance& inst, const Tour& label,
                                      const Window& window, int k_m);

/// Uniform start, j uniform in [3, n−1], uniform direction and (optionally)
/// uniform augmentation. Steps whose target is outside the k_m nearest
/// available nodes are dropped.
PartialSolution sample_partial_solution(const TspInstance& inst, const Tour& label, int k_m,
                                        std::mt19937_64& rng, bool augment = true);

struct LossResult {
  double loss = 0.0;  // mean cross-entropy over every step in the batch
  std::size_t steps = 0;
};

/// Mean loss over the batch; with `with_grad` also accumulates d(mean loss)
/// into the parameters' grad buffers.
LossResult sl_loss(std::span<const PartialSolution> batch, TrainParams& params, bool with_grad);

/// Zero grads, backprop the mean loss, one Adam update. Returns the
/// pre-update loss. Throws NumericError on a non-finite loss or gradient.
double sl_train_step(std::span<const PartialSolution> batch, TrainParams& params, nn::Adam& opt,
                     double lr);

/// k_m + ⌊epoch·(n_max − k_m) / n_e2⌋ for 1 ≤ epoch ≤ n_e2.
int curriculum_scale(int epoch, const TrainConfig& cfg);

/// Better of greedy and beam search, then PRC.
Tour improved_solution(const TspInstance& inst, const InferParams& params, const TrainConfig& cfg,
                       std::uint64_t seed);

struct SilEpochLog {
  int epoch = 0;
  int scale = 0;
  double len_greedy_start = 0.0;
  double len_greedy = 0.0;  // mean greedy length after the last inner iteration
  double len_improved = 0.0;
  double loss = 0.0;
  int iterations = 0;
  int refreshes = 0;
  std::string to_json() const;
};

/// One outer iteration of the self-improvement stage.
SilEpochLog sil_epoch(int epoch, TrainParams& params, nn::Adam& opt, const TrainConfig& cfg,
                      std::span<const LabeledSample> data_s, std::mt19937_64& rng);

struct SlEpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::size_t steps = 0;
  std::string to_json() const;
};

void train_stage1(TrainParams& params, std::span<const LabeledSample> data, const TrainConfig& cfg,
                  const std::function<void(const SlEpochLog&, const TrainParams&)>& on_epoch = {});

void train_stage2(TrainParams& params, std::span<const LabeledSample> data_s,
                  const TrainConfig& cfg,
                  const std::function<void(const SilEpochLog&, const TrainParams&)>& on_epoch = {});

/// Exact labels (n ≤ 10).
std::vector<LabeledSample> label_brute_force(std::span<const TspInstance> instances);
/// Nearest neighbor + 2-opt labels for larger small-scale instances.
std::vector<LabeledSample> label_nn_two_opt(std::span<const TspInstance> instances);

}  // namespace geld

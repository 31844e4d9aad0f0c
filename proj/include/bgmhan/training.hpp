#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bgmhan/embedding.hpp"
#include "bgmhan/model.hpp"
#include "bgmhan/profile.hpp"
#include "bgmhan/tensor.hpp"

namespace bgmhan {

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t scheduler_patience = 3;
  double scheduler_factor = 0.1;
  double min_lr = 1e-7;
  std::size_t early_stop_patience = 10;
  double clip_max_norm = 1.0;
  double weight_decay = 1e-4;  // L2 strength; coupled into the loss by train()
  double dropout = 0.6;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;    // 1-based
  double train_loss = 0.0;  // mean per-sample objective (weighted bce + penalty)
  double val_loss = 0.0;    // mean per-sample weighted bce
  double val_accuracy = 0.0;
  double lr = 0.0;  // rate in effect during this epoch
};

// Optimizer and schedule state carried across epochs.
struct TrainState {
  double lr = 0.0;
  std::size_t adam_step = 0;
  std::vector<std::vector<double>> m;  // first moments, one buffer per parameter
  std::vector<std::vector<double>> v;  // second moments
  bool has_best = false;
  double best_val_accuracy = 0.0;
  std::size_t scheduler_counter = 0;  // epochs since last improvement
  std::size_t stop_counter = 0;
  std::vector<EpochRecord> history;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // earliest epoch attaining the best accuracy
  double best_val_accuracy = 0.0;
  bool stopped_early = false;
  std::vector<std::pair<std::string, std::vector<double>>> best_params;
};

// w_y = N / (2 N_y). Throws TrainError when a class is absent.
std::pair<double, double> class_weights(const std::vector<int>& labels);

// -sum_i w_{y_i} [y_i log p_i + (1-y_i) log(1-p_i)] with logs clamped at
// 1e-12. Differentiable with respect to preds.
Tensor weighted_bce(const Tensor& preds, const std::vector<int>& labels, double w0, double w1);

// lambda * sum of squared entries. The named overload skips decay-exempt
// parameters (normalisation gains/biases and gates).
double l2_penalty(const std::vector<Tensor>& params, double lambda);
double l2_penalty(const std::vector<std::pair<std::string, Tensor>>& named, double lambda);

// Adds the gradient of the named-overload penalty (2 lambda theta) into each
// parameter's gradient buffer.
void add_l2_gradients(const std::vector<std::pair<std::string, Tensor>>& named, double lambda);

// Scales every gradient buffer by max_norm/g when the global norm g exceeds
// max_norm. Returns the pre-clip norm.
double clip_gradients(const std::vector<Tensor>& params, double max_norm);

// Per-epoch observation after validation: the first call seeds the best
// accuracy (and counts as non-improving); later calls reset both patience
// counters on a > 1e-6 improvement, otherwise increment them. When the
// scheduler counter reaches its patience the rate decays by scheduler_factor
// (floored at min_lr) and that counter resets.
void scheduler_step(TrainState& state, const TrainConfig& cfg, double val_accuracy);

// True exactly when `patience` consecutive epochs brought no new best.
bool early_stop_check(const TrainState& state, std::size_t patience);

// One AdamW update (beta1 0.9, beta2 0.999, eps 1e-8, bias correction) using
// each parameter's gradient buffer. weight_decay is the decoupled rate
// applied directly to parameters, skipping decay-exempt names; pass 0 when
// the decay already lives in the loss.
void optimizer_step(const std::vector<std::pair<std::string, Tensor>>& named, TrainState& state,
                    double lr, double weight_decay);

// Decision threshold shared by training, evaluation, and baselines.
inline bool predict_positive(double probability) { return probability >= 0.5; }

// Inference probabilities for a whole dataset, in order.
std::vector<double> predict_probabilities(const BgmHan& model, const BpeVocab& vocab,
                                          const std::vector<Profile>& profiles, std::size_t s,
                                          std::size_t w);

// Copies saved parameter values back into the model by name.
void restore_params(BgmHan& model,
                    const std::vector<std::pair<std::string, std::vector<double>>>& saved);

// Full protocol: per-epoch shuffle, minibatches, weighted BCE plus coupled L2,
// backward, global-norm clip, AdamW step, validation, plateau decay, early
// stop. The model is left holding the best-validation-accuracy parameters,
// which are also returned in the result.
TrainResult train(BgmHan& model, const BpeVocab& vocab, const std::vector<Profile>& train_set,
                  const std::vector<Profile>& val_set, std::size_t s, std::size_t w,
                  const TrainConfig& cfg);

}  // namespace bgmhan

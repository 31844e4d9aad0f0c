#include "bgmhan/training.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace bgmhan {

namespace {

constexpr double kLogEps = 1e-12;
constexpr double kImproveTol = 1e-6;
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Lambda captures of const references keep their constness; copying the
// shared handle first restores mutable access to the same buffers.
std::vector<double>& grad_of(const Tensor& t) {
  Tensor handle = t;
  return handle.grad();
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (cfg.max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (!(cfg.scheduler_factor > 0.0 && cfg.scheduler_factor < 1.0)) {
    throw ConfigError("train: scheduler_factor must be in (0,1)");
  }
  if (!(cfg.min_lr > 0.0)) throw ConfigError("train: min_lr must be > 0");
  if (cfg.scheduler_patience < 1) throw ConfigError("train: scheduler_patience must be >= 1");
  if (cfg.early_stop_patience < 1) throw ConfigError("train: early_stop_patience must be >= 1");
  if (!(cfg.clip_max_norm > 0.0)) throw ConfigError("train: clip_max_norm must be > 0");
  if (cfg.weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) {
    throw ConfigError("train: dropout must be in [0,1)");
  }
}

// Tokenization cached per profile so epochs only repeat the embedding lookup.
struct Example {
  std::array<TokenGrid, kFieldCount> grids;
  int label = 0;
};

std::vector<Example> prepare(const std::vector<Profile>& set, const BpeVocab& vocab,
                             std::size_t s, std::size_t w) {
  std::vector<Example> out;
  out.reserve(set.size());
  for (const Profile& p : set) {
    Example e;
    e.label = p.label;
    for (std::size_t i = 0; i < kFieldCount; ++i) {
      e.grids[i] = tokenize_field(field_text(p, i), vocab, s, w);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::array<FieldTensor, kFieldCount> embed_example(const Example& e, const EmbeddingTable& table) {
  std::array<FieldTensor, kFieldCount> fields;
  for (std::size_t i = 0; i < kFieldCount; ++i) fields[i] = embed_grid(e.grids[i], table);
  return fields;
}

double sample_bce(double p, int label, double w0, double w1) {
  if (label == 1) return -w1 * std::log(std::max(p, kLogEps));
  return -w0 * std::log(std::max(1.0 - p, kLogEps));
}

}  // namespace

std::pair<double, double> class_weights(const std::vector<int>& labels) {
  std::size_t n0 = 0, n1 = 0;
  for (int y : labels) {
    if (y == 0) {
      ++n0;
    } else if (y == 1) {
      ++n1;
    } else {
      throw ContractError("class_weights: label " + std::to_string(y) + " is not 0 or 1");
    }
  }
  if (n0 == 0 || n1 == 0) throw TrainError("class_weights: both classes must be present");
  const double n = static_cast<double>(labels.size());
  return {n / (2.0 * static_cast<double>(n0)), n / (2.0 * static_cast<double>(n1))};
}

Tensor weighted_bce(const Tensor& preds, const std::vector<int>& labels, double w0, double w1) {
  if (preds.size() != labels.size()) {
    throw ContractError("weighted_bce: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ContractError("weighted_bce: empty batch");
  for (int y : labels) {
    if (y != 0 && y != 1) {
      throw ContractError("weighted_bce: label " + std::to_string(y) + " is not 0 or 1");
    }
  }

  auto ls = std::make_shared<std::vector<int>>(labels);
  auto kernel = [ls, w0, w1](const Tensor& p, Tensor& out) {
    double loss = 0.0;
    for (std::size_t i = 0; i < ls->size(); ++i) loss += sample_bce(p.at(i), (*ls)[i], w0, w1);
    out.at(0) = loss;
  };
  Tensor out = Tensor::zeros({1});
  kernel(preds, out);

  if (Tape* tape = Tape::active()) {
    Tensor p = preds;
    Tensor o = out;
    tape->record({"weighted_bce",
                  {preds},
                  out,
                  [p, o, kernel]() mutable { kernel(p, o); },
                  [p, o, ls, w0, w1]() {
                    auto& gp = grad_of(p);
                    const double go = grad_of(o)[0];
                    for (std::size_t i = 0; i < ls->size(); ++i) {
                      const double pi = p.at(i);
                      double g = 0.0;
                      if ((*ls)[i] == 1) {
                        if (pi > kLogEps) g = -w1 / pi;
                      } else {
                        if (1.0 - pi > kLogEps) g = w0 / (1.0 - pi);
                      }
                      gp[i] += go * g;
                    }
                  }});
  }
  return out;
}

double l2_penalty(const std::vector<Tensor>& params, double lambda) {
  if (lambda < 0.0) throw ConfigError("l2_penalty: lambda must be >= 0");
  if (lambda == 0.0) return 0.0;
  double total = 0.0;
  for (const Tensor& t : params) {
    for (std::size_t i = 0; i < t.size(); ++i) total += t.at(i) * t.at(i);
  }
  return lambda * total;
}

double l2_penalty(const std::vector<std::pair<std::string, Tensor>>& named, double lambda) {
  if (lambda < 0.0) throw ConfigError("l2_penalty: lambda must be >= 0");
  if (lambda == 0.0) return 0.0;
  double total = 0.0;
  for (const auto& [name, t] : named) {
    if (decay_exempt(name)) continue;
    for (std::size_t i = 0; i < t.size(); ++i) total += t.at(i) * t.at(i);
  }
  return lambda * total;
}

void add_l2_gradients(const std::vector<std::pair<std::string, Tensor>>& named, double lambda) {
  if (lambda == 0.0) return;
  for (const auto& [name, t] : named) {
    if (decay_exempt(name)) continue;
    auto& g = grad_of(t);
    for (std::size_t i = 0; i < t.size(); ++i) g[i] += 2.0 * lambda * t.at(i);
  }
}

double clip_gradients(const std::vector<Tensor>& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_gradients: max_norm must be > 0");
  double sq = 0.0;
  for (const Tensor& t : params) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (const Tensor& t : params) {
      if (!t.has_grad()) continue;
      for (double& g : grad_of(t)) g *= factor;
    }
  }
  return norm;
}

void scheduler_step(TrainState& state, const TrainConfig& cfg, double val_accuracy) {
  if (!state.has_best) {
    state.has_best = true;
    state.best_val_accuracy = val_accuracy;
    state.scheduler_counter = 1;
    state.stop_counter = 1;
  } else if (val_accuracy > state.best_val_accuracy + kImproveTol) {
    state.best_val_accuracy = val_accuracy;
    state.scheduler_counter = 0;
    state.stop_counter = 0;
  } else {
    ++state.scheduler_counter;
    ++state.stop_counter;
  }
  if (state.scheduler_counter >= cfg.scheduler_patience) {
    state.lr = std::max(state.lr * cfg.scheduler_factor, cfg.min_lr);
    state.scheduler_counter = 0;
  }
}

bool early_stop_check(const TrainState& state, std::size_t patience) {
  return state.stop_counter >= patience;
}

void optimizer_step(const std::vector<std::pair<std::string, Tensor>>& named, TrainState& state,
                    double lr, double weight_decay) {
  if (state.m.empty() && state.v.empty()) {
    state.m.resize(named.size());
    state.v.resize(named.size());
    for (std::size_t i = 0; i < named.size(); ++i) {
      state.m[i].assign(named[i].second.size(), 0.0);
      state.v[i].assign(named[i].second.size(), 0.0);
    }
  }
  if (state.m.size() != named.size() || state.v.size() != named.size()) {
    throw ContractError("optimizer_step: parameter count changed mid-run");
  }

  ++state.adam_step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.adam_step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.adam_step));

  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor t = named[i].second;
    if (state.m[i].size() != t.size()) {
      throw ContractError("optimizer_step: shape changed for " + named[i].first);
    }
    const auto& g = t.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const bool decays = weight_decay > 0.0 && !decay_exempt(named[i].first);
    for (std::size_t j = 0; j < t.size(); ++j) {
      m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g[j];
      v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      double x = t.at(j);
      if (decays) x -= lr * weight_decay * x;
      x -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
      t.at(j) = x;
    }
  }
}

std::vector<double> predict_probabilities(const BgmHan& model, const BpeVocab& vocab,
                                          const std::vector<Profile>& profiles, std::size_t s,
                                          std::size_t w) {
  std::vector<double> out;
  out.reserve(profiles.size());
  for (const Profile& p : profiles) {
    auto fields = embed_profile(p, vocab, model.table, s, w);
    out.push_back(forward(model, fields).item());
  }
  return out;
}

void restore_params(BgmHan& model,
                    const std::vector<std::pair<std::string, std::vector<double>>>& saved) {
  auto named = model.named_params();
  if (named.size() != saved.size()) {
    throw ContractError("restore_params: expected " + std::to_string(named.size()) +
                        " parameters, got " + std::to_string(saved.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != saved[i].first || named[i].second.size() != saved[i].second.size()) {
      throw ContractError("restore_params: mismatch at " + saved[i].first);
    }
    auto& t = named[i].second;
    for (std::size_t j = 0; j < saved[i].second.size(); ++j) t.at(j) = saved[i].second[j];
  }
}

TrainResult train(BgmHan& model, const BpeVocab& vocab, const std::vector<Profile>& train_set,
                  const std::vector<Profile>& val_set, std::size_t s, std::size_t w,
                  const TrainConfig& cfg) {
  validate(cfg);
  if (train_set.empty()) throw ConfigError("train: empty training set");
  if (val_set.empty()) throw ConfigError("train: empty validation set");

  std::vector<int> train_labels;
  train_labels.reserve(train_set.size());
  for (const Profile& p : train_set) train_labels.push_back(p.label);
  const auto [w0, w1] = class_weights(train_labels);

  model.cfg.dropout = cfg.dropout;
  const std::vector<Example> train_ex = prepare(train_set, vocab, s, w);
  const std::vector<Example> val_ex = prepare(val_set, vocab, s, w);

  const auto named = model.named_params();
  std::vector<Tensor> params;
  params.reserve(named.size());
  for (const auto& [name, t] : named) params.push_back(t);

  Rng rng(cfg.seed);
  TrainState state;
  state.lr = cfg.learning_rate;
  TrainResult result;

  std::vector<std::size_t> order(train_ex.size());
  std::iota(order.begin(), order.end(), 0);

  auto snapshot_best = [&]() {
    result.best_params.clear();
    result.best_params.reserve(named.size());
    for (const auto& [name, t] : named) result.best_params.emplace_back(name, t.values());
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t bn = end - start;
      for (Tensor& t : params) t.zero_grad();

      Tape tape;
      double batch_objective = 0.0;
      {
        TapeScope scope(tape);
        std::vector<Tensor> preds;
        std::vector<int> labels;
        preds.reserve(bn);
        labels.reserve(bn);
        for (std::size_t k = start; k < end; ++k) {
          const Example& e = train_ex[order[k]];
          preds.push_back(forward(model, embed_example(e, model.table), true, &rng));
          labels.push_back(e.label);
        }
        Tensor mean_loss =
            scale(weighted_bce(stack_rows(preds), labels, w0, w1), 1.0 / static_cast<double>(bn));
        tape.backward(mean_loss);
        batch_objective = mean_loss.item() + l2_penalty(named, cfg.weight_decay);
      }
      add_l2_gradients(named, cfg.weight_decay);
      clip_gradients(params, cfg.clip_max_norm);
      optimizer_step(named, state, state.lr, 0.0);
      loss_sum += batch_objective * static_cast<double>(bn);
    }

    for (const Tensor& t : params) {
      if (!t.all_finite()) {
        throw TrainError("train: non-finite parameter after epoch " + std::to_string(epoch));
      }
    }

    double correct = 0.0;
    double val_loss = 0.0;
    for (const Example& e : val_ex) {
      const double p = forward(model, embed_example(e, model.table)).item();
      val_loss += sample_bce(p, e.label, w0, w1);
      if (predict_positive(p) == (e.label == 1)) correct += 1.0;
    }
    const double val_acc = correct / static_cast<double>(val_ex.size());
    val_loss /= static_cast<double>(val_ex.size());

    state.history.push_back({epoch, loss_sum / static_cast<double>(train_ex.size()), val_loss,
                             val_acc, state.lr});

    // Snapshot with the same improvement rule the scheduler applies, before
    // the scheduler folds this epoch into its best.
    if (!state.has_best || val_acc > state.best_val_accuracy + kImproveTol) {
      result.best_epoch = epoch;
      snapshot_best();
    }
    scheduler_step(state, cfg, val_acc);
    if (early_stop_check(state, cfg.early_stop_patience)) {
      result.stopped_early = true;
      break;
    }
  }

  result.history = state.history;
  result.best_val_accuracy = state.best_val_accuracy;
  restore_params(model, result.best_params);
  return result;
}

}  // namespace bgmhan

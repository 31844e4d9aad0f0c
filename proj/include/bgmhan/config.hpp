#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bgmhan/model.hpp"
#include "bgmhan/training.hpp"

namespace bgmhan {

// One document holding every knob of a run. Defaults are the desk profile —
// small enough to train on a laptop CPU in seconds. Values loaded from a JSON
// file override these defaults; command-line flags override the file.
struct RunConfig {
  // field geometry and model dimensions
  std::size_t max_sentences = 4;  // s: sentences kept per field
  std::size_t max_words = 12;     // w: words kept per sentence
  std::size_t embed_dim = 32;     // d: feature width at every level
  std::size_t heads = 4;          // h: attention heads (d must divide evenly)
  std::size_t ffn_dim = 64;       // hidden width of the gated residual FFN
  std::size_t vocab_target = 500; // tokenizer size budget (base chars + merges)

  // component switches
  bool use_bpe = true;
  bool use_mha = true;
  bool use_grc = true;

  // training
  double learning_rate = 2e-3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 50;
  std::size_t scheduler_patience = 5;
  double scheduler_factor = 0.5;
  double min_lr = 1e-7;
  std::size_t early_stop_patience = 15;
  double clip_max_norm = 1.0;
  double weight_decay = 1e-4;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  // synthetic data generation and splitting
  std::size_t gen_n = 600;
  double signal_strength = 0.9;
  double blank_fraction = 0.0;
  double positive_fraction = 0.5;
  std::array<double, 3> split_fractions = {0.70, 0.10, 0.20};

  // ablation study
  std::vector<std::uint64_t> ablation_seeds = {11, 23, 47};
};

// Built-in profiles. `desk` is the default and actually runs in CI time;
// `paper` documents the full-scale hyperparameters and is not CI-runnable.
RunConfig desk_profile();
RunConfig paper_profile();
RunConfig profile_by_name(const std::string& name);

// Applies fields from a JSON document over `base`. Unknown keys and wrong
// types raise a config error naming the offending field.
RunConfig parse_config(const std::string& json_text, RunConfig base);
RunConfig load_config(const std::string& path, RunConfig base);

// Raises a config error that names the first invalid field.
void validate_config(const RunConfig& cfg);

ModelConfig model_config(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);

// Canonical text form of the architecture-determining fields (dims, tokenizer
// budget, component switches). Two configs that agree here produce
// interchangeable checkpoints.
std::string config_fingerprint(const RunConfig& cfg);

// FNV-1a hash of the fingerprint; embedded in checkpoints so evaluation can
// refuse a model whose architecture does not match the active config.
std::uint64_t config_hash(const RunConfig& cfg);

// Full resolved dump in a stable field order (JSON).
std::string config_json(const RunConfig& cfg);

}  // namespace bgmhan

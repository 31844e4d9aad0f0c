#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bgmhan/config.hpp"
#include "bgmhan/data.hpp"
#include "bgmhan/metrics.hpp"
#include "bgmhan/model.hpp"
#include "bgmhan/training.hpp"

namespace bgmhan {

// One complete training run: tokenizer fit on the training split, model
// trained against the validation split, best checkpoint restored.
struct TrainedRun {
  BgmHan model;
  BpeVocab vocab;
  TrainResult result;
};

TrainedRun train_run(const DatasetSplit& split, const RunConfig& cfg);

// Test-set evaluation of a trained model (threshold 0.5).
MetricReport evaluate_model(const BgmHan& model, const BpeVocab& vocab,
                            const std::vector<Profile>& test, std::size_t max_sentences,
                            std::size_t max_words);

// One component configuration of the ablation study.
struct AblationVariant {
  std::string name;
  bool use_bpe = true;
  bool use_mha = true;
  bool use_grc = true;
};

// The five studied configurations: everything off, each component removed
// from the full model in turn, and the full model.
std::vector<AblationVariant> ablation_variants();

struct MetricStat {
  double mean = 0.0;
  double spread = 0.0;  // sample standard deviation over seeds
};

struct AblationRow {
  AblationVariant variant;
  std::vector<MetricReport> per_seed;
  MetricStat precision, recall, f1, accuracy;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // exactly ablation_variants().size() entries
  std::vector<std::uint64_t> seeds;
};

// Trains every variant on the identical split once per seed in
// cfg.ablation_seeds and evaluates on the test split.
AblationResult run_ablation(const DatasetSplit& split, const RunConfig& cfg);

}  // namespace bgmhan

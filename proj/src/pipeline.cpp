#include "bgmhan/pipeline.hpp"

#include <cmath>

#include "bgmhan/errors.hpp"
#include "bgmhan/prng.hpp"

namespace bgmhan {

namespace {

MetricStat stat_over(const std::vector<MetricReport>& reports, double MetricReport::*field) {
  MetricStat s;
  const double n = static_cast<double>(reports.size());
  for (const MetricReport& r : reports) s.mean += r.*field;
  s.mean /= n;
  if (reports.size() > 1) {
    double ss = 0.0;
    for (const MetricReport& r : reports) {
      const double d = r.*field - s.mean;
      ss += d * d;
    }
    s.spread = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

}  // namespace

TrainedRun train_run(const DatasetSplit& split, const RunConfig& cfg) {
  validate_config(cfg);
  if (split.train.empty()) throw ContractError("train_run: empty training split");
  if (split.validation.empty()) throw ContractError("train_run: empty validation split");

  const std::string corpus = corpus_text(split.train);
  BpeVocab vocab =
      cfg.use_bpe ? train_bpe(corpus, cfg.vocab_target) : char_vocab(corpus);

  Rng rng(cfg.seed);
  TrainedRun run{make_model(model_config(cfg), vocab.size(), rng), std::move(vocab), {}};
  run.result = train(run.model, run.vocab, split.train, split.validation, cfg.max_sentences,
                     cfg.max_words, train_config(cfg));
  return run;
}

MetricReport evaluate_model(const BgmHan& model, const BpeVocab& vocab,
                            const std::vector<Profile>& test, std::size_t max_sentences,
                            std::size_t max_words) {
  if (test.empty()) throw ContractError("evaluate_model: empty test set");
  const std::vector<double> probs =
      predict_probabilities(model, vocab, test, max_sentences, max_words);
  std::vector<int> preds(probs.size()), labels(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    preds[i] = predict_positive(probs[i]) ? 1 : 0;
    labels[i] = test[i].label;
  }
  return compute_metrics(preds, labels);
}

std::vector<AblationVariant> ablation_variants() {
  return {
      {"base", false, false, false},
      {"no-bpe", false, true, true},
      {"no-mha", true, false, true},
      {"no-grc", true, true, false},
      {"full", true, true, true},
  };
}

AblationResult run_ablation(const DatasetSplit& split, const RunConfig& cfg) {
  validate_config(cfg);
  if (split.test.empty()) throw ContractError("run_ablation: empty test split");

  AblationResult result;
  result.seeds = cfg.ablation_seeds;
  for (const AblationVariant& variant : ablation_variants()) {
    AblationRow row;
    row.variant = variant;
    RunConfig vcfg = cfg;
    vcfg.use_bpe = variant.use_bpe;
    vcfg.use_mha = variant.use_mha;
    vcfg.use_grc = variant.use_grc;
    for (std::uint64_t seed : cfg.ablation_seeds) {
      vcfg.seed = seed;
      const TrainedRun run = train_run(split, vcfg);
      row.per_seed.push_back(evaluate_model(run.model, run.vocab, split.test, cfg.max_sentences,
                                            cfg.max_words));
    }
    row.precision = stat_over(row.per_seed, &MetricReport::precision);
    row.recall = stat_over(row.per_seed, &MetricReport::recall);
    row.f1 = stat_over(row.per_seed, &MetricReport::f1);
    row.accuracy = stat_over(row.per_seed, &MetricReport::accuracy);
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace bgmhan

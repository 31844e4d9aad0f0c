#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bgmhan/profile.hpp"
#include "bgmhan/tensor.hpp"

namespace bgmhan {

// Binary confusion counts with class 1 treated as the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // number of true samples of this class
};

// Macro-averaged evaluation report. The macro figures are unweighted means of
// the two per-class values; undefined ratios (0/0) are reported as 0 and noted
// in `warnings` so reports stay total without hiding degenerate cases.
struct MetricReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::array<ClassMetrics, 2> per_class{};  // indexed by class label
  ConfusionMatrix confusion;
  std::vector<std::string> warnings;
};

// preds and labels must be equal-length {0,1} vectors with n >= 1.
MetricReport compute_metrics(const std::vector<int>& preds, const std::vector<int>& labels);

// Splits text into maximal runs of alphanumeric characters; whitespace and
// punctuation separate words and are discarded.
std::vector<std::string> tokenize_words(const std::string& text);

// Term weighting fit on the training corpus only. Documents seen later are
// projected onto the fitted vocabulary; unseen terms are ignored.
struct TfidfModel {
  std::vector<std::string> terms;                      // sorted, deterministic order
  std::unordered_map<std::string, std::size_t> index;  // term -> column
  std::vector<double> idf;                             // smoothed: ln((1+D)/(1+df)) + 1
  std::size_t document_count = 0;
};

TfidfModel tfidf_fit(const std::vector<std::string>& train_docs);

// Rows are tf * idf, L2-normalized; an all-unknown document yields a zero row.
Tensor tfidf_transform(const TfidfModel& model, const std::vector<std::string>& docs);

struct LogRegModel {
  std::vector<double> weights;
  double bias = 0.0;
};

// Mean binary cross-entropy plus l2 * ||w||^2 (bias unpenalized).
double logreg_loss(const Tensor& x, const std::vector<int>& y, const LogRegModel& model,
                   double l2);

// Analytic gradient of logreg_loss: (d/dw, d/db).
std::pair<std::vector<double>, double> logreg_gradient(const Tensor& x, const std::vector<int>& y,
                                                       const LogRegModel& model, double l2);

// Full-batch gradient descent from zero initialization. Raises a training
// error when the loss rises for 10 consecutive steps (divergence).
LogRegModel logreg_train(const Tensor& x, const std::vector<int>& y, std::size_t steps, double lr,
                         double l2);

std::vector<double> logreg_probabilities(const Tensor& x, const LogRegModel& model);
std::vector<int> logreg_predict(const Tensor& x, const LogRegModel& model);

// One flat text document per profile: the four field texts joined by spaces.
std::string profile_document(const Profile& p);

struct BaselineConfig {
  std::size_t steps = 500;
  double learning_rate = 1.0;
  double l2 = 1e-4;
};

// Bag-of-words reference classifier: tf-idf features + logistic regression,
// fit on `train`, evaluated on `test`.
MetricReport tfidf_logreg_baseline(const std::vector<Profile>& train,
                                   const std::vector<Profile>& test,
                                   const BaselineConfig& cfg = {});

}  // namespace bgmhan

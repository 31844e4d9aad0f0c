#include "bgmhan/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <string>

#include "bgmhan/errors.hpp"

namespace bgmhan {

namespace {

constexpr double kLogEps = 1e-12;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Ratio with the 0/0 := 0 convention; appends a warning when it fires.
double safe_ratio(double num, double den, const std::string& what,
                  std::vector<std::string>& warnings) {
  if (den > 0.0) return num / den;
  warnings.push_back(what + " is 0/0; reported as 0");
  return 0.0;
}

void check_binary(const std::vector<int>& v, const char* name) {
  for (int value : v) {
    if (value != 0 && value != 1) {
      throw ContractError(std::string(name) + " must contain only 0 or 1, got " +
                          std::to_string(value));
    }
  }
}

void check_features(const Tensor& x, const std::vector<int>& y) {
  if (x.ndim() != 2) {
    throw ContractError("feature matrix must be 2-D, got " + std::to_string(x.ndim()) + " axes");
  }
  if (x.dim(0) != y.size()) {
    throw ContractError("feature rows (" + std::to_string(x.dim(0)) + ") must match label count (" +
                        std::to_string(y.size()) + ")");
  }
  if (!x.all_finite()) throw ContractError("feature matrix contains non-finite values");
  check_binary(y, "labels");
}

void check_model(const Tensor& x, const LogRegModel& model) {
  if (model.weights.size() != x.dim(1)) {
    throw ContractError("weight count (" + std::to_string(model.weights.size()) +
                        ") must match feature columns (" + std::to_string(x.dim(1)) + ")");
  }
}

}  // namespace

MetricReport compute_metrics(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size()) {
    throw ContractError("compute_metrics: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw ContractError("compute_metrics: need at least one sample");
  check_binary(preds, "predictions");
  check_binary(labels, "labels");

  MetricReport report;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] == 1) {
      if (preds[i] == 1) ++report.confusion.tp; else ++report.confusion.fn;
    } else {
      if (preds[i] == 1) ++report.confusion.fp; else ++report.confusion.tn;
    }
  }
  const ConfusionMatrix& cm = report.confusion;
  report.accuracy =
      static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());

  // Per-class counts: when class c is treated as positive.
  const std::array<std::array<double, 3>, 2> counts = {{
      // {correctly predicted c, predicted c, actually c}
      {static_cast<double>(cm.tn), static_cast<double>(cm.tn + cm.fn),
       static_cast<double>(cm.tn + cm.fp)},
      {static_cast<double>(cm.tp), static_cast<double>(cm.tp + cm.fp),
       static_cast<double>(cm.tp + cm.fn)},
  }};
  for (std::size_t c = 0; c < 2; ++c) {
    ClassMetrics& m = report.per_class[c];
    const std::string tag = "class " + std::to_string(c);
    m.support = static_cast<std::size_t>(counts[c][2]);
    m.precision = safe_ratio(counts[c][0], counts[c][1], tag + " precision", report.warnings);
    m.recall = safe_ratio(counts[c][0], counts[c][2], tag + " recall", report.warnings);
    m.f1 = safe_ratio(2.0 * m.precision * m.recall, m.precision + m.recall, tag + " f1",
                      report.warnings);
    report.precision += m.precision / 2.0;
    report.recall += m.recall / 2.0;
    report.f1 += m.f1 / 2.0;
  }
  return report;
}

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(c);
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

TfidfModel tfidf_fit(const std::vector<std::string>& train_docs) {
  if (train_docs.empty()) throw TrainError("tfidf_fit: empty training corpus");

  std::unordered_map<std::string, std::size_t> df;
  for (const std::string& doc : train_docs) {
    std::set<std::string> seen;
    for (std::string& w : tokenize_words(doc)) seen.insert(std::move(w));
    for (const std::string& w : seen) ++df[w];
  }
  if (df.empty()) throw TrainError("tfidf_fit: training corpus contains no words");

  TfidfModel model;
  model.document_count = train_docs.size();
  model.terms.reserve(df.size());
  for (const auto& [term, _] : df) model.terms.push_back(term);
  std::sort(model.terms.begin(), model.terms.end());

  const double d = static_cast<double>(model.document_count);
  model.idf.resize(model.terms.size());
  for (std::size_t i = 0; i < model.terms.size(); ++i) {
    model.index.emplace(model.terms[i], i);
    model.idf[i] = std::log((1.0 + d) / (1.0 + static_cast<double>(df[model.terms[i]]))) + 1.0;
  }
  return model;
}

Tensor tfidf_transform(const TfidfModel& model, const std::vector<std::string>& docs) {
  if (model.terms.empty()) throw ContractError("tfidf_transform: model has not been fitted");
  if (docs.empty()) throw ContractError("tfidf_transform: need at least one document");

  const std::size_t cols = model.terms.size();
  Tensor out = Tensor::zeros({docs.size(), cols});
  for (std::size_t r = 0; r < docs.size(); ++r) {
    double* row = out.values().data() + r * cols;
    for (const std::string& w : tokenize_words(docs[r])) {
      auto it = model.index.find(w);
      if (it != model.index.end()) row[it->second] += 1.0;
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] *= model.idf[c];
      norm += row[c] * row[c];
    }
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (std::size_t c = 0; c < cols; ++c) row[c] /= norm;
    }
  }
  return out;
}

double logreg_loss(const Tensor& x, const std::vector<int>& y, const LogRegModel& model,
                   double l2) {
  check_features(x, y);
  check_model(x, model);
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.values().data() + i * d;
    double z = model.bias;
    for (std::size_t j = 0; j < d; ++j) z += row[j] * model.weights[j];
    const double p = sigmoid(z);
    loss -= y[i] == 1 ? std::log(std::max(p, kLogEps)) : std::log(std::max(1.0 - p, kLogEps));
  }
  loss /= static_cast<double>(n);
  for (double w : model.weights) loss += l2 * w * w;
  return loss;
}

std::pair<std::vector<double>, double> logreg_gradient(const Tensor& x, const std::vector<int>& y,
                                                       const LogRegModel& model, double l2) {
  check_features(x, y);
  check_model(x, model);
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  std::vector<double> grad_w(d, 0.0);
  double grad_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.values().data() + i * d;
    double z = model.bias;
    for (std::size_t j = 0; j < d; ++j) z += row[j] * model.weights[j];
    const double err = sigmoid(z) - static_cast<double>(y[i]);
    for (std::size_t j = 0; j < d; ++j) grad_w[j] += err * row[j];
    grad_b += err;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) grad_w[j] = grad_w[j] * inv_n + 2.0 * l2 * model.weights[j];
  grad_b *= inv_n;
  return {std::move(grad_w), grad_b};
}

LogRegModel logreg_train(const Tensor& x, const std::vector<int>& y, std::size_t steps, double lr,
                         double l2) {
  check_features(x, y);
  if (steps == 0) throw ConfigError("logreg_train: steps must be positive");
  if (!(lr > 0.0)) throw ConfigError("logreg_train: learning rate must be positive");
  if (l2 < 0.0) throw ConfigError("logreg_train: l2 must be non-negative");

  LogRegModel model;
  model.weights.assign(x.dim(1), 0.0);

  double prev_loss = logreg_loss(x, y, model, l2);
  std::size_t rising = 0;
  for (std::size_t step = 0; step < steps; ++step) {
    auto [grad_w, grad_b] = logreg_gradient(x, y, model, l2);
    for (std::size_t j = 0; j < model.weights.size(); ++j) model.weights[j] -= lr * grad_w[j];
    model.bias -= lr * grad_b;

    const double loss = logreg_loss(x, y, model, l2);
    rising = loss > prev_loss ? rising + 1 : 0;
    if (rising >= 10) {
      throw TrainError("logreg_train: loss rose for 10 consecutive steps (step " +
                       std::to_string(step + 1) + "); try a smaller learning rate");
    }
    prev_loss = loss;
  }
  return model;
}

std::vector<double> logreg_probabilities(const Tensor& x, const LogRegModel& model) {
  if (x.ndim() != 2) throw ContractError("logreg_probabilities: feature matrix must be 2-D");
  check_model(x, model);
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.values().data() + i * d;
    double z = model.bias;
    for (std::size_t j = 0; j < d; ++j) z += row[j] * model.weights[j];
    probs[i] = sigmoid(z);
  }
  return probs;
}

std::vector<int> logreg_predict(const Tensor& x, const LogRegModel& model) {
  std::vector<double> probs = logreg_probabilities(x, model);
  std::vector<int> preds(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) preds[i] = probs[i] >= 0.5 ? 1 : 0;
  return preds;
}

std::string profile_document(const Profile& p) {
  std::string doc;
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    if (i > 0) doc += ' ';
    doc += field_text(p, i);
  }
  return doc;
}

MetricReport tfidf_logreg_baseline(const std::vector<Profile>& train,
                                   const std::vector<Profile>& test, const BaselineConfig& cfg) {
  if (train.empty()) throw TrainError("baseline: empty training set");
  if (test.empty()) throw ContractError("baseline: empty test set");

  std::vector<std::string> train_docs, test_docs;
  std::vector<int> train_labels, test_labels;
  for (const Profile& p : train) {
    train_docs.push_back(profile_document(p));
    train_labels.push_back(p.label);
  }
  for (const Profile& p : test) {
    test_docs.push_back(profile_document(p));
    test_labels.push_back(p.label);
  }

  const TfidfModel features = tfidf_fit(train_docs);
  const LogRegModel model = logreg_train(tfidf_transform(features, train_docs), train_labels,
                                         cfg.steps, cfg.learning_rate, cfg.l2);
  const std::vector<int> preds = logreg_predict(tfidf_transform(features, test_docs), model);
  return compute_metrics(preds, test_labels);
}

}  // namespace bgmhan

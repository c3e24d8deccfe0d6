#include "dare/metrics/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace dare::metrics {

namespace {

void check_labels(const std::vector<std::int32_t>& y, std::int32_t num_classes) {
  for (auto v : y) {
    if (v < 0 || v >= num_classes) throw std::out_of_range("label " + std::to_string(v) + " outside [0, num_classes)");
  }
}

}  // namespace

std::vector<std::vector<std::int64_t>> confusion_matrix(const std::vector<std::int32_t>& y_true,
                                                        const std::vector<std::int32_t>& y_pred, std::int32_t num_classes) {
  if (y_true.empty()) throw std::invalid_argument("metrics: empty input");
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("metrics: y_true and y_pred differ in length");
  if (num_classes < 1) throw std::invalid_argument("metrics: num_classes must be positive");
  check_labels(y_true, num_classes);
  check_labels(y_pred, num_classes);
  std::vector<std::vector<std::int64_t>> cm(static_cast<std::size_t>(num_classes),
                                            std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) ++cm[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
  return cm;
}

ClassificationMetrics classification_metrics(const std::vector<std::int32_t>& y_true,
                                             const std::vector<std::int32_t>& y_pred, std::int32_t num_classes) {
  const auto cm = confusion_matrix(y_true, y_pred, num_classes);
  const auto k = static_cast<std::size_t>(num_classes);
  const auto n = static_cast<double>(y_true.size());
  std::vector<double> row(k, 0.0), col(k, 0.0);
  double diag = 0;
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t p = 0; p < k; ++p) {
      row[t] += static_cast<double>(cm[t][p]);
      col[p] += static_cast<double>(cm[t][p]);
    }
    diag += static_cast<double>(cm[t][t]);
  }

  ClassificationMetrics m;
  double recall_sum = 0;
  int present = 0;
  double f1 = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (row[c] == 0) continue;
    const double tp = static_cast<double>(cm[c][c]);
    const double recall = tp / row[c];
    recall_sum += recall;
    ++present;
    const double precision = col[c] > 0 ? tp / col[c] : 0.0;
    const double f = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    f1 += f * row[c] / n;
  }
  m.balanced_accuracy = recall_sum / present;
  m.weighted_f1 = f1;

  const double po = diag / n;
  double pe = 0;
  for (std::size_t c = 0; c < k; ++c) pe += (row[c] / n) * (col[c] / n);
  // Both raters constant and identical: perfect agreement by convention.
  m.cohen_kappa = pe == 1.0 ? 1.0 : (po - pe) / (1.0 - pe);
  return m;
}

RankingMetrics ranking_metrics(const std::vector<std::int32_t>& y_true, const std::vector<double>& scores) {
  if (y_true.empty()) throw std::invalid_argument("ranking_metrics: empty input");
  if (y_true.size() != scores.size()) throw std::invalid_argument("ranking_metrics: length mismatch");
  check_labels(y_true, 2);
  const auto n = y_true.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mid-ranks for ties, 1-based.
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (y_true[i] == 1) {
      pos += 1;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("ranking_metrics: both classes must be present");

  RankingMetrics r;
  r.auroc = (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);

  // Sweep thresholds from the highest score down; tied scores enter together.
  double tp = 0, fp = 0, prev_recall = 0, prev_precision = 1, area = 0;
  for (std::size_t i = n; i > 0;) {
    std::size_t j = i - 1;
    const double s = scores[order[j]];
    while (true) {
      if (y_true[order[j]] == 1) tp += 1; else fp += 1;
      if (j == 0 || scores[order[j - 1]] != s) break;
      --j;
    }
    i = j;
    const double recall = tp / pos;
    const double precision = tp / (tp + fp);
    area += (recall - prev_recall) * (precision + prev_precision) / 2.0;
    prev_recall = recall;
    prev_precision = precision;
  }
  r.auc_pr = area;
  return r;
}

EvalReport evaluate(const std::vector<std::int32_t>& y_true, const std::vector<std::int32_t>& y_pred,
                    std::int32_t num_classes, const std::vector<double>* positive_scores) {
  EvalReport rep;
  rep.classification = classification_metrics(y_true, y_pred, num_classes);
  rep.samples = static_cast<std::int64_t>(y_true.size());
  std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
  for (auto y : y_true) seen[static_cast<std::size_t>(y)] = true;
  for (std::int32_t c = 0; c < num_classes; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) rep.absent_classes.push_back(c);
  }
  if (num_classes == 2 && positive_scores != nullptr && rep.absent_classes.empty()) {
    rep.ranking = ranking_metrics(y_true, *positive_scores);
  }
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["balanced_accuracy"] = classification.balanced_accuracy;
  j["cohen_kappa"] = classification.cohen_kappa;
  j["weighted_f1"] = classification.weighted_f1;
  if (ranking) {
    j["auroc"] = ranking->auroc;
    j["auc_pr"] = ranking->auc_pr;
  }
  j["samples"] = samples;
  j["absent_classes"] = absent_classes;
  return j.dump();
}

}  // namespace dare::metrics

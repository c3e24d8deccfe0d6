#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dare::metrics {

struct ClassificationMetrics {
  double balanced_accuracy = 0.0;
  double cohen_kappa = 0.0;
  double weighted_f1 = 0.0;
};

struct RankingMetrics {
  double auroc = 0.0;
  double auc_pr = 0.0;
};

struct EvalReport {
  ClassificationMetrics classification;
  std::optional<RankingMetrics> ranking;  // binary tasks only
  std::int64_t samples = 0;
  // Classes absent from y_true; their recall is left out of the balanced accuracy.
  std::vector<std::int32_t> absent_classes;

  std::string to_json() const;
};

// confusion[t][p] counts samples of true class t predicted as p.
std::vector<std::vector<std::int64_t>> confusion_matrix(const std::vector<std::int32_t>& y_true,
                                                        const std::vector<std::int32_t>& y_pred, std::int32_t num_classes);

// Throws std::invalid_argument on empty or mismatched input, std::out_of_range on bad labels.
ClassificationMetrics classification_metrics(const std::vector<std::int32_t>& y_true,
                                             const std::vector<std::int32_t>& y_pred, std::int32_t num_classes);

// AUROC with half credit for ties; AUC-PR by the trapezoid rule over the
// precision-recall curve with one point per distinct score threshold, starting at (recall 0, precision 1).
RankingMetrics ranking_metrics(const std::vector<std::int32_t>& y_true, const std::vector<double>& scores);

EvalReport evaluate(const std::vector<std::int32_t>& y_true, const std::vector<std::int32_t>& y_pred,
                    std::int32_t num_classes, const std::vector<double>* positive_scores = nullptr);

}  // namespace dare::metrics

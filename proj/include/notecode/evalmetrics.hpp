#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "notecode/errors.hpp"

namespace notecode::evalmetrics {

// Rows index the true class, columns the predicted class.
struct ConfusionMatrix {
  int k = 0;
  std::vector<long long> counts;  // row-major k*k

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int k_) : k(k_), counts(static_cast<std::size_t>(k_) * k_, 0) {}

  long long& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth) * k + pred]; }
  long long at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * k + pred];
  }
  long long total() const;
  long long trace() const;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // no true and no predicted examples (0/0 -> 0 convention)
};

struct MetricsReport {
  long long n_examples = 0;
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  // One-vs-rest AUC; absent for classes without both positives and negatives.
  std::vector<std::optional<double>> per_class_auc;
  std::optional<double> macro_auc;
  int undefined_auc_classes = 0;
};

struct RocCurve {
  std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0,0) .. (1,1)
  std::optional<double> auc;                      // trapezoid area; absent when degenerate
};

struct EpochLoss {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths, int k);

// Accuracy and per-class/macro precision, recall, F1; AUC fields left empty.
MetricsReport summary(const ConfusionMatrix& cm);

// One-vs-rest ROC for class c via a descending threshold sweep over the
// distinct scores; AUC by trapezoid rule.
RocCurve roc_ovr(const std::vector<std::vector<double>>& scores, const std::vector<int>& truths,
                 int c);

// Rank-based AUC (probability a positive outscores a negative, ties 0.5).
// Independent route used to cross-check the trapezoid value.
std::optional<double> auc_pairwise(const std::vector<double>& class_scores,
                                   const std::vector<int>& truths, int c);

struct MacroAucResult {
  std::optional<double> value;  // unweighted mean over classes with defined AUC
  std::vector<std::optional<double>> per_class;
  int undefined_classes = 0;
};

MacroAucResult macro_auc(const std::vector<std::vector<double>>& scores,
                         const std::vector<int>& truths, int k);

// "epoch,train_loss,valid_loss" rows, 6 decimal places.
void write_loss_csv(const std::vector<EpochLoss>& losses, const std::string& path);

// Writes <prefix>metrics.json, <prefix>confusion.csv, <prefix>roc_<c>.csv per
// class, and <prefix>loss.csv. Floats carry 6 decimal places; byte output is
// deterministic for identical inputs.
void export_report(const MetricsReport& report, const ConfusionMatrix& cm,
                   const std::vector<RocCurve>& curves, const std::vector<EpochLoss>& losses,
                   const std::string& path_prefix);

}  // namespace notecode::evalmetrics

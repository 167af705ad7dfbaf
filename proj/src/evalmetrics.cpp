#include "notecode/evalmetrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace notecode::evalmetrics {

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// Round through the 6-decimal text form so metrics.json re-parses to the
// exact numbers it displays.
double round6(double v) { return std::stod(fmt6(v)); }

nlohmann::json opt_to_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return round6(*v);
}

}  // namespace

long long ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), 0LL);
}

long long ConfusionMatrix::trace() const {
  long long t = 0;
  for (int i = 0; i < k; ++i) t += at(i, i);
  return t;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths, int k) {
  if (k < 1) throw ConfigError("confusion: k must be >= 1");
  if (preds.size() != truths.size())
    throw ShapeError("confusion: preds and truths must have equal length");
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i];
    const int t = truths[i];
    if (p < 0 || p >= k || t < 0 || t >= k)
      throw IndexError("confusion: class index outside [0," + std::to_string(k) + ")");
    ++cm.at(t, p);
  }
  return cm;
}

MetricsReport summary(const ConfusionMatrix& cm) {
  MetricsReport report;
  report.n_examples = cm.total();
  report.accuracy =
      report.n_examples == 0 ? 0.0
                             : static_cast<double>(cm.trace()) / static_cast<double>(report.n_examples);

  report.per_class.resize(static_cast<std::size_t>(cm.k));
  for (int c = 0; c < cm.k; ++c) {
    long long tp = cm.at(c, c), fp = 0, fn = 0;
    for (int o = 0; o < cm.k; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    ClassMetrics& m = report.per_class[static_cast<std::size_t>(c)];
    m.degenerate = (tp + fp + fn) == 0;
    m.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    m.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f1 = (m.precision + m.recall) == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    report.macro_precision += m.precision;
    report.macro_recall += m.recall;
    report.macro_f1 += m.f1;
  }
  report.macro_precision /= cm.k;
  report.macro_recall /= cm.k;
  report.macro_f1 /= cm.k;
  return report;
}

RocCurve roc_ovr(const std::vector<std::vector<double>>& scores, const std::vector<int>& truths,
                 int c) {
  if (scores.size() != truths.size())
    throw ShapeError("roc_ovr: scores and truths must have equal length");

  long long n_pos = 0, n_neg = 0;
  std::vector<std::pair<double, bool>> ranked;  // (score for class c, is positive)
  ranked.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (c < 0 || c >= static_cast<int>(scores[i].size()))
      throw IndexError("roc_ovr: class index outside the score width");
    const bool pos = truths[i] == c;
    ranked.emplace_back(scores[i][static_cast<std::size_t>(c)], pos);
    (pos ? n_pos : n_neg)++;
  }

  RocCurve curve;
  if (n_pos == 0 || n_neg == 0) {
    curve.points = {{0.0, 0.0}, {1.0, 1.0}};
    return curve;  // auc left absent
  }

  std::sort(ranked.begin(), ranked.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  curve.points.emplace_back(0.0, 0.0);
  long long tp = 0, fp = 0;
  double auc = 0.0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  std::size_t i = 0;
  while (i < ranked.size()) {
    // Consume every example tied at this threshold before emitting a point.
    const double threshold = ranked[i].first;
    while (i < ranked.size() && ranked[i].first == threshold) {
      (ranked[i].second ? tp : fp)++;
      ++i;
    }
    const double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
    const double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
    auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    curve.points.emplace_back(fpr, tpr);
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  curve.auc = auc;
  return curve;
}

std::optional<double> auc_pairwise(const std::vector<double>& class_scores,
                                   const std::vector<int>& truths, int c) {
  if (class_scores.size() != truths.size())
    throw ShapeError("auc_pairwise: scores and truths must have equal length");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < class_scores.size(); ++i)
    (truths[i] == c ? pos : neg).push_back(class_scores[i]);
  if (pos.empty() || neg.empty()) return std::nullopt;

  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) {
      if (p > n)
        wins += 1.0;
      else if (p == n)
        wins += 0.5;
    }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

MacroAucResult macro_auc(const std::vector<std::vector<double>>& scores,
                         const std::vector<int>& truths, int k) {
  if (k < 1) throw ConfigError("macro_auc: k must be >= 1");
  MacroAucResult result;
  result.per_class.resize(static_cast<std::size_t>(k));
  double sum = 0.0;
  int defined = 0;
  for (int c = 0; c < k; ++c) {
    RocCurve curve = roc_ovr(scores, truths, c);
    result.per_class[static_cast<std::size_t>(c)] = curve.auc;
    if (curve.auc) {
      sum += *curve.auc;
      ++defined;
    } else {
      ++result.undefined_classes;
    }
  }
  if (defined > 0) result.value = sum / defined;
  return result;
}

void export_report(const MetricsReport& report, const ConfusionMatrix& cm,
                   const std::vector<RocCurve>& curves, const std::vector<EpochLoss>& losses,
                   const std::string& path_prefix) {
  {
    nlohmann::json per_class = nlohmann::json::array();
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
      const ClassMetrics& m = report.per_class[c];
      per_class.push_back({{"class", c},
                           {"precision", round6(m.precision)},
                           {"recall", round6(m.recall)},
                           {"f1", round6(m.f1)},
                           {"degenerate", m.degenerate},
                           {"auc", c < report.per_class_auc.size()
                                       ? opt_to_json(report.per_class_auc[c])
                                       : nlohmann::json(nullptr)}});
    }
    nlohmann::json doc = {{"n_examples", report.n_examples},
                          {"accuracy", round6(report.accuracy)},
                          {"per_class", per_class},
                          {"macro_precision", round6(report.macro_precision)},
                          {"macro_recall", round6(report.macro_recall)},
                          {"macro_f1", round6(report.macro_f1)},
                          {"macro_auc", opt_to_json(report.macro_auc)},
                          {"undefined_auc_classes", report.undefined_auc_classes},
                          {"averaging", "macro"}};
    std::ofstream out(path_prefix + "metrics.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + path_prefix + "metrics.json");
    out << doc.dump(2) << '\n';
  }

  {
    std::ofstream out(path_prefix + "confusion.csv", std::ios::binary);
    if (!out) throw IoError("cannot write " + path_prefix + "confusion.csv");
    out << "truth";
    for (int p = 0; p < cm.k; ++p) out << ",pred_" << p;
    out << '\n';
    for (int t = 0; t < cm.k; ++t) {
      out << t;
      for (int p = 0; p < cm.k; ++p) out << ',' << cm.at(t, p);
      out << '\n';
    }
  }

  for (std::size_t c = 0; c < curves.size(); ++c) {
    std::ofstream out(path_prefix + "roc_" + std::to_string(c) + ".csv", std::ios::binary);
    if (!out) throw IoError("cannot write " + path_prefix + "roc_" + std::to_string(c) + ".csv");
    out << "fpr,tpr\n";
    for (const auto& [fpr, tpr] : curves[c].points)
      out << fmt6(fpr) << ',' << fmt6(tpr) << '\n';
  }

  write_loss_csv(losses, path_prefix + "loss.csv");
}

void write_loss_csv(const std::vector<EpochLoss>& losses, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,train_loss,valid_loss\n";
  for (const auto& row : losses)
    out << row.epoch << ',' << fmt6(row.train_loss) << ',' << fmt6(row.valid_loss) << '\n';
}

}  // namespace notecode::evalmetrics

#include "notecode/evalmetrics.hpp"

#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "notecode/rng.hpp"
#include "test_util.hpp"

using namespace notecode;
using namespace notecode::evalmetrics;
using testutil::TempDir;

namespace {

// preds [0,1,1,1] vs truths [0,0,1,1] -> [[1,1],[0,2]]
ConfusionMatrix reference_cm() { return confusion({0, 1, 1, 1}, {0, 0, 1, 1}, 2); }

struct Instance {
  std::vector<std::vector<double>> scores;  // [n][k]
  std::vector<int> truths;
  std::vector<int> preds;
};

Instance random_instance(int n, int k, std::uint64_t seed) {
  Rng rng(seed);
  Instance inst;
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (auto& v : row) {
      v = rng.next_double() + 1e-9;
      sum += v;
    }
    for (auto& v : row) v /= sum;
    int best = 0;
    for (int c = 1; c < k; ++c)
      if (row[static_cast<std::size_t>(c)] > row[static_cast<std::size_t>(best)]) best = c;
    inst.scores.push_back(std::move(row));
    inst.preds.push_back(best);
    inst.truths.push_back(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(k))));
  }
  return inst;
}

std::vector<double> column(const std::vector<std::vector<double>>& scores, int c) {
  std::vector<double> out;
  for (const auto& row : scores) out.push_back(row[static_cast<std::size_t>(c)]);
  return out;
}

}  // namespace

TEST_CASE("confusion counts land in (truth, pred) cells") {
  ConfusionMatrix cm = reference_cm();
  CHECK(cm.k == 2);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 0) == 0);
  CHECK(cm.at(1, 1) == 2);
  CHECK(cm.total() == 4);
  CHECK(cm.trace() == 3);

  CHECK_THROWS_AS(confusion({0}, {0}, 0), ConfigError);
  CHECK_THROWS_AS(confusion({0, 1}, {0}, 2), ShapeError);
  CHECK_THROWS_AS(confusion({2}, {0}, 2), IndexError);
  CHECK_THROWS_AS(confusion({0}, {-1}, 2), IndexError);
}

TEST_CASE("summary reproduces hand-computed precision, recall and F1") {
  MetricsReport report = summary(reference_cm());
  CHECK(report.n_examples == 4);
  CHECK(report.accuracy == doctest::Approx(0.75).epsilon(1e-12));

  REQUIRE(report.per_class.size() == 2);
  CHECK(report.per_class[0].precision == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.per_class[0].recall == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(report.per_class[0].f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(report.per_class[1].precision == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(report.per_class[1].recall == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.per_class[1].f1 == doctest::Approx(0.8).epsilon(1e-12));

  CHECK(report.macro_precision == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(report.macro_recall == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(report.macro_f1 == doctest::Approx((2.0 / 3.0 + 0.8) / 2.0).epsilon(1e-12));
}

TEST_CASE("absent classes are degenerate and score zero into the macro mean") {
  // Class 2 never appears as truth or prediction.
  ConfusionMatrix cm = confusion({0, 1, 1, 1}, {0, 0, 1, 1}, 3);
  MetricsReport report = summary(cm);
  REQUIRE(report.per_class.size() == 3);
  CHECK(report.per_class[2].degenerate);
  CHECK(report.per_class[2].precision == 0.0);
  CHECK(report.per_class[2].recall == 0.0);
  CHECK(report.per_class[2].f1 == 0.0);
  CHECK(report.macro_f1 == doctest::Approx((2.0 / 3.0 + 0.8 + 0.0) / 3.0).epsilon(1e-12));

  // A class with truths but no predictions is NOT degenerate; its 0/0
  // precision just resolves to zero.
  ConfusionMatrix missed = confusion({0, 0, 0}, {0, 1, 1}, 2);
  MetricsReport r2 = summary(missed);
  CHECK_FALSE(r2.per_class[1].degenerate);
  CHECK(r2.per_class[1].precision == 0.0);
  CHECK(r2.per_class[1].recall == 0.0);
  CHECK(r2.per_class[1].f1 == 0.0);
}

TEST_CASE("metric identities hold on random instances") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Instance inst = random_instance(200, 4, seed);
    ConfusionMatrix cm = confusion(inst.preds, inst.truths, 4);
    MetricsReport report = summary(cm);

    // Micro-averaged recall is accuracy.
    long long tp = 0;
    for (int c = 0; c < 4; ++c) tp += cm.at(c, c);
    CHECK(report.accuracy ==
          doctest::Approx(static_cast<double>(tp) / 200.0).epsilon(1e-12));

    // F1 is the harmonic mean: f1 * (p + r) = 2 p r.
    for (const auto& m : report.per_class) {
      if (m.precision + m.recall > 0.0)
        CHECK(m.f1 * (m.precision + m.recall) ==
              doctest::Approx(2.0 * m.precision * m.recall).epsilon(1e-12));
      else
        CHECK(m.f1 == 0.0);
    }
  }
}

TEST_CASE("roc endpoints, monotonicity and closed-form areas") {
  std::vector<std::vector<double>> scores = {
      {0.1, 0.9}, {0.2, 0.8}, {0.9, 0.1}, {0.8, 0.2}};
  std::vector<int> truths = {1, 1, 0, 0};

  SUBCASE("perfect separation gives area one") {
    RocCurve curve = roc_ovr(scores, truths, 1);
    REQUIRE(curve.auc.has_value());
    CHECK(*curve.auc == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(curve.points.size() >= 2);
    CHECK(curve.points.front() == std::make_pair(0.0, 0.0));
    CHECK(curve.points.back() == std::make_pair(1.0, 1.0));
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      CHECK(curve.points[i].first >= curve.points[i - 1].first);
      CHECK(curve.points[i].second >= curve.points[i - 1].second);
    }
  }

  SUBCASE("perfectly wrong ranking gives area zero") {
    // Class-0 scores rank the true 0s lowest.
    RocCurve curve = roc_ovr(scores, truths, 0);
    REQUIRE(curve.auc.has_value());
    CHECK(*curve.auc == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("all-tied scores collapse to the diagonal") {
    std::vector<std::vector<double>> flat = {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
    std::vector<int> t = {0, 1, 0};
    RocCurve curve = roc_ovr(flat, t, 1);
    REQUIRE(curve.auc.has_value());
    CHECK(*curve.auc == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(auc_pairwise(column(flat, 1), t, 1).value() ==
          doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("a class without positives has no curve area") {
    RocCurve curve = roc_ovr(scores, {0, 0, 0, 0}, 1);
    CHECK_FALSE(curve.auc.has_value());
    CHECK(curve.points ==
          std::vector<std::pair<double, double>>{{0.0, 0.0}, {1.0, 1.0}});
    CHECK_FALSE(auc_pairwise(column(scores, 1), {0, 0, 0, 0}, 1).has_value());
  }
}

TEST_CASE("pairwise auc counts wins and half-ties") {
  // Positives score 0.8 and 0.4, negatives 0.6 and 0.2: three of four pairs
  // rank correctly.
  std::vector<double> s = {0.8, 0.4, 0.6, 0.2};
  std::vector<int> t = {1, 1, 0, 0};
  CHECK(auc_pairwise(s, t, 1).value() == doctest::Approx(0.75).epsilon(1e-12));

  // One exact tie across the boundary contributes half a win.
  std::vector<double> s2 = {0.5, 0.5, 0.1};
  std::vector<int> t2 = {1, 0, 0};
  CHECK(auc_pairwise(s2, t2, 1).value() == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("trapezoid and rank-count aucs agree on random instances") {
  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    Instance inst = random_instance(50, 3, seed);
    for (int c = 0; c < 3; ++c) {
      RocCurve curve = roc_ovr(inst.scores, inst.truths, c);
      auto pairwise = auc_pairwise(column(inst.scores, c), inst.truths, c);
      REQUIRE(curve.auc.has_value() == pairwise.has_value());
      if (curve.auc)
        CHECK(*curve.auc == doctest::Approx(*pairwise).epsilon(1e-12));
    }
  }
}

TEST_CASE("macro auc averages the defined classes and counts the rest") {
  // Class 2 never occurs, so its one-vs-rest AUC is undefined.
  std::vector<std::vector<double>> scores = {
      {0.7, 0.2, 0.1}, {0.1, 0.8, 0.1}, {0.6, 0.3, 0.1}, {0.2, 0.7, 0.1}};
  std::vector<int> truths = {0, 1, 0, 1};
  MacroAucResult result = macro_auc(scores, truths, 3);
  REQUIRE(result.value.has_value());
  CHECK(result.undefined_classes == 1);
  REQUIRE(result.per_class.size() == 3);
  CHECK_FALSE(result.per_class[2].has_value());
  const double expect = (*result.per_class[0] + *result.per_class[1]) / 2.0;
  CHECK(*result.value == doctest::Approx(expect).epsilon(1e-12));

  // Single-class truths leave every AUC undefined.
  MacroAucResult none = macro_auc(scores, {0, 0, 0, 0}, 3);
  CHECK_FALSE(none.value.has_value());
  CHECK(none.undefined_classes == 3);
}

TEST_CASE("loss csv bytes are exact") {
  TempDir dir("metrics-loss");
  const std::string path = dir.file("loss.csv");
  write_loss_csv({{1, 1.5, 2.25}, {2, 0.75, 1.125}}, path);
  CHECK(testutil::read_file(path) ==
        "epoch,train_loss,valid_loss\n"
        "1,1.500000,2.250000\n"
        "2,0.750000,1.125000\n");
}

TEST_CASE("export_report writes a parseable, deterministic bundle") {
  TempDir dir("metrics-export");
  std::vector<std::vector<double>> scores = {
      {0.9, 0.1}, {0.4, 0.6}, {0.35, 0.65}, {0.2, 0.8}};
  std::vector<int> preds = {0, 1, 1, 1};
  std::vector<int> truths = {0, 0, 1, 1};

  ConfusionMatrix cm = confusion(preds, truths, 2);
  MetricsReport report = summary(cm);
  MacroAucResult aucs = macro_auc(scores, truths, 2);
  report.per_class_auc = aucs.per_class;
  report.macro_auc = aucs.value;
  report.undefined_auc_classes = aucs.undefined_classes;
  std::vector<RocCurve> curves = {roc_ovr(scores, truths, 0), roc_ovr(scores, truths, 1)};
  std::vector<EpochLoss> losses = {{1, 0.9, 1.0}, {2, 0.5, 0.7}};

  const std::string prefix = dir.file("run_");
  export_report(report, cm, curves, losses, prefix);

  // metrics.json parses and carries the rounded values.
  nlohmann::json j = nlohmann::json::parse(testutil::read_file(prefix + "metrics.json"));
  CHECK(j.at("n_examples") == 4);
  CHECK(j.at("accuracy").get<double>() == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(j.at("averaging") == "macro");
  REQUIRE(j.at("per_class").size() == 2);
  CHECK(j.at("per_class")[0].at("class") == 0);
  CHECK(j.at("per_class")[0].at("precision").get<double>() ==
        doctest::Approx(1.0).epsilon(1e-9));
  CHECK(j.at("per_class")[1].at("f1").get<double>() == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(j.at("macro_f1").get<double>() ==
        doctest::Approx((2.0 / 3.0 + 0.8) / 2.0).epsilon(1e-6));
  CHECK(j.at("undefined_auc_classes") == 0);
  CHECK(j.at("macro_auc").is_number());

  CHECK(testutil::read_file(prefix + "confusion.csv") ==
        "truth,pred_0,pred_1\n"
        "0,1,1\n"
        "1,0,2\n");

  const std::string roc1 = testutil::read_file(prefix + "roc_1.csv");
  CHECK(roc1.rfind("fpr,tpr\n0.000000,0.000000\n", 0) == 0);
  CHECK(roc1.find("1.000000,1.000000\n") != std::string::npos);
  CHECK(testutil::read_file(prefix + "loss.csv") ==
        "epoch,train_loss,valid_loss\n"
        "1,0.900000,1.000000\n"
        "2,0.500000,0.700000\n");

  // Re-exporting yields byte-identical artifacts.
  const std::string prefix2 = dir.file("again_");
  export_report(report, cm, curves, losses, prefix2);
  CHECK(testutil::read_file(prefix + "metrics.json") ==
        testutil::read_file(prefix2 + "metrics.json"));
  CHECK(testutil::read_file(prefix + "confusion.csv") ==
        testutil::read_file(prefix2 + "confusion.csv"));
}

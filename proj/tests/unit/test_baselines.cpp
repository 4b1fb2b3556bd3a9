#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "logrep/baselines.hpp"
#include "logrep/error.hpp"
#include "test_util.hpp"

using namespace logrep;

namespace {

double dense(const SparseRow& row, std::size_t f) {
  for (const auto& [i, w] : row) {
    if (i == f) return w;
  }
  return 0.0;
}

// Independent root-to-leaf walk over a dense view of the row.
std::size_t walk(const DecisionTree& t, const SparseRow& row) {
  std::size_t n = 0;
  while (t.nodes[n].feature >= 0) {
    const auto f = static_cast<std::size_t>(t.nodes[n].feature);
    n = dense(row, f) <= t.nodes[n].threshold ? t.nodes[n].left : t.nodes[n].right;
  }
  return t.nodes[n].label;
}

double weighted_gini(const SparseFeatures& x, const std::vector<std::size_t>& y, std::size_t classes,
                     std::size_t f, double thr) {
  std::vector<std::size_t> l(classes, 0), r(classes, 0);
  for (std::size_t i = 0; i < x.size(); ++i) (dense(x[i], f) <= thr ? l : r)[y[i]]++;
  double nl = 0, nr = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    nl += static_cast<double>(l[c]);
    nr += static_cast<double>(r[c]);
  }
  auto g = [](const std::vector<std::size_t>& h, double n) {
    double s = 1.0;
    for (auto c : h) s -= (static_cast<double>(c) / n) * (static_cast<double>(c) / n);
    return s;
  };
  return (nl * g(l, nl) + nr * g(r, nr)) / (nl + nr);
}

// Quarter-step values in [lo, 1]; explicit 0.0 entries are kept on purpose.
SparseFeatures random_features(std::mt19937_64& gen, std::size_t n, std::size_t features, double lo = 0.0) {
  SparseFeatures x(n);
  std::uniform_real_distribution<double> u(lo, 1.0);
  for (auto& row : x) {
    for (std::size_t f = 0; f < features; ++f) {
      if (u(gen) < 0.4) row.push_back({f, std::round(u(gen) * 4.0) / 4.0});
    }
  }
  return x;
}

}  // namespace

TEST_CASE("tf-idf: hand values") {
  const std::vector<std::string> docs{"a b", "a"};
  const FeatureDictionary d = featurize_fit(docs);
  REQUIRE(d.size() == 2);
  CHECK(d.idf()[*d.find("a")] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d.idf()[*d.find("b")] == doctest::Approx(std::log(1.5) + 1.0).epsilon(1e-15));

  const SparseFeatures x = featurize_apply(d, docs);
  const double ib = std::log(1.5) + 1.0;
  const double norm = std::sqrt(1.0 + ib * ib);
  CHECK(dense(x[0], *d.find("a")) == doctest::Approx(1.0 / norm));
  CHECK(dense(x[0], *d.find("b")) == doctest::Approx(ib / norm));
  CHECK(dense(x[1], *d.find("a")) == doctest::Approx(1.0));

  const std::vector<std::string> one{"solo"};
  const auto single = featurize_apply(featurize_fit(one), one);
  REQUIRE(single[0].size() == 1);
  CHECK(single[0][0].second == doctest::Approx(1.0));
}

TEST_CASE("tf-idf: no leakage from test data") {
  const std::vector<std::string> train{"disk full on sda", "network down"};
  const FeatureDictionary d = featurize_fit(train);
  const FeatureDictionary before = d;
  const std::vector<std::string> test{"Brand new words only", "disk"};
  const SparseFeatures x = featurize_apply(d, test);
  CHECK(d == before);
  CHECK(x[0].empty());
  CHECK(x[1].size() == 1);
  for (const auto& row : featurize_apply(d, train)) {
    for (const auto& [f, w] : row) {
      CHECK(std::isfinite(w));
      CHECK(w >= 0.0);
    }
  }
  CHECK_THROWS(featurize_fit(std::vector<std::string>{}));
}

TEST_CASE("gini: hand-checked 4-example split") {
  const std::size_t pure[] = {4, 0};
  const std::size_t even[] = {2, 2};
  CHECK(gini(pure) == 0.0);
  CHECK(gini(even) == doctest::Approx(0.5));
  // Features (f0, f1), labels: (1,0)->0 (1,1)->0 (0,1)->1 (0,0)->1.
  const SparseFeatures x{{{0, 1.0}}, {{0, 1.0}, {1, 1.0}}, {{1, 1.0}}, {}};
  const std::vector<std::size_t> y{0, 0, 1, 1};
  // Split on f0 at 0.5 is pure: 0. On f1: each side {1 of each} -> 0.5.
  CHECK(weighted_gini(x, y, 2, 0, 0.5) == 0.0);
  CHECK(weighted_gini(x, y, 2, 1, 0.5) == doctest::Approx(0.5));
  const DecisionTree t = train_decision_tree(x, y, 2, 2);
  CHECK(t.nodes[0].feature == 0);
  CHECK(t.nodes[0].threshold == doctest::Approx(0.5));
  CHECK(t.depth() == 1);
}

TEST_CASE("decision tree: memorizes, falls back to majority, matches traversal oracle") {
  std::mt19937_64 gen(8);
  for (const double lo : {0.0, -1.0}) {
    CAPTURE(lo);
    const SparseFeatures x = random_features(gen, 60, 6, lo);
    std::vector<std::size_t> y(60);
    for (std::size_t i = 0; i < 60; ++i) y[i] = dense(x[i], 0) + dense(x[i], 3) > 0.6 ? 1 : 0;
    const DecisionTree t = train_decision_tree(x, y, 2, 6);
    CHECK(predict_tree(t, x) == y);

    // Root split achieves the best weighted impurity found by exhaustive search.
    double best = 1.0;
    for (std::size_t f = 0; f < 6; ++f) {
      std::set<double> vals;
      for (const auto& row : x) vals.insert(dense(row, f));
      for (auto it = vals.begin(); std::next(it) != vals.end(); ++it) {
        best = std::min(best, weighted_gini(x, y, 2, f, (*it + *std::next(it)) / 2.0));
      }
    }
    CHECK(weighted_gini(x, y, 2, static_cast<std::size_t>(t.nodes[0].feature), t.nodes[0].threshold) ==
          doctest::Approx(best).epsilon(1e-12));

    const SparseFeatures probe = random_features(gen, 100, 6, lo);
    for (const auto& row : probe) CHECK(t.predict(row) == walk(t, row));
  }

  const SparseFeatures constant(5, SparseRow{{0, 0.5}});
  const std::vector<std::size_t> labels{2, 1, 2, 0, 1};
  const DecisionTree stump = train_decision_tree(constant, labels, 3, 1);
  CHECK(stump.nodes.size() == 1);
  // Tie between classes 1 and 2 goes to the lower id.
  CHECK(stump.nodes[0].label == 1);
}

TEST_CASE("sgd linear: separable toy, uniform start, determinism") {
  const std::vector<std::string> texts{"disk full",      "disk error",   "network down", "network lost",
                                       "login failed",   "login denied", "disk slow",    "network flap"};
  const std::vector<std::size_t> y{0, 0, 1, 1, 2, 2, 0, 1};
  const FeatureDictionary d = featurize_fit(texts);
  const SparseFeatures x = featurize_apply(d, texts);
  SgdOptions o;
  o.seed = 5;
  const SgdResult r = train_sgd_linear(x, y, 3, d.size(), o);
  CHECK(predict_linear(r.model, x) == y);
  REQUIRE(r.epoch_losses.size() == 50);
  for (std::size_t e = 1; e < r.epoch_losses.size(); ++e) CHECK(r.epoch_losses[e] <= r.epoch_losses[e - 1] + 1e-12);
  CHECK(linear_loss(r.model, x, y, o.l2) == doctest::Approx(r.epoch_losses.back()).epsilon(1e-12));

  LinearModel zero{3, d.size(), std::vector<double>(3 * d.size(), 0.0), {0.0, 0.0, 0.0}};
  CHECK(linear_loss(zero, x, y, 1e-4) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  for (double p : zero.probabilities(x[0])) CHECK(p == doctest::Approx(1.0 / 3.0));

  const SgdResult again = train_sgd_linear(x, y, 3, d.size(), o);
  CHECK(again.model.weights == r.model.weights);
  o.seed = 6;
  CHECK(train_sgd_linear(x, y, 3, d.size(), o).model.weights != r.model.weights);

  SgdOptions wild;
  wild.learning_rate = 1e300;
  wild.l2 = 0.0;
  CHECK_THROWS_AS(train_sgd_linear(x, y, 3, d.size(), wild), NumericError);
  wild.l2 = 1e-299;
  CHECK_THROWS_AS(train_sgd_linear(x, y, 3, d.size(), wild), InvalidArgument);
}

TEST_CASE("baseline model: train, predict, persist") {
  std::vector<LabeledExample> train;
  const char* lines[][2] = {{"request took 900 ms", "Latency"},       {"slow response 5000 ms", "Latency"},
                            {"error reading block", "Error"},         {"fatal error in worker", "Error"},
                            {"queue full 99 percent", "Saturation"},  {"memory full on host", "Saturation"},
                            {"service started ok", "Information"},    {"heartbeat received", "Information"},
                            {"node unreachable", "Availability"},     {"service unavailable", "Availability"}};
  for (auto& l : lines) train.push_back({l[0], l[1], Task::kGoldenSignal, std::nullopt});
  testing::TempDir dir("baseline");
  for (BaselineKind kind : {BaselineKind::kDecisionTree, BaselineKind::kSgdLinear}) {
    const BaselineModel m = train_baseline(kind, train);
    std::vector<std::string> texts;
    for (const auto& e : train) texts.push_back(e.text);
    const auto pred = m.predict(texts);
    for (std::size_t i = 0; i < train.size(); ++i) CHECK(pred[i] == train[i].label);
    const auto path = dir / (std::string(baseline_code(kind)) + ".json");
    m.save(path);
    const BaselineModel back = BaselineModel::load(path);
    CHECK(back.kind == kind);
    CHECK(back.dictionary == m.dictionary);
    CHECK(back.predict(texts) == pred);
    CHECK(back.to_json() == m.to_json());
  }
  CHECK(parse_baseline("dt") == BaselineKind::kDecisionTree);
  CHECK(baseline_title(BaselineKind::kSgdLinear) == "SGD");
  CHECK_THROWS_AS(parse_baseline("svm"), InvalidArgument);
  CHECK_THROWS(train_baseline(BaselineKind::kSgdLinear, std::vector<LabeledExample>{}));
}

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "logrep/error.hpp"
#include "logrep/metrics.hpp"

using namespace logrep;

namespace {

struct Brute {
  double p = 0.0, r = 0.0, f1 = 0.0, accuracy = 0.0;
};

// Per-class recount straight from the label lists, no confusion matrix.
Brute brute_prf(const std::vector<std::string>& truth, const std::vector<std::string>& pred,
                const std::vector<std::string>& classes) {
  Brute b;
  const double n = static_cast<double>(truth.size());
  for (const auto& c : classes) {
    double tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == c, p = pred[i] == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
      support += t;
    }
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    b.p += support * prec / n;
    b.r += support * rec / n;
    b.f1 += support * f / n;
  }
  for (std::size_t i = 0; i < truth.size(); ++i) b.accuracy += (truth[i] == pred[i]) / n;
  return b;
}

std::vector<std::string> class_names(std::size_t c) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < c; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

std::vector<std::string> repeat(std::initializer_list<std::pair<const char*, int>> runs) {
  std::vector<std::string> out;
  for (const auto& [label, n] : runs) out.insert(out.end(), static_cast<std::size_t>(n), label);
  return out;
}

}  // namespace

TEST_CASE("confusion matrix: counts, absent classes, errors") {
  const std::vector<std::string> classes{"a", "b", "z"};
  const std::vector<std::string> t{"a", "a", "b"}, p{"a", "b", "b"};
  const auto m = confusion_matrix(t, p, classes);
  CHECK(m == ConfusionMatrix{{1, 1, 0}, {0, 1, 0}, {0, 0, 0}});
  CHECK(confusion_matrix(t, t, classes) == ConfusionMatrix{{2, 0, 0}, {0, 1, 0}, {0, 0, 0}});

  const std::vector<std::string> bad{"a", "q", "b"};
  CHECK_THROWS_AS(confusion_matrix(t, bad, classes), InvalidArgument);
  const std::vector<std::string> shorter{"a"};
  CHECK_THROWS_AS(confusion_matrix(t, shorter, classes), InvalidArgument);
  CHECK_THROWS_AS(weighted_prf(std::vector<std::string>{}, std::vector<std::string>{}, classes),
                  InvalidArgument);
}

TEST_CASE("weighted prf: hand example") {
  const std::vector<std::string> classes{"a", "b"};
  const std::vector<std::string> t{"a", "a", "b"}, p{"a", "b", "b"};
  const PrfScores s = weighted_prf(t, p, classes);
  REQUIRE(s.per_class.size() == 2);
  CHECK(s.per_class[0].precision == doctest::Approx(1.0));
  CHECK(s.per_class[0].recall == doctest::Approx(0.5));
  CHECK(s.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(s.per_class[1].precision == doctest::Approx(0.5));
  CHECK(s.per_class[1].recall == doctest::Approx(1.0));
  CHECK(s.per_class[1].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(s.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(s.per_class[0].support == 2);

  const PrfScores perfect = weighted_prf(t, t, classes);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);
}

TEST_CASE("weighted prf: zero denominators are counted and scored 0") {
  const std::vector<std::string> classes{"a", "b", "c"};
  // "c" is never true and never predicted; "b" is true but never predicted.
  const std::vector<std::string> t{"a", "b"}, p{"a", "a"};
  const PrfScores s = weighted_prf(t, p, classes);
  CHECK(s.per_class[1].precision == 0.0);
  CHECK(s.per_class[2].precision == 0.0);
  CHECK(s.per_class[2].recall == 0.0);
  CHECK(s.undefined_count == 3);
}

TEST_CASE("weighted prf: brute-force oracle on 1000 random label vectors") {
  std::mt19937_64 gen(1234);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = std::uniform_int_distribution<std::size_t>(2, 16)(gen);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 500)(gen);
    const auto classes = class_names(c);
    std::uniform_int_distribution<std::size_t> pick(0, c - 1);
    std::bernoulli_distribution keep(0.6);
    std::vector<std::string> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = classes[pick(gen)];
      p[i] = keep(gen) ? t[i] : classes[pick(gen)];
    }
    const Brute b = brute_prf(t, p, classes);
    const PrfScores s = weighted_prf(t, p, classes);
    worst = std::max({worst, std::abs(s.precision - b.p), std::abs(s.recall - b.r),
                      std::abs(s.f1 - b.f1)});
    // Weighted recall is accuracy for single-label data.
    CHECK(std::abs(s.recall - b.accuracy) < 1e-12);

    const auto m = confusion_matrix(t, p, classes);
    std::size_t total = 0;
    for (std::size_t i = 0; i < c; ++i) {
      const auto row = std::accumulate(m[i].begin(), m[i].end(), std::size_t{0});
      CHECK(row == static_cast<std::size_t>(std::count(t.begin(), t.end(), classes[i])));
      total += row;
    }
    CHECK(total == n);
    CHECK(s.f1 >= 0.0);
    CHECK(s.f1 <= 1.0);

    if (trial % 50 == 0) {
      // Permuting the class table leaves the weighted scores unchanged.
      auto shuffled = classes;
      std::shuffle(shuffled.begin(), shuffled.end(), gen);
      const PrfScores q = weighted_prf(t, p, shuffled);
      CHECK(std::abs(q.f1 - s.f1) < 1e-12);
      CHECK(std::abs(q.precision - s.precision) < 1e-12);
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("row normalization") {
  const auto r = row_normalize_percent({{1, 1}, {0, 1}});
  CHECK(r == std::vector<std::vector<std::string>>{{"50.00", "50.00"}, {"0.00", "100.00"}});
  CHECK(row_normalize_percent({{3, 0}, {0, 0}})[1] == std::vector<std::string>{"-", "-"});
  CHECK(row_normalize({{0, 0}})[0].empty());

  std::mt19937_64 gen(5);
  std::uniform_int_distribution<std::size_t> count(0, 997);
  for (int trial = 0; trial < 200; ++trial) {
    ConfusionMatrix m(7, std::vector<std::size_t>(7));
    for (auto& row : m) {
      for (auto& v : row) v = count(gen);
      row[0] += 1;
    }
    for (const auto& row : row_normalize_percent(m)) {
      double sum = 0.0;
      for (const auto& cell : row) sum += std::stod(cell);
      CHECK(std::abs(sum - 100.0) <= 0.02 + 1e-9);
    }
  }
}

TEST_CASE("cohen kappa: hand examples and properties") {
  const std::vector<std::string> a{"A", "A", "B", "B"}, b{"A", "B", "A", "B"};
  CHECK(cohen_kappa(a, b) == 0.0);
  CHECK(cohen_kappa(a, a) == 1.0);

  // 20 both-A, 15 both-B, 5 A/B, 10 B/A: marginals 25/25 and 30/20 give
  // p_o = 0.7 and p_e = 0.5.
  const auto first = repeat({{"A", 20}, {"B", 15}, {"A", 5}, {"B", 10}});
  const auto second = repeat({{"A", 20}, {"B", 15}, {"B", 5}, {"A", 10}});
  CHECK(cohen_kappa(first, second) == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(cohen_kappa(ConfusionMatrix{{20, 5}, {10, 15}}) == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(kappa_from_agreement(0.7, 0.5) == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(kappa_from_agreement(0.7, 0.52) == doctest::Approx(0.375).epsilon(1e-14));

  // Chance agreement of 1: both annotators always say the same single label.
  const std::vector<std::string> same(5, "A");
  CHECK(cohen_kappa(same, same) == 1.0);
  CHECK(kappa_from_agreement(0.9, 1.0) == 0.0);
  CHECK(kappa_from_agreement(1.0, 1.0) == 1.0);

  CHECK_THROWS_AS(cohen_kappa(a, std::vector<std::string>{"A"}), InvalidArgument);
  CHECK_THROWS_AS(cohen_kappa(std::vector<std::string>{}, std::vector<std::string>{}), InvalidArgument);

  std::mt19937_64 gen(77);
  std::uniform_int_distribution<int> label(0, 3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 40);
    std::vector<std::string> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = std::string(1, static_cast<char>('A' + label(gen)));
      y[i] = trial % 3 == 0 ? x[i] : std::string(1, static_cast<char>('A' + label(gen)));
    }
    const double k = cohen_kappa(x, y);
    CHECK(k == doctest::Approx(cohen_kappa(y, x)).epsilon(1e-15));
    CHECK(k >= -1.0);
    CHECK(k <= 1.0);
    CHECK((k == 1.0) == (x == y));
  }
}

TEST_CASE("evaluate: report fields and JSON") {
  const std::vector<std::string> classes{"a", "b"};
  const std::vector<std::string> t{"a", "a", "b"}, p{"a", "b", "b"};
  const EvalReport r = evaluate(t, p, classes, "lfd", "Encoder");
  CHECK(r.examples == 3);
  CHECK(r.confusion == ConfusionMatrix{{1, 1}, {0, 1}});
  const auto j = r.to_json();
  CHECK(j.at("f1").get<double>() == doctest::Approx(2.0 / 3.0));
  CHECK(j.at("task") == "lfd");
  CHECK(j.at("model") == "Encoder");
  // Kappa is reported on a 0-100 scale.
  CHECK(j.at("kappa").get<double>() == doctest::Approx(100.0 * cohen_kappa(t, p)));
  CHECK(j.at("per_class").size() == 2);
}

TEST_CASE("majority baseline f1") {
  const std::vector<std::string> classes{"a", "b", "c"};
  const std::vector<std::string> t{"b", "b", "a", "c"};
  // Always "b": P_b = .5, R_b = 1, F1_b = 2/3 with support 2 of 4.
  CHECK(majority_baseline_f1(t, classes) == doctest::Approx(1.0 / 3.0));
  // Tie between a and b goes to a.
  const std::vector<std::string> tie{"b", "a"};
  CHECK(majority_baseline_f1(tie, classes) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(majority_baseline_f1(std::vector<std::string>{}, classes), InvalidArgument);
}

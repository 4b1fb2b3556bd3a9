#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace logrep {

/// Rows are true classes, columns predicted classes.
using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

/// Labels are class names; every one must appear in `classes`.
ConfusionMatrix confusion_matrix(std::span<const std::string> truth,
                                 std::span<const std::string> predicted,
                                 std::span<const std::string> classes);
ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth,
                                 std::span<const std::size_t> predicted, std::size_t num_classes);

struct ClassScores {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct PrfScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<ClassScores> per_class;
  /// Per-class precision or recall values that had a zero denominator and
  /// were set to 0.
  std::size_t undefined_count = 0;
};

/// Support-weighted average of per-class precision, recall and F1.
PrfScores weighted_prf(const ConfusionMatrix& confusion, std::span<const std::string> classes = {});
PrfScores weighted_prf(std::span<const std::string> truth, std::span<const std::string> predicted,
                       std::span<const std::string> classes);

struct EvalReport {
  std::string task;
  std::string model;
  std::vector<std::string> classes;
  ConfusionMatrix confusion;
  PrfScores scores;
  /// Cohen's kappa between truth and prediction; to_json reports it x100.
  double kappa = 0.0;
  std::size_t examples = 0;

  nlohmann::json to_json() const;
};

EvalReport evaluate(std::span<const std::string> truth, std::span<const std::string> predicted,
                    std::span<const std::string> classes, std::string task = {},
                    std::string model = {});

/// Each row scaled to sum to 100 and rendered with two decimals; rows with
/// no examples render as "-".
std::vector<std::vector<std::string>> row_normalize_percent(const ConfusionMatrix& confusion);
/// Numeric form of the above; all-zero rows come back empty.
std::vector<std::vector<double>> row_normalize(const ConfusionMatrix& confusion);

/// Cohen's kappa between two annotators. When chance agreement is 1 the
/// value is 1 if the annotators agree everywhere and 0 otherwise.
double cohen_kappa(std::span<const std::string> first, std::span<const std::string> second);
/// The same statistic read off a contingency table of the two annotators.
double cohen_kappa(const ConfusionMatrix& contingency);
/// (p_o - p_e) / (1 - p_e) with the same p_e = 1 rule.
double kappa_from_agreement(double observed, double chance);

/// Weighted F1 of always predicting the most frequent true class (lowest
/// class index on ties).
double majority_baseline_f1(std::span<const std::string> truth, std::span<const std::string> classes);

}  // namespace logrep

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "logrep/corpus.hpp"

namespace logrep {

inline constexpr int kBaselineFormatVersion = 1;

/// Unigram TF-IDF vocabulary fitted on training texts only. Terms are
/// whitespace tokens of the normalized line, in sorted order.
class FeatureDictionary {
 public:
  FeatureDictionary() = default;
  FeatureDictionary(std::vector<std::string> terms, std::vector<double> idf, std::size_t documents);

  std::size_t size() const noexcept { return terms_.size(); }
  std::size_t documents() const noexcept { return documents_; }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  const std::vector<double>& idf() const noexcept { return idf_; }
  std::optional<std::size_t> find(std::string_view term) const;

  friend bool operator==(const FeatureDictionary& a, const FeatureDictionary& b) {
    return a.terms_ == b.terms_ && a.idf_ == b.idf_ && a.documents_ == b.documents_;
  }

 private:
  std::vector<std::string> terms_;
  std::vector<double> idf_;
  std::size_t documents_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
};

/// (feature, weight) pairs sorted by feature index.
using SparseRow = std::vector<std::pair<std::size_t, double>>;
using SparseFeatures = std::vector<SparseRow>;

/// idf = ln((1 + N) / (1 + df)) + 1 over the N training documents.
FeatureDictionary featurize_fit(std::span<const std::string> train_texts);

/// Raw term counts times idf, each row scaled to unit L2 norm. Terms the
/// dictionary has not seen are dropped.
SparseFeatures featurize_apply(const FeatureDictionary& dict, std::span<const std::string> texts);

/// Gini impurity 1 - sum p_c^2 of a class histogram.
double gini(std::span<const std::size_t> counts);

struct TreeNode {
  /// -1 marks a leaf.
  std::int64_t feature = -1;
  double threshold = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
  std::size_t label = 0;
};

/// Binary tree with axis-aligned splits: go left when x[feature] <= threshold.
struct DecisionTree {
  std::size_t num_classes = 0;
  std::size_t num_features = 0;
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  std::size_t predict(const SparseRow& row) const;
  std::size_t depth() const;
};

/// CART with Gini impurity, grown until nodes are pure or no split lowers
/// impurity. Candidate thresholds are midpoints between consecutive distinct
/// values; ties go to the lower feature index, then the lower threshold.
/// Leaves predict the majority class, lowest class id on ties.
DecisionTree train_decision_tree(const SparseFeatures& features, std::span<const std::size_t> labels,
                                 std::size_t num_classes, std::size_t num_features);
std::vector<std::size_t> predict_tree(const DecisionTree& tree, const SparseFeatures& features);

struct LinearModel {
  std::size_t num_classes = 0;
  std::size_t num_features = 0;
  std::vector<double> weights;  // num_classes x num_features, row-major
  std::vector<double> bias;

  std::vector<double> scores(const SparseRow& row) const;
  std::vector<double> probabilities(const SparseRow& row) const;
  std::size_t predict(const SparseRow& row) const;
};

struct SgdOptions {
  std::size_t epochs = 50;
  double learning_rate = 0.1;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

struct SgdResult {
  LinearModel model;
  /// Mean regularized training loss after each epoch.
  std::vector<double> epoch_losses;
};

/// Multinomial logistic regression with per-example updates over a seeded
/// shuffle each epoch. Throws NumericError if the loss diverges.
SgdResult train_sgd_linear(const SparseFeatures& features, std::span<const std::size_t> labels,
                           std::size_t num_classes, std::size_t num_features,
                           const SgdOptions& options);
std::vector<std::size_t> predict_linear(const LinearModel& model, const SparseFeatures& features);

/// Mean cross-entropy plus (l2 / 2) * ||W||^2.
double linear_loss(const LinearModel& model, const SparseFeatures& features,
                   std::span<const std::size_t> labels, double l2);

enum class BaselineKind { kDecisionTree, kSgdLinear };

std::string_view baseline_code(BaselineKind kind);  // "dt", "sgd"
std::string_view baseline_title(BaselineKind kind);
BaselineKind parse_baseline(std::string_view code);

/// A fitted featurizer plus classifier for one task.
struct BaselineModel {
  BaselineKind kind = BaselineKind::kDecisionTree;
  Task task = Task::kFormatDetection;
  std::vector<std::string> class_names;
  FeatureDictionary dictionary;
  DecisionTree tree;
  LinearModel linear;

  std::vector<std::string> predict(std::span<const std::string> texts) const;
  std::vector<std::size_t> predict_ids(std::span<const std::string> texts) const;

  nlohmann::json to_json() const;
  static BaselineModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static BaselineModel load(const std::filesystem::path& path);
};

/// Fits the dictionary and classifier on labeled examples of one task.
BaselineModel train_baseline(BaselineKind kind, std::span<const LabeledExample> train,
                             const SgdOptions& sgd = {});

}  // namespace logrep

#include "logrep/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include "logrep/error.hpp"
#include "logrep/io.hpp"
#include "logrep/normalize.hpp"
#include "logrep/rng.hpp"
#include "logrep/text.hpp"

namespace logrep {
namespace {

using nlohmann::json;

constexpr std::string_view kBaselineFormat = "logrep.baseline";
constexpr double kImpurityEps = 1e-12;

std::vector<std::string> terms_of(std::string_view raw) {
  return text::split_whitespace(normalize_line(raw));
}

std::size_t majority(std::span<const std::size_t> counts) {
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

void check_training_set(const SparseFeatures& features, std::span<const std::size_t> labels,
                        std::size_t num_classes) {
  if (features.empty()) throw DataError("baseline training set is empty");
  if (features.size() != labels.size()) throw InvalidArgument("feature and label counts differ");
  if (num_classes < 2) throw InvalidArgument("a classifier needs at least 2 classes");
  for (std::size_t y : labels) {
    if (y >= num_classes) throw InvalidArgument("label " + std::to_string(y) + " outside class table");
  }
}

// Column view of the training matrix: for every feature, its non-zero
// (sample, value) entries.
using Columns = std::vector<std::vector<std::pair<std::size_t, double>>>;

class TreeBuilder {
 public:
  TreeBuilder(const SparseFeatures& rows, std::span<const std::size_t> labels, std::size_t classes,
              std::size_t features)
      : rows_(rows), labels_(labels), classes_(classes), columns_(features),
        in_node_(rows.size(), 0) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (const auto& [f, v] : rows[i]) {
        if (f >= features) throw InvalidArgument("feature index outside dictionary");
        if (v != 0.0) columns_[f].emplace_back(i, v);
      }
    }
  }

  std::size_t build(std::vector<TreeNode>& nodes, const std::vector<std::size_t>& samples) {
    std::vector<std::size_t> counts(classes_, 0);
    for (std::size_t s : samples) ++counts[labels_[s]];
    const std::size_t id = nodes.size();
    nodes.push_back(TreeNode{-1, 0.0, 0, 0, majority(counts)});

    const double parent = gini(counts);
    if (parent <= kImpurityEps) return id;
    const auto split = best_split(samples, counts, parent);
    if (!split) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t s : samples) {
      (value(s, split->first) <= split->second ? left : right).push_back(s);
    }
    nodes[id].feature = static_cast<std::int64_t>(split->first);
    nodes[id].threshold = split->second;
    const std::size_t l = build(nodes, left);
    const std::size_t r = build(nodes, right);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }

 private:
  double value(std::size_t sample, std::size_t feature) const {
    const auto& row = rows_[sample];
    const auto it = std::lower_bound(row.begin(), row.end(), feature,
                                     [](const auto& e, std::size_t f) { return e.first < f; });
    return it != row.end() && it->first == feature ? it->second : 0.0;
  }

  std::optional<std::pair<std::size_t, double>> best_split(const std::vector<std::size_t>& samples,
                                                           const std::vector<std::size_t>& counts,
                                                           double parent) {
    for (std::size_t s : samples) in_node_[s] = 1;
    std::vector<std::size_t> candidates;
    for (std::size_t s : samples) {
      for (const auto& [f, v] : rows_[s]) {
        if (v != 0.0) candidates.push_back(f);
      }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    const auto n = static_cast<double>(samples.size());
    double best = parent - kImpurityEps;
    std::optional<std::pair<std::size_t, double>> choice;
    std::vector<std::pair<double, std::size_t>> entries;
    std::vector<std::size_t> left(classes_), right(classes_);
    for (std::size_t f : candidates) {
      entries.clear();
      for (const auto& [s, v] : columns_[f]) {
        if (in_node_[s]) entries.emplace_back(v, labels_[s]);
      }
      std::sort(entries.begin(), entries.end());
      // Samples without a stored value are zeros; they form one block that
      // sits between the negative and the positive stored values.
      const std::size_t zeros = samples.size() - entries.size();
      std::vector<std::size_t> zero_counts = counts;
      for (const auto& e : entries) --zero_counts[e.second];
      right = counts;
      std::fill(left.begin(), left.end(), 0);
      std::size_t n_left = 0;
      const auto consider = [&](double threshold) {
        if (n_left == 0 || n_left == samples.size()) return;
        const auto nl = static_cast<double>(n_left);
        const double impurity = (nl * gini(left) + (n - nl) * gini(right)) / n;
        if (impurity < best - kImpurityEps || (!choice && impurity < best)) {
          best = impurity;
          choice = std::make_pair(f, threshold);
        }
      };
      std::optional<double> prev;
      const auto reach = [&](double value) {
        if (prev && value > *prev) consider(0.5 * (*prev + value));
        prev = value;
      };
      const auto first_non_negative = static_cast<std::size_t>(
          std::partition_point(entries.begin(), entries.end(), [](const auto& e) { return e.first < 0.0; }) -
          entries.begin());
      for (std::size_t i = 0; i <= entries.size(); ++i) {
        if (i == first_non_negative && zeros > 0) {
          reach(0.0);
          for (std::size_t c = 0; c < classes_; ++c) {
            left[c] += zero_counts[c];
            right[c] -= zero_counts[c];
          }
          n_left += zeros;
        }
        if (i == entries.size()) break;
        reach(entries[i].first);
        ++left[entries[i].second];
        --right[entries[i].second];
        ++n_left;
      }
    }
    for (std::size_t s : samples) in_node_[s] = 0;
    return choice;
  }

  const SparseFeatures& rows_;
  std::span<const std::size_t> labels_;
  std::size_t classes_;
  Columns columns_;
  std::vector<std::uint8_t> in_node_;
};

double dot(const std::vector<double>& w, std::size_t offset, const SparseRow& row) {
  double s = 0.0;
  for (const auto& [f, v] : row) s += w[offset + f] * v;
  return s;
}

void softmax_in_place(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& x : z) sum += (x = std::exp(x - m));
  for (double& x : z) x /= sum;
}

json tree_to_json(const DecisionTree& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes) {
    nodes.push_back({n.feature, n.threshold, n.left, n.right, n.label});
  }
  return {{"num_classes", t.num_classes}, {"num_features", t.num_features}, {"nodes", nodes}};
}

DecisionTree tree_from_json(const json& j) {
  DecisionTree t;
  t.num_classes = j.at("num_classes").get<std::size_t>();
  t.num_features = j.at("num_features").get<std::size_t>();
  for (const auto& n : j.at("nodes")) {
    TreeNode node{n.at(0).get<std::int64_t>(), n.at(1).get<double>(), n.at(2).get<std::size_t>(),
                  n.at(3).get<std::size_t>(), n.at(4).get<std::size_t>()};
    t.nodes.push_back(node);
  }
  for (const auto& n : t.nodes) {
    if (n.feature >= 0 && (n.left >= t.nodes.size() || n.right >= t.nodes.size() ||
                           static_cast<std::size_t>(n.feature) >= t.num_features)) {
      throw FormatError("decision tree node references are out of range");
    }
  }
  if (t.nodes.empty()) throw FormatError("decision tree has no nodes");
  return t;
}

}  // namespace

FeatureDictionary::FeatureDictionary(std::vector<std::string> terms, std::vector<double> idf,
                                     std::size_t documents)
    : terms_(std::move(terms)), idf_(std::move(idf)), documents_(documents) {
  if (terms_.size() != idf_.size()) throw InvalidArgument("terms and idf lengths differ");
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (!index_.emplace(terms_[i], i).second) throw InvalidArgument("duplicate term " + terms_[i]);
  }
}

std::optional<std::size_t> FeatureDictionary::find(std::string_view term) const {
  const auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

FeatureDictionary featurize_fit(std::span<const std::string> train_texts) {
  if (train_texts.empty()) throw DataError("cannot fit features on an empty training set");
  std::map<std::string, std::size_t> df;
  for (const auto& t : train_texts) {
    auto terms = terms_of(t);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (auto& term : terms) ++df[std::move(term)];
  }
  const auto n = static_cast<double>(train_texts.size());
  std::vector<std::string> terms;
  std::vector<double> idf;
  for (const auto& [term, count] : df) {
    terms.push_back(term);
    idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  return FeatureDictionary(std::move(terms), std::move(idf), train_texts.size());
}

SparseFeatures featurize_apply(const FeatureDictionary& dict, std::span<const std::string> texts) {
  SparseFeatures out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    std::map<std::size_t, double> counts;
    for (const auto& term : terms_of(t)) {
      if (const auto id = dict.find(term)) counts[*id] += 1.0;
    }
    SparseRow row;
    double norm = 0.0;
    for (const auto& [id, c] : counts) {
      const double w = c * dict.idf()[id];
      row.emplace_back(id, w);
      norm += w * w;
    }
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (auto& e : row) e.second /= norm;
    }
    out.push_back(std::move(row));
  }
  return out;
}

double gini(std::span<const std::size_t> counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (total == 0.0) return 0.0;
  double sum_sq = 0.0;
  for (std::size_t c : counts) {
    const double p = static_cast<double>(c) / total;
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

std::size_t DecisionTree::predict(const SparseRow& row) const {
  std::size_t at = 0;
  while (nodes[at].feature >= 0) {
    const auto f = static_cast<std::size_t>(nodes[at].feature);
    const auto it = std::lower_bound(row.begin(), row.end(), f,
                                     [](const auto& e, std::size_t g) { return e.first < g; });
    const double x = it != row.end() && it->first == f ? it->second : 0.0;
    at = x <= nodes[at].threshold ? nodes[at].left : nodes[at].right;
  }
  return nodes[at].label;
}

std::size_t DecisionTree::depth() const {
  std::function<std::size_t(std::size_t)> walk = [&](std::size_t at) -> std::size_t {
    if (nodes[at].feature < 0) return 0;
    return 1 + std::max(walk(nodes[at].left), walk(nodes[at].right));
  };
  return nodes.empty() ? 0 : walk(0);
}

DecisionTree train_decision_tree(const SparseFeatures& features, std::span<const std::size_t> labels,
                                 std::size_t num_classes, std::size_t num_features) {
  check_training_set(features, labels, num_classes);
  DecisionTree tree;
  tree.num_classes = num_classes;
  tree.num_features = num_features;
  std::vector<std::size_t> all(features.size());
  std::iota(all.begin(), all.end(), 0);
  TreeBuilder(features, labels, num_classes, num_features).build(tree.nodes, all);
  return tree;
}

std::vector<std::size_t> predict_tree(const DecisionTree& tree, const SparseFeatures& features) {
  std::vector<std::size_t> out;
  out.reserve(features.size());
  for (const auto& row : features) out.push_back(tree.predict(row));
  return out;
}

std::vector<double> LinearModel::scores(const SparseRow& row) const {
  std::vector<double> z(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    double s = bias[c];
    for (const auto& [f, v] : row) {
      if (f < num_features) s += weights[c * num_features + f] * v;
    }
    z[c] = s;
  }
  return z;
}

std::vector<double> LinearModel::probabilities(const SparseRow& row) const {
  auto z = scores(row);
  softmax_in_place(z);
  return z;
}

std::size_t LinearModel::predict(const SparseRow& row) const {
  const auto z = scores(row);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

double linear_loss(const LinearModel& model, const SparseFeatures& features,
                   std::span<const std::size_t> labels, double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    auto z = model.scores(features[i]);
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double x : z) sum += std::exp(x - m);
    loss += m + std::log(sum) - z[labels[i]];
  }
  loss /= static_cast<double>(features.size());
  double sq = 0.0;
  for (double w : model.weights) sq += w * w;
  return loss + 0.5 * l2 * sq;
}

SgdResult train_sgd_linear(const SparseFeatures& features, std::span<const std::size_t> labels,
                           std::size_t num_classes, std::size_t num_features,
                           const SgdOptions& options) {
  check_training_set(features, labels, num_classes);
  if (!(options.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (options.l2 < 0.0 || options.learning_rate * options.l2 >= 1.0) {
    throw InvalidArgument("l2 must be non-negative with learning_rate * l2 < 1");
  }
  SgdResult result;
  LinearModel& model = result.model;
  model.num_classes = num_classes;
  model.num_features = num_features;
  model.bias.assign(num_classes, 0.0);
  // Weights are held as scale * v so the L2 shrink of every weight is one
  // multiplication per example.
  std::vector<double> v(num_classes * num_features, 0.0);
  double scale = 1.0;
  const double shrink = 1.0 - options.learning_rate * options.l2;

  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> z(num_classes);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    Rng rng(derive_seed(options.seed, epoch));
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      const SparseRow& row = features[i];
      for (const auto& [f, x] : row) {
        if (f >= num_features) throw InvalidArgument("feature index outside dictionary");
      }
      for (std::size_t c = 0; c < num_classes; ++c) {
        z[c] = scale * dot(v, c * num_features, row) + model.bias[c];
      }
      softmax_in_place(z);
      z[labels[i]] -= 1.0;
      scale *= shrink;
      for (std::size_t c = 0; c < num_classes; ++c) {
        const double step = options.learning_rate * z[c];
        for (const auto& [f, x] : row) v[c * num_features + f] -= step * x / scale;
        model.bias[c] -= step;
      }
      if (scale < 1e-9) {
        for (double& w : v) w *= scale;
        scale = 1.0;
      }
    }
    model.weights.resize(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) model.weights[j] = scale * v[j];
    const double loss = linear_loss(model, features, labels, options.l2);
    if (!std::isfinite(loss)) {
      throw NumericError("SGD diverged at epoch " + std::to_string(epoch) + " (learning rate " +
                         std::to_string(options.learning_rate) + ")");
    }
    result.epoch_losses.push_back(loss);
  }
  model.weights.resize(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) model.weights[j] = scale * v[j];
  return result;
}

std::vector<std::size_t> predict_linear(const LinearModel& model, const SparseFeatures& features) {
  std::vector<std::size_t> out;
  out.reserve(features.size());
  for (const auto& row : features) out.push_back(model.predict(row));
  return out;
}

std::string_view baseline_code(BaselineKind kind) {
  return kind == BaselineKind::kDecisionTree ? "dt" : "sgd";
}

std::string_view baseline_title(BaselineKind kind) {
  return kind == BaselineKind::kDecisionTree ? "Decision Tree" : "SGD";
}

BaselineKind parse_baseline(std::string_view code) {
  std::string lower(code);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "dt" || lower == "decision-tree" || lower == "tree") return BaselineKind::kDecisionTree;
  if (lower == "sgd" || lower == "sgd-linear" || lower == "linear") return BaselineKind::kSgdLinear;
  throw InvalidArgument("unknown baseline '" + std::string(code) + "' (expected dt or sgd)");
}

std::vector<std::size_t> BaselineModel::predict_ids(std::span<const std::string> texts) const {
  const SparseFeatures x = featurize_apply(dictionary, texts);
  return kind == BaselineKind::kDecisionTree ? predict_tree(tree, x) : predict_linear(linear, x);
}

std::vector<std::string> BaselineModel::predict(std::span<const std::string> texts) const {
  std::vector<std::string> out;
  for (std::size_t id : predict_ids(texts)) out.push_back(class_names.at(id));
  return out;
}

json BaselineModel::to_json() const {
  json j = {{"format", kBaselineFormat},
            {"format_version", kBaselineFormatVersion},
            {"kind", baseline_code(kind)},
            {"task", task_code(task)},
            {"classes", class_names},
            {"dictionary",
             {{"documents", dictionary.documents()},
              {"terms", dictionary.terms()},
              {"idf", dictionary.idf()}}}};
  if (kind == BaselineKind::kDecisionTree) {
    j["tree"] = tree_to_json(tree);
  } else {
    j["linear"] = {{"num_classes", linear.num_classes},
                   {"num_features", linear.num_features},
                   {"weights", linear.weights},
                   {"bias", linear.bias}};
  }
  return j;
}

BaselineModel BaselineModel::from_json(const json& j) {
  if (j.value("format", "") != kBaselineFormat) throw FormatError("not a baseline model");
  if (j.value("format_version", -1) != kBaselineFormatVersion) {
    throw FormatError("baseline model format_version mismatch");
  }
  BaselineModel m;
  try {
    m.kind = parse_baseline(j.at("kind").get<std::string>());
    m.task = parse_task(j.at("task").get<std::string>());
    m.class_names = j.at("classes").get<std::vector<std::string>>();
    const auto& d = j.at("dictionary");
    m.dictionary = FeatureDictionary(d.at("terms").get<std::vector<std::string>>(),
                                     d.at("idf").get<std::vector<double>>(),
                                     d.at("documents").get<std::size_t>());
    if (m.kind == BaselineKind::kDecisionTree) {
      m.tree = tree_from_json(j.at("tree"));
    } else {
      const auto& l = j.at("linear");
      m.linear.num_classes = l.at("num_classes").get<std::size_t>();
      m.linear.num_features = l.at("num_features").get<std::size_t>();
      m.linear.weights = l.at("weights").get<std::vector<double>>();
      m.linear.bias = l.at("bias").get<std::vector<double>>();
      if (m.linear.weights.size() != m.linear.num_classes * m.linear.num_features ||
          m.linear.bias.size() != m.linear.num_classes) {
        throw FormatError("linear model weight shape mismatch");
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed baseline model: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("malformed baseline model: ") + e.what());
  }
  return m;
}

void BaselineModel::save(const std::filesystem::path& path) const {
  io::write_file(path, to_json().dump() + "\n");
}

BaselineModel BaselineModel::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw FormatError("baseline model is not JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

BaselineModel train_baseline(BaselineKind kind, std::span<const LabeledExample> train,
                             const SgdOptions& sgd) {
  if (train.empty()) throw DataError("baseline training set is empty");
  BaselineModel m;
  m.kind = kind;
  m.task = train.front().task;
  const auto classes = task_classes(m.task);
  m.class_names.assign(classes.begin(), classes.end());
  std::vector<std::string> texts;
  std::vector<std::size_t> labels;
  for (const auto& ex : train) {
    if (ex.task != m.task) throw InvalidArgument("baseline training set mixes tasks");
    const auto cls = class_index(m.task, ex.label);
    if (!cls) throw InvalidArgument("label '" + ex.label + "' is not a " + std::string(task_code(m.task)) + " class");
    texts.push_back(ex.text);
    labels.push_back(*cls);
  }
  m.dictionary = featurize_fit(texts);
  const SparseFeatures x = featurize_apply(m.dictionary, texts);
  if (kind == BaselineKind::kDecisionTree) {
    m.tree = train_decision_tree(x, labels, classes.size(), m.dictionary.size());
  } else {
    m.linear = train_sgd_linear(x, labels, classes.size(), m.dictionary.size(), sgd).model;
  }
  return m;
}

}  // namespace logrep

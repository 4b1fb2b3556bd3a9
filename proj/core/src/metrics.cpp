#include "logrep/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>

#include "logrep/error.hpp"

namespace logrep {
namespace {

std::vector<std::size_t> to_ids(std::span<const std::string> labels,
                                const std::map<std::string, std::size_t>& index) {
  std::vector<std::size_t> ids;
  ids.reserve(labels.size());
  for (const auto& l : labels) {
    const auto it = index.find(l);
    if (it == index.end()) throw InvalidArgument("label '" + l + "' is not in the class table");
    ids.push_back(it->second);
  }
  return ids;
}

std::map<std::string, std::size_t> class_map(std::span<const std::string> classes) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (!index.emplace(classes[i], i).second) throw InvalidArgument("duplicate class " + classes[i]);
  }
  return index;
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth,
                                 std::span<const std::size_t> predicted, std::size_t num_classes) {
  if (truth.size() != predicted.size()) throw InvalidArgument("label lists differ in length");
  ConfusionMatrix m(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= num_classes || predicted[i] >= num_classes) {
      throw InvalidArgument("class id outside the class table");
    }
    ++m[truth[i]][predicted[i]];
  }
  return m;
}

ConfusionMatrix confusion_matrix(std::span<const std::string> truth,
                                 std::span<const std::string> predicted,
                                 std::span<const std::string> classes) {
  if (truth.size() != predicted.size()) throw InvalidArgument("label lists differ in length");
  const auto index = class_map(classes);
  return confusion_matrix(to_ids(truth, index), to_ids(predicted, index), classes.size());
}

PrfScores weighted_prf(const ConfusionMatrix& confusion, std::span<const std::string> classes) {
  const std::size_t c = confusion.size();
  if (!classes.empty() && classes.size() != c) throw InvalidArgument("class table size mismatch");
  std::vector<std::size_t> col(c, 0);
  std::size_t total = 0;
  for (const auto& row : confusion) {
    if (row.size() != c) throw InvalidArgument("confusion matrix is not square");
    for (std::size_t j = 0; j < c; ++j) col[j] += row[j];
    total += std::accumulate(row.begin(), row.end(), std::size_t{0});
  }
  if (total == 0) throw InvalidArgument("cannot score an empty evaluation");
  PrfScores out;
  for (std::size_t i = 0; i < c; ++i) {
    const std::size_t tp = confusion[i][i];
    const std::size_t support = std::accumulate(confusion[i].begin(), confusion[i].end(), std::size_t{0});
    ClassScores s;
    s.name = classes.empty() ? std::to_string(i) : classes[i];
    s.support = support;
    if (col[i] > 0) {
      s.precision = static_cast<double>(tp) / static_cast<double>(col[i]);
    } else {
      ++out.undefined_count;
    }
    if (support > 0) {
      s.recall = static_cast<double>(tp) / static_cast<double>(support);
    } else {
      ++out.undefined_count;
    }
    if (s.precision + s.recall > 0.0) {
      s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    }
    const double w = static_cast<double>(support);
    out.precision += w * s.precision;
    out.recall += w * s.recall;
    out.f1 += w * s.f1;
    out.per_class.push_back(std::move(s));
  }
  const auto n = static_cast<double>(total);
  out.precision /= n;
  out.recall /= n;
  out.f1 /= n;
  return out;
}

PrfScores weighted_prf(std::span<const std::string> truth, std::span<const std::string> predicted,
                       std::span<const std::string> classes) {
  if (truth.empty()) throw InvalidArgument("cannot score an empty evaluation");
  return weighted_prf(confusion_matrix(truth, predicted, classes), classes);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& s : scores.per_class) {
    per_class.push_back({{"class", s.name},
                         {"precision", s.precision},
                         {"recall", s.recall},
                         {"f1", s.f1},
                         {"support", s.support}});
  }
  return {{"task", task},
          {"model", model},
          {"examples", examples},
          {"precision", scores.precision},
          {"recall", scores.recall},
          {"f1", scores.f1},
          {"kappa", 100.0 * kappa},
          {"undefined_count", scores.undefined_count},
          {"classes", classes},
          {"confusion", confusion},
          {"per_class", std::move(per_class)}};
}

EvalReport evaluate(std::span<const std::string> truth, std::span<const std::string> predicted,
                    std::span<const std::string> classes, std::string task, std::string model) {
  EvalReport r;
  r.task = std::move(task);
  r.model = std::move(model);
  r.classes.assign(classes.begin(), classes.end());
  r.confusion = confusion_matrix(truth, predicted, classes);
  r.scores = weighted_prf(r.confusion, classes);
  r.kappa = cohen_kappa(r.confusion);
  r.examples = truth.size();
  return r;
}

std::vector<std::vector<double>> row_normalize(const ConfusionMatrix& confusion) {
  std::vector<std::vector<double>> out;
  for (const auto& row : confusion) {
    const auto sum = static_cast<double>(std::accumulate(row.begin(), row.end(), std::size_t{0}));
    std::vector<double> r;
    if (sum > 0.0) {
      for (std::size_t v : row) r.push_back(100.0 * static_cast<double>(v) / sum);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::vector<std::string>> row_normalize_percent(const ConfusionMatrix& confusion) {
  std::vector<std::vector<std::string>> out;
  const auto rows = row_normalize(confusion);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<std::string> cells;
    if (rows[i].empty()) {
      cells.assign(confusion[i].size(), "-");
    } else {
      for (double v : rows[i]) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        cells.emplace_back(buf);
      }
    }
    out.push_back(std::move(cells));
  }
  return out;
}

double cohen_kappa(std::span<const std::string> first, std::span<const std::string> second) {
  if (first.size() != second.size()) throw InvalidArgument("annotation lists differ in length");
  if (first.empty()) throw InvalidArgument("kappa needs at least one item");
  std::map<std::string, std::size_t> a, b;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    ++a[first[i]];
    ++b[second[i]];
    agree += first[i] == second[i];
  }
  const auto n = static_cast<double>(first.size());
  const double po = static_cast<double>(agree) / n;
  double pe = 0.0;
  for (const auto& [label, count] : a) {
    const auto it = b.find(label);
    if (it != b.end()) pe += static_cast<double>(count) * static_cast<double>(it->second);
  }
  pe /= n * n;
  return kappa_from_agreement(po, pe);
}

double cohen_kappa(const ConfusionMatrix& contingency) {
  const std::size_t c = contingency.size();
  std::vector<double> rows(c, 0.0), cols(c, 0.0);
  double n = 0.0, agree = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    if (contingency[i].size() != c) throw InvalidArgument("contingency table is not square");
    for (std::size_t j = 0; j < c; ++j) {
      const auto v = static_cast<double>(contingency[i][j]);
      rows[i] += v;
      cols[j] += v;
      n += v;
      if (i == j) agree += v;
    }
  }
  if (n == 0.0) throw InvalidArgument("kappa needs at least one item");
  double pe = 0.0;
  for (std::size_t i = 0; i < c; ++i) pe += rows[i] * cols[i];
  return kappa_from_agreement(agree / n, pe / (n * n));
}

double kappa_from_agreement(double observed, double chance) {
  if (chance >= 1.0) return observed >= 1.0 ? 1.0 : 0.0;
  return (observed - chance) / (1.0 - chance);
}

double majority_baseline_f1(std::span<const std::string> truth, std::span<const std::string> classes) {
  if (truth.empty()) throw InvalidArgument("cannot score an empty evaluation");
  const auto index = class_map(classes);
  const auto ids = to_ids(truth, index);
  std::vector<std::size_t> counts(classes.size(), 0);
  for (std::size_t id : ids) ++counts[id];
  const auto top = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  const std::vector<std::size_t> predicted(ids.size(), top);
  return weighted_prf(confusion_matrix(ids, predicted, classes.size()), classes).f1;
}

}  // namespace logrep

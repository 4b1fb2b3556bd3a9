#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "logrep/corpus.hpp"
#include "logrep/metrics.hpp"

namespace logrep {

inline constexpr int kReportFormatVersion = 1;

/// One task x k x model entry of the experiment matrix.
struct CellResult {
  Task task = Task::kFormatDetection;
  std::size_t k = 0;
  std::string model_type;  // table group, e.g. "Classical ML"
  std::string model;       // table row, e.g. "Decision Tree"
  std::optional<EvalReport> eval;
  /// Set when the cell failed; the other cells still run.
  std::string error;
  double majority_f1 = 0.0;
  std::size_t train_examples = 0;
  std::size_t test_examples = 0;
  std::vector<std::string> deficient_classes;

  bool ok() const noexcept { return eval.has_value(); }
};

struct ExperimentBundle {
  std::vector<std::size_t> shots;  // column groups, ascending
  std::vector<CellResult> cells;
  nlohmann::json settings = nlohmann::json::object();

  const CellResult* find(Task task, std::size_t k, std::string_view model) const;
  /// Rows in first-seen order.
  std::vector<std::pair<std::string, std::string>> model_rows(Task task) const;
};

/// Text table: Model Type | Model | per-k P R F1 column groups, scores in
/// percent with two decimals; failed cells show "err".
std::string render_task_table(const ExperimentBundle& bundle, Task task);

/// Row-normalized confusion matrix as text, rows true and columns predicted.
std::string render_confusion(const EvalReport& report);

/// One line per cell: task,k,model_type,model,precision,recall,f1,...
std::string render_csv(const ExperimentBundle& bundle);

nlohmann::json bundle_to_json(const ExperimentBundle& bundle);
ExperimentBundle bundle_from_json(const nlohmann::json& j);

/// Aligned plain-text table; `header_rows` leading rows are separated from
/// the body by a rule. The first `label_columns` columns are left-aligned,
/// the rest right-aligned.
std::string render_table(const std::vector<std::vector<std::string>>& rows,
                         std::size_t header_rows = 1, std::size_t label_columns = 2);

std::string format_percent(double fraction);

}  // namespace logrep

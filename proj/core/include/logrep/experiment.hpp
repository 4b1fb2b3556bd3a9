#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "logrep/baselines.hpp"
#include "logrep/checkpoint.hpp"
#include "logrep/corpus.hpp"
#include "logrep/finetune.hpp"
#include "logrep/report.hpp"
#include "logrep/template_miner.hpp"
#include "logrep/tokenizer.hpp"

namespace logrep {

inline constexpr std::string_view kEncoderModelType = "Log-Pretrained Encoder";
inline constexpr std::string_view kEncoderModelName = "Encoder (MLM)";
inline constexpr std::string_view kClassicalModelType = "Classical ML";

/// Labeled lines of one task, each tagged with its template id.
struct TaskPool {
  Task task = Task::kFormatDetection;
  std::vector<LabeledExample> examples;
};

/// Propagates per-template labels to every member line of `sources`.
TaskPool make_task_pool(Task task, std::span<const Template> templates,
                        std::span<const LogSource> sources,
                        const std::map<TemplateId, std::string>& labels);

struct ExperimentOptions {
  std::vector<std::size_t> shots{10, 20, 30};
  bool run_encoder = true;
  bool run_decision_tree = true;
  bool run_sgd = true;
  FinetuneOptions finetune;
  SgdOptions sgd;
  std::uint64_t seed = 0;
  /// Called after every finished cell, in matrix order.
  std::function<void(const CellResult&)> on_cell;
};

/// For every pool, k and model: builds the k-shot split (one seed per task,
/// so training sets are nested across k), trains, predicts the held-back
/// templates and scores them. A failing cell records its error and the rest
/// still run. The encoder cells need `pretrained` and `vocab`.
ExperimentBundle run_experiment_matrix(const Checkpoint* pretrained, const Vocabulary* vocab,
                                       std::span<const TaskPool> pools,
                                       const ExperimentOptions& options);

}  // namespace logrep

#include "logrep/experiment.hpp"

#include <algorithm>
#include <exception>

#include "logrep/error.hpp"
#include "logrep/rng.hpp"

namespace logrep {
namespace {

std::vector<LogLine> all_lines(std::span<const LogSource> sources) {
  std::vector<LogLine> lines;
  for (const auto& s : sources) lines.insert(lines.end(), s.lines.begin(), s.lines.end());
  return lines;
}

void score(CellResult& cell, std::span<const LabeledExample> test,
           const std::vector<std::string>& predicted) {
  std::vector<std::string> truth;
  for (const auto& ex : test) truth.push_back(ex.label);
  const auto classes = task_classes(cell.task);
  cell.eval = evaluate(truth, predicted, classes, std::string(task_code(cell.task)), cell.model);
}

}  // namespace

TaskPool make_task_pool(Task task, std::span<const Template> templates,
                        std::span<const LogSource> sources,
                        const std::map<TemplateId, std::string>& labels) {
  const auto lines = all_lines(sources);
  return TaskPool{task, propagate_labels(templates, lines, labels, task)};
}

ExperimentBundle run_experiment_matrix(const Checkpoint* pretrained, const Vocabulary* vocab,
                                       std::span<const TaskPool> pools,
                                       const ExperimentOptions& options) {
  if (options.shots.empty()) throw InvalidArgument("experiment needs at least one k");
  ExperimentBundle bundle;
  bundle.shots = options.shots;
  std::sort(bundle.shots.begin(), bundle.shots.end());
  bundle.settings = {{"seed", options.seed},
                     {"finetune",
                      {{"epochs", options.finetune.epochs},
                       {"learning_rate", options.finetune.learning_rate},
                       {"batch_size", options.finetune.batch_size},
                       {"warmup_fraction", options.finetune.warmup_fraction}}},
                     {"sgd",
                      {{"epochs", options.sgd.epochs},
                       {"learning_rate", options.sgd.learning_rate},
                       {"l2", options.sgd.l2}}}};

  for (const auto& pool : pools) {
    const std::uint64_t task_seed = derive_seed(options.seed, static_cast<std::uint64_t>(pool.task));
    for (std::size_t k : bundle.shots) {
      std::optional<KShotSplit> split;
      std::string split_error;
      try {
        split = build_kshot(pool.examples, pool.task, k, task_seed);
        if (split->test.empty()) throw DataError("no test templates left after sampling");
      } catch (const std::exception& e) {
        split_error = e.what();
        split.reset();
      }
      double majority = 0.0;
      std::vector<std::string> test_texts;
      if (split) {
        std::vector<std::string> truth;
        for (const auto& ex : split->test) {
          test_texts.push_back(ex.text);
          truth.push_back(ex.label);
        }
        majority = majority_baseline_f1(truth, task_classes(pool.task));
      }

      const auto run_cell = [&](std::string_view type, std::string_view name, auto&& train_predict) {
        CellResult cell;
        cell.task = pool.task;
        cell.k = k;
        cell.model_type = type;
        cell.model = name;
        cell.majority_f1 = majority;
        if (!split) {
          cell.error = split_error;
        } else {
          cell.train_examples = split->train.examples.size();
          cell.test_examples = split->test.size();
          cell.deficient_classes = split->train.deficient_classes;
          try {
            score(cell, split->test, train_predict());
          } catch (const std::exception& e) {
            cell.error = e.what();
          }
        }
        if (options.on_cell) options.on_cell(cell);
        bundle.cells.push_back(std::move(cell));
      };

      if (options.run_encoder) {
        run_cell(kEncoderModelType, kEncoderModelName, [&] {
          if (!pretrained || !vocab) throw InvalidArgument("encoder cells need a pretrained checkpoint");
          FinetuneOptions ft = options.finetune;
          ft.seed = derive_seed(task_seed, 100);
          const auto result = finetune(*pretrained, *vocab, split->train, ft);
          return predict(result.model, test_texts);
        });
      }
      if (options.run_decision_tree) {
        run_cell(kClassicalModelType, baseline_title(BaselineKind::kDecisionTree), [&] {
          return train_baseline(BaselineKind::kDecisionTree, split->train.examples).predict(test_texts);
        });
      }
      if (options.run_sgd) {
        run_cell(kClassicalModelType, baseline_title(BaselineKind::kSgdLinear), [&] {
          SgdOptions sgd = options.sgd;
          sgd.seed = derive_seed(task_seed, 200);
          return train_baseline(BaselineKind::kSgdLinear, split->train.examples, sgd).predict(test_texts);
        });
      }
    }
  }
  return bundle;
}

}  // namespace logrep

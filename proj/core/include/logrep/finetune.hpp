#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "logrep/checkpoint.hpp"
#include "logrep/corpus.hpp"
#include "logrep/encoder.hpp"
#include "logrep/optimizer.hpp"
#include "logrep/tokenizer.hpp"

namespace logrep {

inline constexpr int kKShotManifestVersion = 1;

struct KShotDataset {
  Task task = Task::kFormatDetection;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<LabeledExample> examples;
  /// Classes that had fewer than k distinct templates available.
  std::vector<std::string> deficient_classes;

  bool deficient() const noexcept { return !deficient_classes.empty(); }
  nlohmann::json manifest() const;
};

struct KShotSplit {
  KShotDataset train;
  std::vector<LabeledExample> test;
};

/// Per class: the distinct template ids are shuffled with a seed stream of
/// their own and the first k are taken, so the k=10 selection is a prefix
/// of the k=20 one. One seeded instance represents each selected template.
/// Every instance of an unselected template goes to the test set, in pool
/// order. Throws DataError when a class of the task is absent from the pool
/// and InvalidArgument when an example lacks a template id.
KShotSplit build_kshot(std::span<const LabeledExample> pool, Task task, std::size_t k,
                       std::uint64_t seed);

/// Writes `<stem>.jsonl` (examples) and `<stem>.manifest.json`.
void save_kshot(const std::filesystem::path& stem, const KShotDataset& dataset);
KShotDataset load_kshot(const std::filesystem::path& stem);

struct FinetuneOptions {
  std::size_t epochs = 20;
  double learning_rate = 4e-5;
  /// Effective batch is min(batch_size, dataset size).
  std::size_t batch_size = 32;
  double warmup_fraction = 0.06;
  AdamWConfig adamw;
  std::uint64_t seed = 0;
};

/// A classifier built from a pretrained encoder. Persisted with the
/// checkpoint format; task, class table and vocabulary live in its metadata.
struct FineTunedModel {
  Task task = Task::kFormatDetection;
  std::vector<std::string> class_names;
  EncoderConfig config;
  ModelParameters params;
  Vocabulary vocab{{}};

  void save(const std::filesystem::path& path) const;
  static FineTunedModel load(const std::filesystem::path& path);
};

struct FinetuneResult {
  FineTunedModel model;
  /// Mean training loss of each epoch (dropout on).
  std::vector<double> epoch_losses;
  /// Whole-training-set loss with dropout off, before and after.
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

/// Full-parameter training of `pretrained` with a freshly initialized
/// classification head sized to the task's class table.
FinetuneResult finetune(const Checkpoint& pretrained, const Vocabulary& vocab,
                        const KShotDataset& dataset, const FinetuneOptions& options);

/// Class logits for raw lines (normalized and encoded internally).
Matrix predict_logits(const FineTunedModel& model, std::span<const std::string> texts,
                      std::size_t batch_size = 64);
std::vector<std::size_t> predict_ids(const FineTunedModel& model,
                                     std::span<const std::string> texts);
std::vector<std::string> predict(const FineTunedModel& model, std::span<const std::string> texts);

}  // namespace logrep

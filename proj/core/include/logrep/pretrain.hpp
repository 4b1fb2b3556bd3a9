#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "logrep/encoder.hpp"
#include "logrep/optimizer.hpp"
#include "logrep/tokenizer.hpp"

namespace logrep {

inline constexpr int kPretrainReportVersion = 1;

struct PretrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double learning_rate = 1e-4;
  double warmup_fraction = 0.05;
  /// Validation is evaluated every `eval_interval` epochs and at every
  /// epoch end.
  double eval_interval = 0.2;
  MaskingOptions masking;
  AdamWConfig adamw;
  std::uint64_t seed = 0;
  /// When set, one checkpoint per evaluation is written here.
  std::optional<std::filesystem::path> checkpoint_dir;
};

struct EvalRecord {
  std::size_t index = 0;
  std::size_t step = 0;
  double epoch = 0.0;
  /// Mean training loss over the steps since the previous evaluation; NaN
  /// for the evaluation before training.
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_perplexity = 0.0;
  std::string checkpoint;  // file name, empty when not persisted
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_perplexity = 0.0;
  double seconds = 0.0;
};

struct PretrainReport {
  std::vector<EvalRecord> evaluations;
  std::vector<EpochRecord> epochs;
  std::size_t selected = 0;
  std::size_t vocab_size = 0;
  std::size_t train_sequences = 0;
  std::size_t val_sequences = 0;
  std::size_t val_masked_tokens = 0;

  /// Deterministic content only. Timings go to a separate document.
  nlohmann::json to_json() const;
  nlohmann::json timing_json() const;
};

struct PretrainResult {
  ModelParameters best;   // parameters at the selected evaluation
  ModelParameters last;   // parameters after the final step
  PretrainReport report;
};

/// Validation inputs masked once with a fixed seed so every evaluation
/// scores the same positions.
struct MaskedCorpus {
  EncoderInput input;
  TokenMatrix labels;
  std::size_t masked_tokens = 0;
};

MaskedCorpus mask_corpus(const Vocabulary& vocab, const EncoderInput& encoded,
                         const MaskingOptions& masking, std::uint64_t seed);

/// The validation set pretrain() scores: `val_lines` encoded and masked
/// with the seed derived from `options.seed`.
MaskedCorpus validation_corpus(const Vocabulary& vocab, const EncoderConfig& config,
                               std::span<const std::string> val_lines, const PretrainOptions& options);

/// Summed NLL over every labeled position, in batches, dropout off.
NllSum corpus_nll(const ModelParameters& params, const EncoderConfig& config,
                  const MaskedCorpus& corpus, std::size_t batch_size = 256);

/// exp(mean per-masked-token NLL). DataError if nothing is masked.
double perplexity(const ModelParameters& params, const EncoderConfig& config,
                  const MaskedCorpus& corpus, std::size_t batch_size = 256);

/// N-th root of the inverse joint probability of N independently predicted
/// tokens.
double perplexity_from_probabilities(std::span<const double> probabilities);

/// Index of the minimum validation loss, earliest on ties.
std::size_t select_checkpoint(std::span<const double> val_losses);
std::size_t select_checkpoint(const PretrainReport& report);

/// Masked-language-model training of `init` on the normalized, encoded
/// training lines; validation loss is tracked on `val_lines`. Throws
/// NumericError on a non-finite training loss.
PretrainResult pretrain(const Vocabulary& vocab, const EncoderConfig& config,
                        ModelParameters init, std::span<const std::string> train_lines,
                        std::span<const std::string> val_lines, const PretrainOptions& options);

}  // namespace logrep

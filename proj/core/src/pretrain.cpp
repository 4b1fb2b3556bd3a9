#include "logrep/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "logrep/checkpoint.hpp"
#include "logrep/error.hpp"
#include "logrep/rng.hpp"

namespace logrep {
namespace {

using nlohmann::json;

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kMaskStream = 2;
constexpr std::uint64_t kDropoutStream = 3;
constexpr std::uint64_t kValidationStream = 4;

EncoderInput slice(const EncoderInput& all, std::span<const std::size_t> rows) {
  EncoderInput out;
  out.input_ids.reserve(rows.size());
  out.attention_mask.reserve(rows.size());
  for (std::size_t r : rows) {
    out.input_ids.push_back(all.input_ids[r]);
    out.attention_mask.push_back(all.attention_mask[r]);
  }
  return out;
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

// Local step indices (1-based, within an epoch) after which validation runs.
std::vector<std::size_t> eval_points(std::size_t steps_per_epoch, double interval) {
  std::set<std::size_t> points{steps_per_epoch};
  if (interval > 0.0) {
    for (std::size_t i = 1;; ++i) {
      const double f = static_cast<double>(i) * interval;
      if (f >= 1.0 - 1e-9) break;
      const auto local = static_cast<std::size_t>(std::llround(f * static_cast<double>(steps_per_epoch)));
      points.insert(std::clamp<std::size_t>(local, 1, steps_per_epoch));
    }
  }
  return {points.begin(), points.end()};
}

}  // namespace

json PretrainReport::to_json() const {
  json evals = json::array();
  for (const auto& e : evaluations) {
    evals.push_back({{"index", e.index},
                     {"step", e.step},
                     {"epoch", e.epoch},
                     {"train_loss", number_or_null(e.train_loss)},
                     {"val_loss", e.val_loss},
                     {"val_perplexity", e.val_perplexity},
                     {"checkpoint", e.checkpoint}});
  }
  json per_epoch = json::array();
  for (const auto& e : epochs) {
    per_epoch.push_back({{"epoch", e.epoch},
                         {"train_loss", number_or_null(e.train_loss)},
                         {"val_loss", e.val_loss},
                         {"val_perplexity", e.val_perplexity}});
  }
  return {{"format", "logrep.pretrain_report"},
          {"format_version", kPretrainReportVersion},
          {"vocab_size", vocab_size},
          {"train_sequences", train_sequences},
          {"val_sequences", val_sequences},
          {"val_masked_tokens", val_masked_tokens},
          {"evaluations", std::move(evals)},
          {"epochs", std::move(per_epoch)},
          {"selected", selected},
          {"selected_checkpoint",
           evaluations.empty() ? json(nullptr) : json(evaluations[selected].checkpoint)}};
}

json PretrainReport::timing_json() const {
  json per_epoch = json::array();
  for (const auto& e : epochs) per_epoch.push_back({{"epoch", e.epoch}, {"seconds", e.seconds}});
  return {{"epochs", std::move(per_epoch)}};
}

MaskedCorpus mask_corpus(const Vocabulary& vocab, const EncoderInput& encoded,
                         const MaskingOptions& masking, std::uint64_t seed) {
  MaskedBatch masked = apply_mlm_mask(vocab, encoded.input_ids, masking, seed);
  MaskedCorpus out;
  out.masked_tokens = masked.selected_count();
  out.input.input_ids = std::move(masked.input_ids);
  out.input.attention_mask = encoded.attention_mask;
  out.labels = std::move(masked.mlm_labels);
  return out;
}

NllSum corpus_nll(const ModelParameters& params, const EncoderConfig& config,
                  const MaskedCorpus& corpus, std::size_t batch_size) {
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  NllSum total;
  const std::size_t n = corpus.input.batch_size();
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const EncoderInput batch = slice(corpus.input, rows);
    const TokenMatrix labels(corpus.labels.begin() + static_cast<std::ptrdiff_t>(start),
                             corpus.labels.begin() + static_cast<std::ptrdiff_t>(end));
    const NllSum part = mlm_nll(forward(params, config, batch), params, labels);
    total.total += part.total;
    total.count += part.count;
  }
  return total;
}

double perplexity(const ModelParameters& params, const EncoderConfig& config,
                  const MaskedCorpus& corpus, std::size_t batch_size) {
  const NllSum nll = corpus_nll(params, config, corpus, batch_size);
  if (nll.count == 0) throw DataError("perplexity needs at least one masked token");
  return std::exp(nll.mean());
}

double perplexity_from_probabilities(std::span<const double> probabilities) {
  if (probabilities.empty()) throw InvalidArgument("perplexity of an empty sequence");
  double joint = 1.0;
  for (double p : probabilities) {
    if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("token probability outside (0, 1]");
    joint *= p;
  }
  return std::pow(1.0 / joint, 1.0 / static_cast<double>(probabilities.size()));
}

std::size_t select_checkpoint(std::span<const double> val_losses) {
  if (val_losses.empty()) throw InvalidArgument("no evaluations to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_losses.size(); ++i) {
    if (val_losses[i] < val_losses[best]) best = i;
  }
  return best;
}

std::size_t select_checkpoint(const PretrainReport& report) {
  std::vector<double> losses;
  for (const auto& e : report.evaluations) losses.push_back(e.val_loss);
  return select_checkpoint(losses);
}

MaskedCorpus validation_corpus(const Vocabulary& vocab, const EncoderConfig& config,
                               std::span<const std::string> val_lines, const PretrainOptions& options) {
  return mask_corpus(vocab, encode_texts(vocab, val_lines, config.max_seq), options.masking,
                     derive_seed(options.seed, kValidationStream));
}

PretrainResult pretrain(const Vocabulary& vocab, const EncoderConfig& config,
                        ModelParameters init, std::span<const std::string> train_lines,
                        std::span<const std::string> val_lines, const PretrainOptions& options) {
  config.validate();
  if (config.vocab_size != vocab.size()) {
    throw InvalidArgument("model vocab_size " + std::to_string(config.vocab_size) +
                          " differs from vocabulary size " + std::to_string(vocab.size()));
  }
  if (train_lines.empty()) throw DataError("pretraining needs a non-empty training set");
  if (val_lines.empty()) throw DataError("pretraining needs a non-empty validation set");
  if (options.epochs == 0) throw InvalidArgument("epochs must be positive");
  if (options.batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (!(options.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");

  const EncoderInput train = encode_texts(vocab, train_lines, config.max_seq);
  const MaskedCorpus val = validation_corpus(vocab, config, val_lines, options);
  if (val.masked_tokens == 0) throw DataError("validation masking selected no tokens");

  const std::size_t n = train.batch_size();
  const std::size_t steps_per_epoch = (n + options.batch_size - 1) / options.batch_size;
  const std::size_t total_steps = steps_per_epoch * options.epochs;
  const auto schedule = LinearSchedule::with_warmup_fraction(total_steps, options.warmup_fraction);
  const auto points = eval_points(steps_per_epoch, options.eval_interval);

  PretrainResult result;
  PretrainReport& report = result.report;
  report.vocab_size = vocab.size();
  report.train_sequences = n;
  report.val_sequences = val.input.batch_size();
  report.val_masked_tokens = val.masked_tokens;

  ModelParameters params = std::move(init);
  AdamW optimizer(params, options.adamw);
  double best_loss = std::numeric_limits<double>::infinity();

  double window_loss = 0.0;
  std::size_t window_steps = 0;
  const auto evaluate = [&](std::size_t step) {
    const NllSum nll = corpus_nll(params, config, val);
    EvalRecord rec;
    rec.index = report.evaluations.size();
    rec.step = step;
    rec.epoch = static_cast<double>(step) / static_cast<double>(steps_per_epoch);
    rec.train_loss = window_steps ? window_loss / static_cast<double>(window_steps)
                                  : std::numeric_limits<double>::quiet_NaN();
    rec.val_loss = nll.mean();
    rec.val_perplexity = std::exp(rec.val_loss);
    if (!std::isfinite(rec.val_loss)) {
      throw NumericError("validation loss became non-finite at step " + std::to_string(step));
    }
    if (options.checkpoint_dir) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt-%04zu.bin", rec.index);
      rec.checkpoint = name;
      Checkpoint ck{config, params,
                    {{"kind", "pretrain"},
                     {"eval_index", rec.index},
                     {"step", step},
                     {"epoch", rec.epoch},
                     {"val_loss", rec.val_loss}}};
      save_checkpoint(*options.checkpoint_dir / name, ck);
    }
    if (rec.val_loss < best_loss) {
      best_loss = rec.val_loss;
      result.best = params;
    }
    report.evaluations.push_back(std::move(rec));
    window_loss = 0.0;
    window_steps = 0;
  };

  evaluate(0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    Rng shuffle_rng(derive_seed(derive_seed(options.seed, kShuffleStream), epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    std::size_t next_point = 0;
    for (std::size_t local = 1; local <= steps_per_epoch; ++local, ++step) {
      const std::size_t begin = (local - 1) * options.batch_size;
      const std::size_t end = std::min(n, begin + options.batch_size);
      const EncoderInput batch = slice(train, std::span(order).subspan(begin, end - begin));
      MaskedBatch masked = apply_mlm_mask(vocab, batch.input_ids, options.masking,
                                          derive_seed(derive_seed(options.seed, kMaskStream), step));
      if (masked.selected_count() > 0) {
        EncoderInput input{std::move(masked.input_ids), batch.attention_mask};
        ForwardOptions fwd{true, derive_seed(derive_seed(options.seed, kDropoutStream), step)};
        LossGradients lg = backward(params, config, input, MlmTarget{std::move(masked.mlm_labels)}, fwd);
        if (!std::isfinite(lg.loss)) {
          throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(step) + " (learning rate " +
                             std::to_string(options.learning_rate * schedule.factor(step)) + ")");
        }
        optimizer.step(params, lg.gradients, options.learning_rate * schedule.factor(step));
        epoch_loss += lg.loss;
        ++epoch_steps;
        window_loss += lg.loss;
        ++window_steps;
      }
      if (next_point < points.size() && local == points[next_point]) {
        ++next_point;
        evaluate(step + 1);
      }
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
    const EvalRecord& last = report.evaluations.back();
    report.epochs.push_back({epoch + 1,
                             epoch_steps ? epoch_loss / static_cast<double>(epoch_steps)
                                         : std::numeric_limits<double>::quiet_NaN(),
                             last.val_loss, last.val_perplexity, elapsed.count()});
  }
  report.selected = select_checkpoint(report);
  result.last = std::move(params);
  return result;
}

}  // namespace logrep

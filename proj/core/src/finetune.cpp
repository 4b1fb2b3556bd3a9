#include "logrep/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "logrep/error.hpp"
#include "logrep/io.hpp"
#include "logrep/labeled_io.hpp"
#include "logrep/rng.hpp"

namespace logrep {
namespace {

using nlohmann::json;

constexpr std::string_view kManifestFormat = "logrep.kshot";
constexpr std::uint64_t kTemplateStream = 11;
constexpr std::uint64_t kInstanceStream = 12;
constexpr std::uint64_t kHeadStream = 21;
constexpr std::uint64_t kShuffleStream = 22;
constexpr std::uint64_t kDropoutStream = 23;

std::filesystem::path with_suffix(const std::filesystem::path& stem, std::string_view suffix) {
  std::filesystem::path p = stem;
  p += suffix;
  return p;
}

EncoderInput slice(const EncoderInput& all, std::span<const std::size_t> rows) {
  EncoderInput out;
  for (std::size_t r : rows) {
    out.input_ids.push_back(all.input_ids[r]);
    out.attention_mask.push_back(all.attention_mask[r]);
  }
  return out;
}

double dataset_loss(const ModelParameters& params, const EncoderConfig& config,
                    const EncoderInput& input, const std::vector<std::size_t>& labels,
                    double* accuracy) {
  const Matrix logits = classify(forward(params, config, input), params);
  if (accuracy) {
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      Eigen::Index arg = 0;
      logits.row(r).maxCoeff(&arg);
      correct += static_cast<std::size_t>(arg) == labels[static_cast<std::size_t>(r)];
    }
    *accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  }
  return classification_loss(logits, labels);
}

}  // namespace

json KShotDataset::manifest() const {
  const auto classes = task_classes(task);
  return {{"format", kManifestFormat},
          {"format_version", kKShotManifestVersion},
          {"task", task_code(task)},
          {"k", k},
          {"seed", seed},
          {"count", examples.size()},
          {"classes", std::vector<std::string>(classes.begin(), classes.end())},
          {"deficient_classes", deficient_classes}};
}

KShotSplit build_kshot(std::span<const LabeledExample> pool, Task task, std::size_t k,
                       std::uint64_t seed) {
  if (k == 0) throw InvalidArgument("k must be positive");
  const auto classes = task_classes(task);
  // class -> template id -> indices of its instances in pool order
  std::vector<std::map<std::uint64_t, std::vector<std::size_t>>> by_class(classes.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& ex = pool[i];
    if (ex.task != task) {
      throw InvalidArgument("pool example for task " + std::string(task_code(ex.task)) +
                            " in a " + std::string(task_code(task)) + " pool");
    }
    if (!ex.template_id) throw InvalidArgument("pool example without template id: " + ex.text);
    const auto cls = class_index(task, ex.label);
    if (!cls) throw InvalidArgument("label '" + ex.label + "' is not a " + std::string(task_code(task)) + " class");
    by_class[*cls][*ex.template_id].push_back(i);
  }

  KShotSplit split;
  split.train.task = task;
  split.train.k = k;
  split.train.seed = seed;
  std::set<std::uint64_t> chosen;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& templates = by_class[c];
    if (templates.empty()) {
      throw DataError("class '" + classes[c] + "' has no examples in the " +
                      std::string(task_code(task)) + " pool");
    }
    std::vector<std::uint64_t> ids;
    for (const auto& [id, members] : templates) ids.push_back(id);
    Rng rng(derive_seed(derive_seed(seed, kTemplateStream), c));
    rng.shuffle(std::span<std::uint64_t>(ids));
    if (ids.size() < k) split.train.deficient_classes.push_back(classes[c]);
    const std::size_t take = std::min(k, ids.size());
    for (std::size_t j = 0; j < take; ++j) {
      const auto& members = templates.at(ids[j]);
      Rng pick(derive_seed(derive_seed(seed, kInstanceStream), ids[j]));
      split.train.examples.push_back(pool[members[pick.below(members.size())]]);
      chosen.insert(ids[j]);
    }
  }
  for (const auto& ex : pool) {
    if (!chosen.contains(*ex.template_id)) split.test.push_back(ex);
  }
  return split;
}

void save_kshot(const std::filesystem::path& stem, const KShotDataset& dataset) {
  save_labeled(with_suffix(stem, ".jsonl"), dataset.examples,
               {{"task", task_code(dataset.task)}, {"k", dataset.k}, {"seed", dataset.seed}});
  io::write_file(with_suffix(stem, ".manifest.json"), dataset.manifest().dump(2) + "\n");
}

KShotDataset load_kshot(const std::filesystem::path& stem) {
  json manifest;
  try {
    manifest = json::parse(io::read_file(with_suffix(stem, ".manifest.json")));
  } catch (const json::exception& e) {
    throw FormatError(std::string("k-shot manifest is not JSON: ") + e.what());
  }
  if (manifest.value("format", "") != kManifestFormat ||
      manifest.value("format_version", -1) != kKShotManifestVersion) {
    throw FormatError("k-shot manifest has wrong format or format_version");
  }
  KShotDataset ds;
  try {
    ds.task = parse_task(manifest.at("task").get<std::string>());
    ds.k = manifest.at("k").get<std::size_t>();
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    ds.deficient_classes = manifest.value("deficient_classes", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed k-shot manifest: ") + e.what());
  }
  ds.examples = load_labeled(with_suffix(stem, ".jsonl")).examples;
  if (ds.examples.size() != manifest.value("count", ds.examples.size())) {
    throw FormatError("k-shot example count differs from manifest");
  }
  return ds;
}

void FineTunedModel::save(const std::filesystem::path& path) const {
  Checkpoint ck{config, params,
                {{"kind", "classifier"},
                 {"task", task_code(task)},
                 {"classes", class_names},
                 {"vocabulary", vocab.serialize()}}};
  save_checkpoint(path, ck);
}

FineTunedModel FineTunedModel::load(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.metadata.value("kind", "") != "classifier") {
    throw FormatError(path.string() + " is not a fine-tuned classifier");
  }
  FineTunedModel m;
  try {
    m.task = parse_task(ck.metadata.at("task").get<std::string>());
    m.class_names = ck.metadata.at("classes").get<std::vector<std::string>>();
    m.vocab = Vocabulary::parse(ck.metadata.at("vocabulary").get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("classifier metadata malformed: ") + e.what());
  }
  if (m.class_names.size() != ck.config.num_classes || m.vocab.size() != ck.config.vocab_size) {
    throw FormatError("classifier metadata disagrees with its tensor shapes");
  }
  m.config = ck.config;
  m.params = std::move(ck.params);
  return m;
}

FinetuneResult finetune(const Checkpoint& pretrained, const Vocabulary& vocab,
                        const KShotDataset& dataset, const FinetuneOptions& options) {
  if (pretrained.config.vocab_size != vocab.size()) {
    throw InvalidArgument("checkpoint vocab_size " + std::to_string(pretrained.config.vocab_size) +
                          " differs from vocabulary size " + std::to_string(vocab.size()));
  }
  if (dataset.examples.empty()) throw DataError("fine-tuning dataset is empty");
  if (options.epochs == 0) throw InvalidArgument("epochs must be positive");
  if (options.batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (!(options.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");

  const auto classes = task_classes(dataset.task);
  std::vector<std::string> texts;
  std::vector<std::size_t> labels;
  for (const auto& ex : dataset.examples) {
    const auto cls = class_index(dataset.task, ex.label);
    if (!cls || *cls >= classes.size()) {
      throw InvalidArgument("label '" + ex.label + "' outside the " + std::to_string(classes.size()) +
                            "-class head");
    }
    texts.push_back(ex.text);
    labels.push_back(*cls);
  }

  FinetuneResult result;
  FineTunedModel& model = result.model;
  model.task = dataset.task;
  model.class_names.assign(classes.begin(), classes.end());
  model.config = pretrained.config;
  model.params = pretrained.params;
  model.vocab = vocab;
  attach_classifier(model.params, model.config, classes.size(),
                    derive_seed(options.seed, kHeadStream));

  const EncoderInput all = encode_texts(vocab, texts, model.config.max_seq);
  const std::size_t n = texts.size();
  const std::size_t batch = std::min(options.batch_size, n);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const auto schedule = LinearSchedule::with_warmup_fraction(steps_per_epoch * options.epochs,
                                                             options.warmup_fraction);
  result.initial_loss = dataset_loss(model.params, model.config, all, labels, nullptr);

  AdamW optimizer(model.params, options.adamw);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    Rng rng(derive_seed(derive_seed(options.seed, kShuffleStream), epoch));
    rng.shuffle(std::span<std::size_t>(order));
    double sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += batch, ++step) {
      const auto rows = std::span(order).subspan(begin, std::min(batch, n - begin));
      const EncoderInput input = slice(all, rows);
      ClassTarget target;
      for (std::size_t r : rows) target.labels.push_back(labels[r]);
      ForwardOptions fwd{true, derive_seed(derive_seed(options.seed, kDropoutStream), step)};
      LossGradients lg = backward(model.params, model.config, input, target, fwd);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("fine-tuning loss became non-finite at epoch " + std::to_string(epoch));
      }
      optimizer.step(model.params, lg.gradients, options.learning_rate * schedule.factor(step));
      sum += lg.loss;
    }
    result.epoch_losses.push_back(sum / static_cast<double>(steps_per_epoch));
  }
  result.final_loss =
      dataset_loss(model.params, model.config, all, labels, &result.train_accuracy);
  return result;
}

Matrix predict_logits(const FineTunedModel& model, std::span<const std::string> texts,
                      std::size_t batch_size) {
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  Matrix out(static_cast<Eigen::Index>(texts.size()),
             static_cast<Eigen::Index>(model.config.num_classes));
  for (std::size_t begin = 0; begin < texts.size(); begin += batch_size) {
    const auto chunk = texts.subspan(begin, std::min(batch_size, texts.size() - begin));
    const EncoderInput input = encode_texts(model.vocab, chunk, model.config.max_seq);
    out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(chunk.size())) =
        classify(forward(model.params, model.config, input), model.params);
  }
  return out;
}

std::vector<std::size_t> predict_ids(const FineTunedModel& model,
                                     std::span<const std::string> texts) {
  const Matrix logits = predict_logits(model, texts);
  std::vector<std::size_t> ids;
  ids.reserve(texts.size());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index arg = 0;
    logits.row(r).maxCoeff(&arg);
    ids.push_back(static_cast<std::size_t>(arg));
  }
  return ids;
}

std::vector<std::string> predict(const FineTunedModel& model, std::span<const std::string> texts) {
  std::vector<std::string> out;
  for (std::size_t id : predict_ids(model, texts)) out.push_back(model.class_names[id]);
  return out;
}

}  // namespace logrep

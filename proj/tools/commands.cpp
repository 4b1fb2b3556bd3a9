#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <map>
#include <memory>
#include <sstream>

#include "cli.hpp"
#include "logrep/baselines.hpp"
#include "logrep/checkpoint.hpp"
#include "logrep/corpus.hpp"
#include "logrep/error.hpp"
#include "logrep/experiment.hpp"
#include "logrep/finetune.hpp"
#include "logrep/io.hpp"
#include "logrep/labeled_io.hpp"
#include "logrep/metrics.hpp"
#include "logrep/normalize.hpp"
#include "logrep/pretrain.hpp"
#include "logrep/report.hpp"
#include "logrep/rng.hpp"
#include "logrep/synthetic.hpp"
#include "logrep/template_miner.hpp"
#include "logrep/tokenizer.hpp"

namespace logrep::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::string> normalized(std::span<const LogLine> lines) {
  std::vector<std::string> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(normalize_line(l.raw_text));
  return out;
}

std::vector<LogLine> all_lines(std::span<const LogSource> sources) {
  std::vector<LogLine> lines;
  for (const auto& s : sources) lines.insert(lines.end(), s.lines.begin(), s.lines.end());
  return lines;
}

json stats_json(const CorpusStats& stats) {
  json sources = json::array();
  for (const auto& s : stats.sources) {
    json j = {{"name", s.name}, {"train", s.train}, {"validation", s.validation},
              {"total", s.total}, {"held_out", s.held_out}};
    if (s.templates) j["templates"] = *s.templates;
    sources.push_back(std::move(j));
  }
  return {{"sources", std::move(sources)},
          {"train", stats.train},
          {"validation", stats.validation},
          {"total", stats.total}};
}

fs::path with_suffix(const fs::path& p, std::string_view suffix) {
  fs::path out = p;
  out += suffix;
  return out;
}

// Accepts a k-shot stem or a labeled .jsonl file.
std::vector<LabeledExample> load_training_set(const std::string& path) {
  if (fs::exists(with_suffix(path, ".manifest.json"))) return load_kshot(path).examples;
  return load_labeled(path).examples;
}

struct ModelShape {
  std::string preset = "tiny";
  std::size_t layers = 0, heads = 0, hidden = 0, ff = 0, max_seq = 0;
  double dropout = -1.0;

  void add(CLI::App* sub) {
    sub->add_option("--preset", preset, "Model size preset")
        ->check(CLI::IsMember({"tiny", "base"}))
        ->capture_default_str();
    sub->add_option("--layers", layers, "Override number of layers");
    sub->add_option("--heads", heads, "Override number of attention heads");
    sub->add_option("--hidden", hidden, "Override hidden size");
    sub->add_option("--ff", ff, "Override feed-forward size");
    sub->add_option("--max-seq", max_seq, "Override maximum sequence length");
    sub->add_option("--dropout", dropout, "Override dropout probability");
  }

  EncoderConfig config(std::size_t vocab_size) const {
    EncoderConfig c = preset == "base" ? EncoderConfig::base(vocab_size) : EncoderConfig::tiny(vocab_size);
    if (layers) c.num_layers = layers;
    if (heads) c.num_heads = heads;
    if (hidden) c.hidden_size = hidden;
    if (ff) c.ff_size = ff;
    if (max_seq) c.max_seq = max_seq;
    if (dropout >= 0.0) c.dropout_prob = dropout;
    c.validate();
    return c;
  }
};

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

fs::path output_path(const std::string& path) {
  const fs::path p(path);
  const char* root = std::getenv("LOGREP_OUT_DIR");
  if (root && *root && p.is_relative()) return fs::path(root) / p;
  return p;
}

void write_meta(const fs::path& artifact, const json& extra) {
  json meta = extra;
  meta["written_at"] = utc_now();
  fs::path p = artifact;
  if (fs::is_directory(p)) {
    p /= "run.meta.json";
  } else {
    p.replace_extension(".meta.json");
  }
  io::write_file(p, meta.dump(2) + "\n");
}

void add_ingest(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("ingest", "Read raw log files into a corpus directory");
  struct Opts {
    std::vector<std::string> inputs;
    std::vector<std::string> held_out;
    std::string out;
    double ratio = 0.8;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--input", o->inputs, "Log file, or NAME=FILE; the name defaults to the file stem")
      ->required();
  sub->add_option("--held-out", o->held_out, "Source names excluded from pretraining");
  sub->add_option("--ratio", o->ratio, "Train fraction used for the reported split sizes")
      ->capture_default_str();
  sub->add_option("--out", o->out, "Corpus directory")->required();
  sub->callback([o, &ctx] {
    ctx.run = [o] {
      std::vector<LogSource> sources;
      for (const auto& spec : o->inputs) {
        std::string name, file = spec;
        if (const auto eq = spec.find('='); eq != std::string::npos) {
          name = spec.substr(0, eq);
          file = spec.substr(eq + 1);
        } else {
          name = fs::path(file).stem().string();
        }
        if (!fs::exists(file)) throw IoError("input file not found: " + file);
        std::optional<std::string> label;
        if (class_index(Task::kFormatDetection, name)) label = name;
        LogSource src = ingest_source(file, name, label);
        src.held_out = std::find(o->held_out.begin(), o->held_out.end(), name) != o->held_out.end();
        sources.push_back(std::move(src));
      }
      const fs::path out = output_path(o->out);
      save_corpus(out, sources);
      json summary = stats_json(corpus_stats(sources, o->ratio));
      summary["corpus"] = out.string();
      return summary;
    };
  });
}

void add_gen_synth(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("gen-synth", "Generate a synthetic labeled log corpus");
  struct Opts {
    std::string spec;
    std::size_t patterns = 40;
    std::size_t lines_per_pattern = 16;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--spec", o->spec, "Synthetic spec JSON; the built-in benchmark when omitted");
  sub->add_option("--patterns", o->patterns, "Patterns per format for the built-in benchmark")
      ->capture_default_str();
  sub->add_option("--lines-per-pattern", o->lines_per_pattern,
                  "Lines per pattern for the built-in benchmark")
      ->capture_default_str();
  sub->add_option("--out", o->out, "Corpus directory")->required();
  sub->callback([o, &ctx] {
    ctx.run = [o, &ctx] {
      SyntheticSpec spec;
      if (!o->spec.empty()) {
        try {
          spec = SyntheticSpec::from_json(json::parse(io::read_file(o->spec)));
        } catch (const json::exception& e) {
          throw FormatError("synthetic spec is not JSON: " + std::string(e.what()));
        }
      } else {
        spec = default_benchmark_spec(o->patterns, o->lines_per_pattern);
      }
      const SyntheticCorpus corpus = gen_synthetic_corpus(spec, ctx.seed);
      const fs::path out = output_path(o->out);
      save_synthetic(out, corpus);
      std::size_t lines = 0, patterns = 0;
      for (const auto& f : spec.formats) {
        lines += f.lines;
        patterns += f.patterns.size();
      }
      return json{{"corpus", out.string()},
                  {"ground_truth", (out / "ground_truth.jsonl").string()},
                  {"formats", spec.formats.size()},
                  {"patterns", patterns},
                  {"lines", lines}};
    };
  });
}

void add_mine_templates(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("mine-templates", "Mine Drain templates for every source");
  struct Opts {
    std::string corpus, out, ground_truth;
    ParseTreeConfig tree;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--corpus", o->corpus, "Corpus directory")->required();
  sub->add_option("--out", o->out, "Template store (JSON lines)")->required();
  sub->add_option("--depth", o->tree.depth, "Parse tree depth")->capture_default_str();
  sub->add_option("--similarity", o->tree.similarity_threshold, "Similarity threshold")
      ->capture_default_str();
  sub->add_option("--max-children", o->tree.max_children, "Maximum children per internal node")
      ->capture_default_str();
  sub->add_option("--ground-truth", o->ground_truth,
                  "Synthetic ground truth; reports grouping accuracy per source");
  sub->callback([o, &ctx] {
    ctx.run = [o] {
      const auto sources = load_corpus(o->corpus);
      const auto templates = mine_sources(sources, o->tree);
      const auto lines = all_lines(sources);
      if (const auto problem = verify_templates(templates, lines)) {
        throw DataError("template invariant violated: " + *problem);
      }
      const fs::path out = output_path(o->out);
      save_templates(out, templates, o->tree);
      json per_source = json::object();
      for (const auto& s : sources) {
        per_source[s.name] = std::count_if(templates.begin(), templates.end(),
                                           [&](const Template& t) { return t.source == s.name; });
      }
      json summary = {{"templates", templates.size()}, {"per_source", per_source}, {"store", out.string()}};
      if (!o->ground_truth.empty()) {
        const auto truth = load_ground_truth(o->ground_truth);
        std::map<std::pair<std::string, std::size_t>, std::size_t> pattern;
        for (const auto& r : truth) pattern[{r.source, r.index}] = r.pattern;
        std::vector<std::string> keys;
        for (const auto& l : lines) {
          const auto it = pattern.find({l.source_name, l.line_index});
          if (it == pattern.end()) throw DataError("ground truth lacks line " + l.source_name);
          keys.push_back(l.source_name + "#" + std::to_string(it->second));
        }
        summary["grouping_accuracy"] = grouping_accuracy(templates, lines, keys);
      }
      return summary;
    };
  });
}

void add_label_propagate(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("label-propagate",
                                 "Spread template labels to every member line of a task pool");
  struct Opts {
    std::string corpus, templates, task, labels, ground_truth, out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--corpus", o->corpus, "Corpus directory")->required();
  sub->add_option("--templates", o->templates, "Template store")->required();
  sub->add_option("--task", o->task, "lfd, gsc or fcp")->required();
  auto* labels = sub->add_option("--labels", o->labels,
                                 "JSON object: template id -> label, or -> list of annotator votes");
  auto* truth = sub->add_option("--ground-truth", o->ground_truth,
                                "Synthetic ground truth; labels by majority vote of member lines");
  labels->excludes(truth);
  sub->add_option("--out", o->out, "Labeled pool (JSON lines)")->required();
  sub->callback([o, &ctx] {
    ctx.run = [o] {
      const Task task = parse_task(o->task);
      const auto sources = load_corpus(o->corpus);
      const auto store = load_templates(o->templates);
      std::map<TemplateId, std::string> chosen;
      std::size_t unresolved = 0;
      if (!o->labels.empty()) {
        json j;
        try {
          j = json::parse(io::read_file(o->labels));
        } catch (const json::exception& e) {
          throw FormatError("labels file is not JSON: " + std::string(e.what()));
        }
        std::map<TemplateId, std::vector<std::string>> votes;
        for (const auto& [key, value] : j.items()) {
          const TemplateId id = std::stoull(key);
          if (value.is_string()) {
            votes[id].push_back(value.get<std::string>());
          } else {
            votes[id] = value.get<std::vector<std::string>>();
          }
        }
        for (const auto& [id, label] : resolve_conflicts(votes)) {
          if (label) {
            chosen.emplace(id, *label);
          } else {
            ++unresolved;
          }
        }
      } else if (!o->ground_truth.empty()) {
        const auto truth = load_ground_truth(o->ground_truth);
        chosen = vote_template_labels(store.templates, truth, sources, task);
      } else if (task == Task::kFormatDetection) {
        const std::vector<GroundTruthRow> none;
        chosen = vote_template_labels(store.templates, none, sources, task);
      } else {
        throw InvalidArgument("--labels or --ground-truth is required for " + std::string(task_code(task)));
      }
      const TaskPool pool = make_task_pool(task, store.templates, sources, chosen);
      const fs::path out = output_path(o->out);
      save_labeled(out, pool.examples, {{"task", task_code(task)}});
      return json{{"task", task_code(task)},
                  {"labeled_templates", chosen.size()},
                  {"unresolved_templates", unresolved},
                  {"examples", pool.examples.size()},
                  {"pool", out.string()}};
    };
  });
}

void add_train_vocab(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("train-vocab", "Train a subword vocabulary on the pretraining split");
  struct Opts {
    std::string corpus, out;
    std::size_t size = 600;
    double ratio = 0.8;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--corpus", o->corpus, "Corpus directory")->required();
  sub->add_option("--size", o->size, "Target vocabulary size")->capture_default_str();
  sub->add_option("--ratio", o->ratio, "Train fraction per source")->capture_default_str();
  sub->add_option("--out", o->out, "Vocabulary file")->required();
  sub->callback([o, &ctx] {
    ctx.run = [o, &ctx] {
      const auto sources = load_corpus(o->corpus);
      const CorpusSplit split = assemble_pretraining_split(sources, o->ratio, ctx.seed);
      const auto train = normalized(split.train);
      const auto val = normalized(split.validation);
      const Vocabulary vocab = train_vocab(train, o->size);
      const fs::path out = output_path(o->out);
      vocab.save(out);
      return json{{"vocab_size", vocab.size()},
                  {"vocabulary", out.string()},
                  {"oov_train", oov_rate(vocab, train)},
                  {"oov_validation", oov_rate(vocab, val)}};
    };
  });
}

void add_pretrain(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("pretrain", "Masked-language-model pretraining");
  struct Opts {
    std::string corpus, vocab, out, init;
    double ratio = 0.8;
    PretrainOptions train;
    ModelShape shape;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--corpus", o->corpus, "Corpus directory")->required();
  sub->add_option("--vocab", o->vocab, "Vocabulary file")->required();
  sub->add_option("--out", o->out, "Output directory for checkpoints and report")->required();
  sub->add_option("--init", o->init, "Continue from this checkpoint instead of a fresh model");
  sub->add_option("--ratio", o->ratio, "Train fraction per source")->capture_default_str();
  sub->add_option("--epochs", o->train.epochs, "Epochs")->capture_default_str();
  sub->add_option("--batch-size", o->train.batch_size, "Sequences per step")->capture_default_str();
  sub->add_option("--lr", o->train.learning_rate, "Peak learning rate")->capture_default_str();
  sub->add_option("--warmup", o->train.warmup_fraction, "Warmup fraction of steps")->capture_default_str();
  sub->add_option("--eval-interval", o->train.eval_interval, "Validation interval in epochs")
      ->capture_default_str();
  sub->add_option("--mask-prob", o->train.masking.mask_prob, "MLM selection probability")
      ->capture_default_str();
  o->shape.add(sub);
  sub->callback([o, &ctx] {
    ctx.run = [o, &ctx] {
      const auto started = std::chrono::steady_clock::now();
      const auto sources = load_corpus(o->corpus);
      const Vocabulary vocab = Vocabulary::load(o->vocab);
      const CorpusSplit split = assemble_pretraining_split(sources, o->ratio, ctx.seed);
      EncoderConfig config;
      ModelParameters init;
      if (!o->init.empty()) {
        Checkpoint ck = load_checkpoint(o->init);
        config = ck.config;
        init = std::move(ck.params);
      } else {
        config = o->shape.config(vocab.size());
        init = init_params(config, derive_seed(ctx.seed, 1));
      }
      const fs::path out = output_path(o->out);
      PretrainOptions opts = o->train;
      opts.seed = ctx.seed;
      opts.checkpoint_dir = out;
      const auto train = raw_texts(split.train);
      const auto val = raw_texts(split.validation);
      const PretrainResult result = pretrain(vocab, config, std::move(init), train, val, opts);
      const auto& rep = result.report;
      save_checkpoint(out / "best.bin",
                      Checkpoint{config, result.best,
                                 {{"kind", "pretrain"},
                                  {"eval_index", rep.selected},
                                  {"val_loss", rep.evaluations[rep.selected].val_loss}}});
      io::write_file(out / "report.json", rep.to_json().dump(2) + "\n");
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
      write_meta(out / "report.json", {{"seconds", elapsed.count()}, {"timing", rep.timing_json()}});
      return json{{"evaluations", rep.evaluations.size()},
                  {"selected", rep.selected},
                  {"initial_perplexity", rep.evaluations.front().val_perplexity},
                  {"final_perplexity", rep.evaluations.back().val_perplexity},
                  {"best_perplexity", rep.evaluations[rep.selected].val_perplexity},
                  {"best_checkpoint", (out / "best.bin").string()},
                  {"report", (out / "report.json").string()}};
    };
  });
}

void add_build_kshot(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("build-kshot", "Sample a k-shot training set and its test set");
  struct Opts {
    std::string pool, task, out;
    std::size_t k = 10;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--pool", o->pool, "Labeled pool (JSON lines)")->required();
  sub->add_option("--task", o->task, "lfd, gsc or fcp (defaults to the pool's task)");
  sub->add_option("--k", o->k, "Templates per class")->capture_default_str();
  sub->add_option("--out", o->out, "Output stem: <stem>.jsonl, .manifest.json, .test.jsonl")->required();
  sub->callback([o, &ctx] {
    ctx.run = [o, &ctx] {
      auto pool = load_labeled(o->pool).examples;
      if (pool.empty()) throw DataError("pool is empty");
      const Task task = o->task.empty() ? pool.front().task : parse_task(o->task);
      const KShotSplit split = build_kshot(pool, task, o->k, ctx.seed);
      const fs::path out = output_path(o->out);
      save_kshot(out, split.train);
      save_labeled(with_suffix(out, ".test.jsonl"), split.test, {{"task", task_code(task)}, {"k", o->k}});
      return json{{"task", task_code(task)},
                  {"k", o->k},
                  {"examples", split.train.examples.size()},
                  {"test_examples", split.test.size()},
                  {"deficient_classes", split.train.deficient_classes},
                  {"manifest", with_suffix(out, ".manifest.json").string()}};
    };
  });
}

void add_finetune(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("finetune", "Fine-tune a pretrained checkpoint on a k-shot set");
  struct Opts {
    std::string checkpoint, vocab, train, out;
    FinetuneOptions ft;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--checkpoint", o->checkpoint, "Pretrained checkpoint")->required();
  sub->add_option("--vocab", o->vocab, "Vocabulary file")->required();
  sub->add_option("--train", o->train, "k-shot stem or labeled JSON lines")->required();
  sub->add_option("--out", o->out, "Fine-tuned model file")->required();
  sub->add_option("--epochs", o->ft.epochs, "Epochs")->capture_default_str();
  sub->add_option("--lr", o->ft.learning_rate, "Peak learning rate")->capture_default_str();
  sub->add_option("--batch-size", o->ft.batch_size, "Batch size cap")->capture_default_str();
  sub->add_option("--warmup", o->ft.warmup_fraction, "Warmup fraction of steps")->capture_default_str();
  sub->callback([o, &ctx] {
    ctx.run = [o, &ctx] {
      const Checkpoint ck = load_checkpoint(o->checkpoint);
      const Vocabulary vocab = Vocabulary::load(o->vocab);
      KShotDataset ds;
      if (fs::exists(with_suffix(o->train, ".manifest.json"))) {
        ds = load_kshot(o->train);
      } else {
        ds.examples = load_labeled(o->train).examples;
        if (ds.examples.empty()) throw DataError("training set is empty");
        ds.task = ds.examples.front().task;
      }
      FinetuneOptions ft = o->ft;
      ft.seed = ctx.seed;
      const FinetuneResult r = finetune(ck, vocab, ds, ft);
      const fs::path out = output_path(o->out);
      r.model.save(out);
      return json{{"task", task_code(ds.task)},
                  {"examples", ds.examples.size()},
                  {"initial_loss", r.initial_loss},
                  {"final_loss", r.final_loss},
                  {"train_accuracy", r.train_accuracy},
                  {"model", out.string()}};
    };
  });
}

namespace {

struct AnyModel {
  std::optional<FineTunedModel> encoder;
  std::optional<BaselineModel> baseline;

  static AnyModel load(const std::string& path) {
    AnyModel m;
    const std::string head = io::read_file(path).substr(0, 1);
    if (head == "{") {
      m.baseline = BaselineModel::load(path);
    } else {
      m.encoder = FineTunedModel::load(path);
    }
    return m;
  }
  Task task() const { return encoder ? encoder->task : baseline->task; }
  std::vector<std::string> predict(std::span<const std::string> texts) const {
    return encoder ? logrep::predict(*encoder, texts) : baseline->predict(texts);
  }
};

}  // namespace

void add_predict(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("predict", "Label lines with a fine-tuned or baseline model");
  struct Opts {
    std::string model, input, out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--model", o->model, "Fine-tuned checkpoint or baseline JSON")->required();
  sub->add_option("--input", o->input, "Labeled JSON lines, or plain text with one line per entry")
      ->required();
  sub->add_option("--out", o->out, "Predictions (labeled JSON lines)")->required();
  sub->callback([o, &ctx] {
    ctx.run = [o] {
      const AnyModel model = AnyModel::load(o->model);
      std::vector<LabeledExample> rows;
      const std::string contents = io::read_file(o->input);
      try {
        rows = parse_labeled(contents).examples;
      } catch (const FormatError&) {
        for (const auto& line : source_from_text(contents, "input").lines) {
          rows.push_back(LabeledExample{line.raw_text, "", model.task(), std::nullopt});
        }
      }
      std::vector<std::string> texts;
      for (const auto& r : rows) texts.push_back(r.text);
      const auto labels = model.predict(texts);
      std::map<std::string, std::size_t> histogram;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].label = labels[i];
        rows[i].task = model.task();
        ++histogram[labels[i]];
      }
      const fs::path out = output_path(o->out);
      save_labeled(out, rows, {{"task", task_code(model.task())}, {"predictions", true}});
      return json{{"predictions", rows.size()}, {"histogram", histogram}, {"out", out.string()}};
    };
  });
}

void add_baseline_train(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("baseline-train", "Train a decision tree or SGD linear baseline");
  struct Opts {
    std::string kind = "sgd";
    std::string train, out;
    SgdOptions sgd;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--kind", o->kind, "dt or sgd")->capture_default_str();
  sub->add_option("--train", o->train, "k-shot stem or labeled JSON lines")->required();
  sub->add_option("--out", o->out, "Model file (JSON)")->required();
  sub->add_option("--epochs", o->sgd.epochs, "SGD epochs")->capture_default_str();
  sub->add_option("--lr", o->sgd.learning_rate, "SGD learning rate")->capture_default_str();
  sub->add_option("--l2", o->sgd.l2, "SGD L2 strength")->capture_default_str();
  sub->callback([o, &ctx] {
    ctx.run = [o, &ctx] {
      const auto train = load_training_set(o->train);
      SgdOptions sgd = o->sgd;
      sgd.seed = ctx.seed;
      const BaselineModel m = train_baseline(parse_baseline(o->kind), train, sgd);
      const fs::path out = output_path(o->out);
      m.save(out);
      json summary = {{"kind", baseline_code(m.kind)},
                      {"task", task_code(m.task)},
                      {"examples", train.size()},
                      {"features", m.dictionary.size()},
                      {"model", out.string()}};
      if (m.kind == BaselineKind::kDecisionTree) {
        summary["nodes"] = m.tree.nodes.size();
        summary["depth"] = m.tree.depth();
      }
      return summary;
    };
  });
}

void add_evaluate(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("evaluate", "Score predictions against gold labels");
  struct Opts {
    std::string gold, pred, out, model_name;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--gold", o->gold, "Gold labeled JSON lines")->required();
  sub->add_option("--pred", o->pred, "Predicted labeled JSON lines, same order")->required();
  sub->add_option("--out", o->out, "Evaluation report (JSON)")->required();
  sub->add_option("--model-name", o->model_name, "Model name recorded in the report");
  sub->callback([o, &ctx] {
    ctx.run = [o] {
      const auto gold = load_labeled(o->gold).examples;
      const auto pred = load_labeled(o->pred).examples;
      if (gold.size() != pred.size()) {
        throw DataError("gold has " + std::to_string(gold.size()) + " rows, predictions " +
                        std::to_string(pred.size()));
      }
      if (gold.empty()) throw DataError("nothing to evaluate");
      const Task task = gold.front().task;
      std::vector<std::string> truth, predicted;
      for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i].text != pred[i].text) {
          throw DataError("row " + std::to_string(i) + " text differs between gold and predictions");
        }
        truth.push_back(gold[i].label);
        predicted.push_back(pred[i].label);
      }
      const EvalReport rep = evaluate(truth, predicted, task_classes(task),
                                      std::string(task_code(task)), o->model_name);
      const fs::path out = output_path(o->out);
      json doc = rep.to_json();
      doc["format"] = "logrep.eval";
      doc["format_version"] = kReportFormatVersion;
      io::write_file(out, doc.dump(2) + "\n");
      const fs::path confusion = with_suffix(fs::path(out).replace_extension(), ".confusion.txt");
      io::write_file(confusion, render_confusion(rep));
      return json{{"task", task_code(task)},
                  {"examples", rep.examples},
                  {"precision", rep.scores.precision},
                  {"recall", rep.scores.recall},
                  {"f1", rep.scores.f1},
                  {"kappa", 100.0 * rep.kappa},
                  {"report", out.string()},
                  {"confusion", confusion.string()}};
    };
  });
}

void add_kappa(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("kappa", "Cohen's kappa between two annotators");
  struct Opts {
    std::string first, second;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--first", o->first, "Labels of the first annotator, one per line")->required();
  sub->add_option("--second", o->second, "Labels of the second annotator, same items")->required();
  sub->callback([o, &ctx] {
    ctx.run = [o] {
      const auto read_labels = [](const std::string& path) {
        std::vector<std::string> labels;
        std::istringstream in(io::read_file(path));
        for (std::string line; std::getline(in, line);) {
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (!line.empty()) labels.push_back(line);
        }
        return labels;
      };
      const auto a = read_labels(o->first);
      const auto b = read_labels(o->second);
      if (a.size() != b.size()) {
        throw DataError("annotators labeled " + std::to_string(a.size()) + " and " +
                        std::to_string(b.size()) + " items");
      }
      if (a.empty()) throw DataError("no annotations");
      std::size_t agree = 0;
      for (std::size_t i = 0; i < a.size(); ++i) agree += a[i] == b[i];
      return json{{"items", a.size()},
                  {"observed_agreement", static_cast<double>(agree) / static_cast<double>(a.size())},
                  {"kappa", 100.0 * cohen_kappa(a, b)}};
    };
  });
}

void add_report(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("report", "Render experiment tables (text, CSV, JSON)");
  struct Opts {
    std::string bundle, eval, out;
  };
  auto o = std::make_shared<Opts>();
  auto* bundle = sub->add_option("--bundle", o->bundle, "Experiment bundle JSON");
  auto* eval = sub->add_option("--eval", o->eval, "Evaluation report JSON (confusion table)");
  bundle->excludes(eval);
  sub->add_option("--out", o->out, "Output directory")->required();
  sub->callback([o, &ctx] {
    ctx.run = [o] {
      const fs::path out = output_path(o->out);
      json summary = json::object();
      if (!o->bundle.empty()) {
        json j;
        try {
          j = json::parse(io::read_file(o->bundle));
        } catch (const json::exception& e) {
          throw FormatError("bundle is not JSON: " + std::string(e.what()));
        }
        const ExperimentBundle b = bundle_from_json(j);
        std::string tables;
        for (Task t : kAllTasks) {
          if (!b.model_rows(t).empty()) tables += render_task_table(b, t) + "\n";
        }
        io::write_file(out / "tables.txt", tables);
        io::write_file(out / "results.csv", render_csv(b));
        io::write_file(out / "results.json", bundle_to_json(b).dump(2) + "\n");
        summary = {{"cells", b.cells.size()},
                   {"tables", (out / "tables.txt").string()},
                   {"csv", (out / "results.csv").string()},
                   {"json", (out / "results.json").string()}};
      } else if (!o->eval.empty()) {
        json j;
        try {
          j = json::parse(io::read_file(o->eval));
        } catch (const json::exception& e) {
          throw FormatError("evaluation report is not JSON: " + std::string(e.what()));
        }
        EvalReport r;
        r.classes = j.at("classes").get<std::vector<std::string>>();
        r.confusion = j.at("confusion").get<ConfusionMatrix>();
        r.scores = weighted_prf(r.confusion, r.classes);
        r.kappa = cohen_kappa(r.confusion);
        io::write_file(out / "confusion.txt", render_confusion(r));
        summary = {{"confusion", (out / "confusion.txt").string()}, {"f1", r.scores.f1}};
      } else {
        throw InvalidArgument("report needs --bundle or --eval");
      }
      return summary;
    };
  });
}

void add_experiment(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("experiment",
                                 "Run the task x k x model matrix and write the report bundle");
  struct Opts {
    std::string corpus, templates, ground_truth, checkpoint, vocab, out;
    std::vector<std::string> tasks{"lfd", "gsc", "fcp"};
    std::vector<std::string> models{"encoder", "dt", "sgd"};
    ExperimentOptions exp;
  };
  auto o = std::make_shared<Opts>();
  o->exp.finetune.learning_rate = 1e-3;
  sub->add_option("--corpus", o->corpus, "Corpus directory")->required();
  sub->add_option("--templates", o->templates, "Template store")->required();
  sub->add_option("--ground-truth", o->ground_truth, "Ground truth for GSC/FCP labels")->required();
  sub->add_option("--checkpoint", o->checkpoint, "Pretrained checkpoint (needed for encoder cells)");
  sub->add_option("--vocab", o->vocab, "Vocabulary file (needed for encoder cells)");
  sub->add_option("--out", o->out, "Output directory")->required();
  sub->add_option("--tasks", o->tasks, "Tasks to run")->delimiter(',')->capture_default_str();
  sub->add_option("--models", o->models, "encoder, dt, sgd")->delimiter(',')->capture_default_str();
  sub->add_option("--shots", o->exp.shots, "k values")->delimiter(',')->capture_default_str();
  sub->add_option("--ft-epochs", o->exp.finetune.epochs, "Fine-tuning epochs")->capture_default_str();
  sub->add_option("--ft-lr", o->exp.finetune.learning_rate, "Fine-tuning learning rate")
      ->capture_default_str();
  sub->add_option("--sgd-epochs", o->exp.sgd.epochs, "SGD epochs")->capture_default_str();
  sub->add_option("--sgd-lr", o->exp.sgd.learning_rate, "SGD learning rate")->capture_default_str();
  sub->callback([o, &ctx] {
    ctx.run = [o, &ctx] {
      const auto started = std::chrono::steady_clock::now();
      const auto sources = load_corpus(o->corpus);
      const auto store = load_templates(o->templates);
      const auto truth = load_ground_truth(o->ground_truth);
      ExperimentOptions opts = o->exp;
      opts.seed = ctx.seed;
      const auto has = [&](std::string_view m) {
        return std::find(o->models.begin(), o->models.end(), m) != o->models.end();
      };
      opts.run_encoder = has("encoder");
      opts.run_decision_tree = has("dt");
      opts.run_sgd = has("sgd");
      std::optional<Checkpoint> ck;
      std::optional<Vocabulary> vocab;
      if (opts.run_encoder) {
        if (o->checkpoint.empty() || o->vocab.empty()) {
          throw InvalidArgument("encoder cells need --checkpoint and --vocab");
        }
        ck = load_checkpoint(o->checkpoint);
        vocab = Vocabulary::load(o->vocab);
      }
      std::vector<TaskPool> pools;
      for (const auto& code : o->tasks) {
        const Task t = parse_task(code);
        pools.push_back(make_task_pool(t, store.templates, sources,
                                       vote_template_labels(store.templates, truth, sources, t)));
      }
      const ExperimentBundle b =
          run_experiment_matrix(ck ? &*ck : nullptr, vocab ? &*vocab : nullptr, pools, opts);
      const fs::path out = output_path(o->out);
      std::string tables;
      for (const auto& p : pools) tables += render_task_table(b, p.task) + "\n";
      io::write_file(out / "results.json", bundle_to_json(b).dump(2) + "\n");
      io::write_file(out / "results.csv", render_csv(b));
      io::write_file(out / "tables.txt", tables);
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
      write_meta(out, {{"seconds", elapsed.count()}});
      std::size_t failed = 0;
      json cells = json::array();
      for (const auto& c : b.cells) {
        failed += !c.ok();
        cells.push_back({{"task", task_code(c.task)},
                         {"k", c.k},
                         {"model", c.model},
                         {"f1", c.ok() ? json(c.eval->scores.f1) : json(nullptr)},
                         {"majority_f1", c.majority_f1}});
        if (!c.ok()) cells.back()["error"] = c.error;
      }
      return json{{"cells", cells}, {"failed_cells", failed}, {"bundle", (out / "results.json").string()}};
    };
  });
}

}  // namespace logrep::cli

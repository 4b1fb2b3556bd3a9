#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace logrep::cli {

/// State shared by every subcommand.
struct Context {
  std::uint64_t seed = 0;
  std::string config_path;
  /// The selected subcommand's body; returns the summary printed on stdout.
  std::function<nlohmann::json()> run;
};

/// Output paths: relative paths land under $LOGREP_OUT_DIR when it is set.
std::filesystem::path output_path(const std::string& path);

/// Writes a sidecar `<stem>.meta.json` next to an artifact with the
/// wall-clock facts that must stay out of the deterministic outputs.
void write_meta(const std::filesystem::path& artifact, const nlohmann::json& extra);

void add_ingest(CLI::App& app, Context& ctx);
void add_gen_synth(CLI::App& app, Context& ctx);
void add_mine_templates(CLI::App& app, Context& ctx);
void add_label_propagate(CLI::App& app, Context& ctx);
void add_train_vocab(CLI::App& app, Context& ctx);
void add_pretrain(CLI::App& app, Context& ctx);
void add_build_kshot(CLI::App& app, Context& ctx);
void add_finetune(CLI::App& app, Context& ctx);
void add_predict(CLI::App& app, Context& ctx);
void add_baseline_train(CLI::App& app, Context& ctx);
void add_evaluate(CLI::App& app, Context& ctx);
void add_kappa(CLI::App& app, Context& ctx);
void add_report(CLI::App& app, Context& ctx);
void add_experiment(CLI::App& app, Context& ctx);

}  // namespace logrep::cli

#include <cstring>
#include <iostream>

#include "cli.hpp"
#include "logrep/error.hpp"
#include "logrep/io.hpp"

namespace {

using nlohmann::json;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitOther = 1;

int exit_code(logrep::ErrorCategory c) {
  switch (c) {
    case logrep::ErrorCategory::kInvalidArgument:
    case logrep::ErrorCategory::kIo:
      return kExitUsage;
    case logrep::ErrorCategory::kFormat:
    case logrep::ErrorCategory::kData:
      return kExitData;
    case logrep::ErrorCategory::kNumeric:
      break;
  }
  return kExitOther;
}

void report_error(const char* category, const std::string& message) {
  std::cerr << json{{"error", category}, {"message", message}}.dump() << "\n";
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string out;
    for (const auto& item : v) {
      if (!out.empty()) out += ',';
      out += scalar_text(item);
    }
    return out;
  }
  return v.dump();
}

// Finds `--config PATH` before CLI11 sees the arguments, so file values can
// become option defaults that explicit flags still override.
std::string find_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--config") == 0 && i + 1 < argc) return argv[i + 1];
    if (std::strncmp(argv[i], "--config=", 9) == 0) return argv[i] + 9;
  }
  return {};
}

void apply_section(CLI::App& app, const json& section) {
  for (const auto& [key, value] : section.items()) {
    if (value.is_object()) continue;
    CLI::Option* opt = nullptr;
    try {
      opt = app.get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw logrep::InvalidArgument("config key '" + key + "' is not an option of " + app.get_name());
    }
    opt->default_val(scalar_text(value));
    opt->required(false);
  }
}

void apply_config(CLI::App& app, const json& config) {
  if (!config.is_object()) throw logrep::FormatError("config must be a JSON object");
  json top = json::object();
  for (const auto& [key, value] : config.items()) {
    if (!value.is_object()) {
      top[key] = value;
      continue;
    }
    CLI::App* sub = nullptr;
    try {
      sub = app.get_subcommand(key);
    } catch (const CLI::OptionNotFound&) {
      throw logrep::InvalidArgument("config section '" + key + "' is not a command");
    }
    apply_section(*sub, value);
  }
  apply_section(app, top);
}

}  // namespace

int main(int argc, char** argv) {
  logrep::cli::Context ctx;
  CLI::App app{"Log representation learning toolkit: mining, pretraining, few-shot tasks", "logrep"};
  app.require_subcommand(1);
  app.add_option("--seed", ctx.seed, "Master random seed")->capture_default_str();
  app.add_option("--config", ctx.config_path, "JSON config; keys are option names, sections are commands");

  logrep::cli::add_ingest(app, ctx);
  logrep::cli::add_gen_synth(app, ctx);
  logrep::cli::add_mine_templates(app, ctx);
  logrep::cli::add_label_propagate(app, ctx);
  logrep::cli::add_train_vocab(app, ctx);
  logrep::cli::add_pretrain(app, ctx);
  logrep::cli::add_build_kshot(app, ctx);
  logrep::cli::add_finetune(app, ctx);
  logrep::cli::add_predict(app, ctx);
  logrep::cli::add_baseline_train(app, ctx);
  logrep::cli::add_evaluate(app, ctx);
  logrep::cli::add_kappa(app, ctx);
  logrep::cli::add_report(app, ctx);
  logrep::cli::add_experiment(app, ctx);
  // Global options are accepted after the subcommand name too.
  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    if (const std::string path = find_config(argc, argv); !path.empty()) {
      json config;
      try {
        config = json::parse(logrep::io::read_file(path));
      } catch (const json::exception& e) {
        throw logrep::FormatError("config is not JSON: " + std::string(e.what()));
      }
      apply_config(app, config);
    }
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return kExitUsage;
  } catch (const logrep::Error& e) {
    report_error(logrep::to_string(e.category()), e.what());
    return exit_code(e.category());
  }

  try {
    const json summary = ctx.run();
    std::cout << summary.dump(2) << "\n";
    return 0;
  } catch (const logrep::Error& e) {
    report_error(logrep::to_string(e.category()), e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return kExitOther;
  }
}

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "logrep/corpus.hpp"

namespace logrep {

inline constexpr int kLabeledFormatVersion = 1;
inline constexpr int kCorpusFormatVersion = 1;

/// JSON lines. The first line is a header object carrying format and
/// format_version (plus any `extra` fields); every following line is one
/// example {text, label, task, template_id?}.
std::string serialize_labeled(std::span<const LabeledExample> examples,
                              const nlohmann::json& extra = nlohmann::json::object());

struct LabeledFile {
  nlohmann::json header;
  std::vector<LabeledExample> examples;
};

/// Validates every label against its task's class table.
LabeledFile parse_labeled(std::string_view contents);

void save_labeled(const std::filesystem::path& path, std::span<const LabeledExample> examples,
                  const nlohmann::json& extra = nlohmann::json::object());
LabeledFile load_labeled(const std::filesystem::path& path);

/// A corpus directory holds manifest.json plus one plain-text log file per
/// source under sources/.
void save_corpus(const std::filesystem::path& dir, std::span<const LogSource> sources);
std::vector<LogSource> load_corpus(const std::filesystem::path& dir);

/// File-system-safe rendering of a source name.
std::string source_file_stem(std::string_view name);

}  // namespace logrep

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace logrep {

struct LogLine {
  std::string source_name;
  std::size_t line_index = 0;
  std::string raw_text;
};

struct LogSource {
  std::string name;
  std::optional<std::string> format_label;
  std::vector<LogLine> lines;
  bool held_out = false;
};

struct CorpusSplit {
  std::vector<LogLine> train;
  std::vector<LogLine> validation;
  double ratio = 0.8;
};

/// Downstream classification tasks.
enum class Task { kFormatDetection, kGoldenSignal, kFaultCategory };

inline constexpr Task kAllTasks[] = {Task::kFormatDetection, Task::kGoldenSignal,
                                     Task::kFaultCategory};

/// Short code used in files and on the command line: "LFD", "GSC", "FCP".
std::string_view task_code(Task task);
std::string_view task_title(Task task);
/// Accepts the short code in any letter case.
Task parse_task(std::string_view code);
/// Ordered class table; the index of a name is its class id.
std::span<const std::string> task_classes(Task task);
std::optional<std::size_t> class_index(Task task, std::string_view label);

struct LabeledExample {
  std::string text;
  std::string label;
  Task task = Task::kFormatDetection;
  std::optional<std::uint64_t> template_id;
};

/// Throws InvalidArgument if the label is not in the task's class table.
void validate(const LabeledExample& example);

/// One LogLine per non-blank physical line; bytes that are not valid UTF-8
/// are replaced by U+FFFD.
LogSource ingest_source(const std::filesystem::path& path, std::string name,
                        std::optional<std::string> format_label = std::nullopt);

/// Same rules as ingest_source, reading from an in-memory buffer.
LogSource source_from_text(std::string_view contents, std::string name,
                           std::optional<std::string> format_label = std::nullopt);

/// Seeded shuffle, then prefix split with round(ratio * n) training lines,
/// clamped so both partitions are non-empty.
CorpusSplit split_corpus(const LogSource& source, double ratio, std::uint64_t seed);

/// Splits every non-held-out source and concatenates the partitions in
/// source order. Each source gets its own seed stream.
CorpusSplit assemble_pretraining_split(std::span<const LogSource> sources, double ratio,
                                       std::uint64_t seed);

struct SourceStats {
  std::string name;
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t total = 0;
  std::optional<std::size_t> templates;
  bool held_out = false;
};

struct CorpusStats {
  std::vector<SourceStats> sources;
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t total = 0;
  std::size_t templates = 0;
};

/// Per-source partition sizes under split_corpus(ratio). Held-out sources
/// report all of their lines as total and none as train/validation.
/// `template_counts`, when non-empty, is parallel to `sources`.
CorpusStats corpus_stats(std::span<const LogSource> sources, double ratio = 0.8,
                         std::span<const std::size_t> template_counts = {});

std::vector<std::string> raw_texts(std::span<const LogLine> lines);

}  // namespace logrep

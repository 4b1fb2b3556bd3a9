#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "logrep/corpus.hpp"
#include "logrep/template_miner.hpp"

namespace logrep {

inline constexpr int kSyntheticSpecVersion = 1;
inline constexpr int kGroundTruthVersion = 1;

/// A line pattern with placeholder slots. Recognized slots: <N> (decimal),
/// <HEX>, <IP>, <PATH>, <ID>, <TS> (timestamp). Every filler contains a
/// digit and stays one token after normalization.
struct SyntheticPattern {
  std::string text;
  std::optional<std::string> golden_signal;
  std::optional<std::string> fault_category;
};

struct SyntheticFormat {
  std::string name;
  std::vector<SyntheticPattern> patterns;
  std::size_t lines = 0;
  bool held_out = false;
};

struct SyntheticSpec {
  std::vector<SyntheticFormat> formats;

  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

/// Which pattern produced each line of each source.
struct SyntheticCorpus {
  SyntheticSpec spec;
  std::vector<LogSource> sources;
  std::vector<std::vector<std::size_t>> pattern_of_line;  // [source][line]

  /// "<source>#<pattern>" per line of `source`, for grouping_accuracy.
  std::vector<std::string> truth_keys(std::size_t source) const;
  const SyntheticPattern& pattern(std::size_t source, std::size_t line) const;
};

/// Pattern counts are balanced (every pattern gets floor or ceil of
/// lines / patterns lines) and the line order is a seeded shuffle.
/// Throws InvalidArgument for a zero line count or a format without patterns.
SyntheticCorpus gen_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed);

/// The template Drain should recover for a pattern: normalized literal
/// tokens, with every whitespace token that holds a slot as a wildcard.
std::vector<TemplateToken> expected_template(std::string_view pattern);

/// The built-in desk-scale benchmark: the 16 format classes (HealthApp,
/// SSH, Syslog-Sendmail and Websphere held out), `patterns` patterns per
/// format, each with golden-signal and fault-category labels spread evenly.
SyntheticSpec default_benchmark_spec(std::size_t patterns = 40, std::size_t lines_per_pattern = 16,
                                     std::uint64_t seed = 7);

/// Ground truth as JSON lines: a header, then {source, index, pattern,
/// template, golden_signal?, fault_category?} per line.
std::string serialize_ground_truth(const SyntheticCorpus& corpus);
void save_synthetic(const std::filesystem::path& dir, const SyntheticCorpus& corpus);

struct GroundTruthRow {
  std::string source;
  std::size_t index = 0;
  std::size_t pattern = 0;
  std::optional<std::string> golden_signal;
  std::optional<std::string> fault_category;
};
std::vector<GroundTruthRow> load_ground_truth(const std::filesystem::path& path);

/// Template labels for a task by unique-plurality vote over the ground-truth
/// labels of each template's member lines. LFD uses the source's format
/// label. Templates whose vote ties are left out.
std::map<TemplateId, std::string> vote_template_labels(std::span<const Template> templates,
                                                       std::span<const GroundTruthRow> truth,
                                                       std::span<const LogSource> sources, Task task);

}  // namespace logrep

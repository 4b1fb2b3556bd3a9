#include "logrep/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "logrep/error.hpp"
#include "logrep/rng.hpp"
#include "logrep/text.hpp"

namespace logrep {
namespace {

const std::array<std::string, 16> kFormatClasses = {
    "Android",   "Apache",    "BGL",  "HDFS",      "HPC",   "Hadoop",
    "HealthApp", "Mac",       "Openstack", "Proxifier", "SSH", "Syslog-Sendmail",
    "Spark",     "Thunderbird", "Websphere", "Zookeeper"};

const std::array<std::string, 5> kGoldenSignalClasses = {"Availability", "Error", "Information",
                                                         "Latency", "Saturation"};

const std::array<std::string, 7> kFaultClasses = {"Memory", "Network", "Authentication", "I/O",
                                                  "Device", "Application", "Other"};

std::size_t train_size(std::size_t n, double ratio) {
  auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

}  // namespace

std::string_view task_code(Task task) {
  switch (task) {
    case Task::kFormatDetection: return "LFD";
    case Task::kGoldenSignal: return "GSC";
    case Task::kFaultCategory: return "FCP";
  }
  return "?";
}

std::string_view task_title(Task task) {
  switch (task) {
    case Task::kFormatDetection: return "Log Format Detection";
    case Task::kGoldenSignal: return "Golden Signal Classification";
    case Task::kFaultCategory: return "Fault Category Prediction";
  }
  return "?";
}

Task parse_task(std::string_view code) {
  std::string upper(code);
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (Task t : kAllTasks) {
    if (task_code(t) == upper) return t;
  }
  throw InvalidArgument("unknown task '" + std::string(code) + "' (expected lfd, gsc or fcp)");
}

std::span<const std::string> task_classes(Task task) {
  switch (task) {
    case Task::kFormatDetection: return kFormatClasses;
    case Task::kGoldenSignal: return kGoldenSignalClasses;
    case Task::kFaultCategory: return kFaultClasses;
  }
  return {};
}

std::optional<std::size_t> class_index(Task task, std::string_view label) {
  const auto classes = task_classes(task);
  const auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) return std::nullopt;
  return static_cast<std::size_t>(it - classes.begin());
}

void validate(const LabeledExample& example) {
  if (!class_index(example.task, example.label)) {
    throw InvalidArgument("label '" + example.label + "' is not a " +
                          std::string(task_code(example.task)) + " class");
  }
}

LogSource source_from_text(std::string_view contents, std::string name,
                           std::optional<std::string> format_label) {
  LogSource source;
  source.name = std::move(name);
  source.format_label = std::move(format_label);
  std::size_t start = 0;
  while (start <= contents.size()) {
    std::size_t end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    std::string_view line = contents.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!text::is_blank(line)) {
      source.lines.push_back(
          LogLine{source.name, source.lines.size(), text::sanitize_utf8(line)});
    }
    start = end + 1;
  }
  if (source.lines.empty()) {
    throw DataError("source '" + source.name + "' has no non-empty lines");
  }
  return source;
}

LogSource ingest_source(const std::filesystem::path& path, std::string name,
                        std::optional<std::string> format_label) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read log file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path.string());
  return source_from_text(buffer.str(), std::move(name), std::move(format_label));
}

CorpusSplit split_corpus(const LogSource& source, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw InvalidArgument("split ratio must lie in (0, 1)");
  }
  const std::size_t n = source.lines.size();
  if (n == 0) throw DataError("cannot split empty source '" + source.name + "'");
  if (n < 2) {
    throw DataError("degenerate split: source '" + source.name +
                    "' has a single line, one partition would be empty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span(order));

  const std::size_t k = train_size(n, ratio);
  CorpusSplit split;
  split.ratio = ratio;
  split.train.reserve(k);
  split.validation.reserve(n - k);
  for (std::size_t i = 0; i < n; ++i) {
    (i < k ? split.train : split.validation).push_back(source.lines[order[i]]);
  }
  return split;
}

CorpusSplit assemble_pretraining_split(std::span<const LogSource> sources, double ratio,
                                       std::uint64_t seed) {
  CorpusSplit all;
  all.ratio = ratio;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (sources[s].held_out) continue;
    CorpusSplit part = split_corpus(sources[s], ratio, derive_seed(seed, s));
    std::move(part.train.begin(), part.train.end(), std::back_inserter(all.train));
    std::move(part.validation.begin(), part.validation.end(),
              std::back_inserter(all.validation));
  }
  if (all.train.empty()) throw DataError("no pretraining sources (all held out?)");
  return all;
}

CorpusStats corpus_stats(std::span<const LogSource> sources, double ratio,
                         std::span<const std::size_t> template_counts) {
  if (!template_counts.empty() && template_counts.size() != sources.size()) {
    throw InvalidArgument("template_counts must be parallel to sources");
  }
  CorpusStats stats;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const LogSource& src = sources[s];
    SourceStats row;
    row.name = src.name;
    row.held_out = src.held_out;
    row.total = src.lines.size();
    if (!src.held_out && row.total >= 2) {
      row.train = train_size(row.total, ratio);
      row.validation = row.total - row.train;
    } else if (!src.held_out) {
      row.train = row.total;
    }
    if (!template_counts.empty()) {
      row.templates = template_counts[s];
      stats.templates += template_counts[s];
    }
    stats.train += row.train;
    stats.validation += row.validation;
    stats.total += row.total;
    stats.sources.push_back(std::move(row));
  }
  return stats;
}

std::vector<std::string> raw_texts(std::span<const LogLine> lines) {
  std::vector<std::string> out;
  out.reserve(lines.size());
  for (const auto& line : lines) out.push_back(line.raw_text);
  return out;
}

}  // namespace logrep

#include "logrep/labeled_io.hpp"

#include <cctype>
#include <set>

#include "logrep/error.hpp"
#include "logrep/io.hpp"

namespace logrep {
namespace {

using nlohmann::json;

constexpr std::string_view kLabeledFormat = "logrep.labeled";
constexpr std::string_view kCorpusFormat = "logrep.corpus";

void check_header(const json& header, std::string_view format, int version, std::string_view what) {
  if (!header.is_object() || header.value("format", "") != format) {
    throw FormatError(std::string(what) + " lacks a '" + std::string(format) + "' header");
  }
  const int found = header.value("format_version", -1);
  if (found != version) {
    throw FormatError(std::string(what) + " has format_version " + std::to_string(found) +
                      ", expected " + std::to_string(version));
  }
}

}  // namespace

std::string serialize_labeled(std::span<const LabeledExample> examples, const json& extra) {
  json header = extra.is_object() ? extra : json::object();
  header["format"] = kLabeledFormat;
  header["format_version"] = kLabeledFormatVersion;
  header["count"] = examples.size();
  std::string out = header.dump() + "\n";
  for (const auto& ex : examples) {
    json row = {{"text", ex.text}, {"label", ex.label}, {"task", task_code(ex.task)}};
    if (ex.template_id) row["template_id"] = *ex.template_id;
    out += row.dump() + "\n";
  }
  return out;
}

LabeledFile parse_labeled(std::string_view contents) {
  LabeledFile file;
  std::size_t start = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  while (start < contents.size()) {
    std::size_t end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    const std::string_view line = contents.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("labeled file line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_header) {
      check_header(row, kLabeledFormat, kLabeledFormatVersion, "labeled file");
      file.header = std::move(row);
      have_header = true;
      continue;
    }
    try {
      LabeledExample ex;
      ex.text = row.at("text").get<std::string>();
      ex.label = row.at("label").get<std::string>();
      ex.task = parse_task(row.at("task").get<std::string>());
      if (row.contains("template_id") && !row["template_id"].is_null()) {
        ex.template_id = row["template_id"].get<std::uint64_t>();
      }
      validate(ex);
      file.examples.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw FormatError("labeled file line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InvalidArgument& e) {
      throw FormatError("labeled file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw FormatError("labeled file is empty");
  return file;
}

void save_labeled(const std::filesystem::path& path, std::span<const LabeledExample> examples,
                  const json& extra) {
  io::write_file(path, serialize_labeled(examples, extra));
}

LabeledFile load_labeled(const std::filesystem::path& path) {
  return parse_labeled(io::read_file(path));
}

std::string source_file_stem(std::string_view name) {
  std::string out;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    out += (std::isalnum(u) || c == '-' || c == '_' || c == '.') ? c : '_';
  }
  if (out.empty() || out.front() == '.') out.insert(out.begin(), '_');
  return out;
}

void save_corpus(const std::filesystem::path& dir, std::span<const LogSource> sources) {
  json list = json::array();
  std::set<std::string> stems;
  for (const auto& src : sources) {
    const std::string stem = source_file_stem(src.name);
    if (!stems.insert(stem).second) {
      throw InvalidArgument("two sources map to the same file name '" + stem + "'");
    }
    const std::string file = "sources/" + stem + ".log";
    std::string body;
    for (const auto& line : src.lines) {
      body += line.raw_text;
      body += '\n';
    }
    io::write_file(dir / file, body);
    list.push_back({{"name", src.name},
                    {"format_label", src.format_label ? json(*src.format_label) : json(nullptr)},
                    {"held_out", src.held_out},
                    {"file", file},
                    {"lines", src.lines.size()}});
  }
  const json manifest = {{"format", kCorpusFormat},
                         {"format_version", kCorpusFormatVersion},
                         {"sources", std::move(list)}};
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<LogSource> load_corpus(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(io::read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError("corpus manifest is not JSON: " + std::string(e.what()));
  }
  check_header(manifest, kCorpusFormat, kCorpusFormatVersion, "corpus manifest");
  std::vector<LogSource> sources;
  try {
    for (const auto& entry : manifest.at("sources")) {
      std::optional<std::string> label;
      if (entry.contains("format_label") && !entry["format_label"].is_null()) {
        label = entry["format_label"].get<std::string>();
      }
      LogSource src = ingest_source(dir / entry.at("file").get<std::string>(),
                                    entry.at("name").get<std::string>(), label);
      src.held_out = entry.value("held_out", false);
      const auto expected = entry.value("lines", src.lines.size());
      if (expected != src.lines.size()) {
        throw FormatError("source '" + src.name + "' has " + std::to_string(src.lines.size()) +
                          " lines, manifest records " + std::to_string(expected));
      }
      sources.push_back(std::move(src));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed corpus manifest: " + std::string(e.what()));
  }
  return sources;
}

}  // namespace logrep

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "logrep/corpus.hpp"

namespace logrep {

using TemplateId = std::uint64_t;

/// Serialized form of a wildcard template position.
inline constexpr std::string_view kWildcard = "<*>";

struct ParseTreeConfig {
  /// Tree levels counting the length level and the leaf level; lines are
  /// routed by their first depth - 2 tokens.
  std::size_t depth = 4;
  double similarity_threshold = 0.4;
  std::size_t max_children = 100;

  void validate() const;
};

/// A template position: a literal token, or nullopt for a wildcard.
using TemplateToken = std::optional<std::string>;

struct LineRef {
  std::string source;
  std::size_t index = 0;

  friend auto operator<=>(const LineRef&, const LineRef&) = default;
};

struct Template {
  TemplateId id = 0;
  std::vector<TemplateToken> tokens;
  std::size_t support = 0;
  std::vector<LineRef> members;
  /// Source the template was mined from (templates are mined per source).
  std::string source;

  std::size_t wildcard_count() const;
  /// Space-joined tokens with wildcards rendered as "<*>".
  std::string to_string() const;
};

/// Fraction of positions where the template holds a literal equal to the
/// token. Wildcards never count. Throws on length mismatch.
double seq_similarity(std::span<const std::string> tokens, std::span<const TemplateToken> tmpl);

/// Normalizes and whitespace-tokenizes a raw line the way the miner sees it.
std::vector<std::string> mining_tokens(std::string_view raw_text);

/// Online fixed-depth parse-tree miner. Lines are routed by token count and
/// then by their first depth - 2 tokens (a token containing a digit routes
/// through the wildcard child). Within a leaf the most similar template is
/// merged into if it reaches the threshold; otherwise a new template is
/// created.
class TemplateMiner {
 public:
  explicit TemplateMiner(ParseTreeConfig config = {}, TemplateId first_id = 0);
  ~TemplateMiner();
  TemplateMiner(TemplateMiner&&) noexcept;
  TemplateMiner& operator=(TemplateMiner&&) noexcept;

  /// Adds a line and returns the id of the template it joined or created.
  TemplateId add(const LogLine& line);
  TemplateId add_tokens(std::vector<std::string> tokens, LineRef ref);

  /// Read-only routing; the best template meeting the threshold, if any.
  std::optional<TemplateId> match(std::span<const std::string> tokens) const;
  std::optional<TemplateId> match(const LogLine& line) const;

  const std::vector<Template>& templates() const noexcept { return templates_; }
  const ParseTreeConfig& config() const noexcept { return config_; }

  /// Rebuilds a matcher over frozen templates, inserting them in id order.
  static TemplateMiner from_templates(std::vector<Template> templates, ParseTreeConfig config);

 private:
  struct Node;
  Node& route_for_insert(std::span<const std::string> tokens);
  const Node* route_for_search(std::span<const std::string> tokens) const;
  std::optional<std::size_t> best_in_leaf(const Node& leaf,
                                          std::span<const std::string> tokens) const;

  ParseTreeConfig config_;
  TemplateId next_id_;
  std::map<std::size_t, std::unique_ptr<Node>> by_length_;
  std::vector<Template> templates_;
  std::map<TemplateId, std::size_t> slot_of_;
};

/// Mines one template set over `lines` in order.
std::vector<Template> mine(std::span<const LogLine> lines, const ParseTreeConfig& config = {},
                           TemplateId first_id = 0);

/// Mines each source separately, with ids unique across sources.
std::vector<Template> mine_sources(std::span<const LogSource> sources,
                                   const ParseTreeConfig& config = {});

std::optional<TemplateId> match(std::span<const Template> templates, const LogLine& line,
                                const ParseTreeConfig& config = {});

/// Checks the template invariants against the mined lines: support equals
/// member count, every member has the template's length and shares every
/// literal. Returns a description of the first violation, if any.
std::optional<std::string> verify_templates(std::span<const Template> templates,
                                            std::span<const LogLine> lines);

/// Line-level grouping accuracy: the fraction of lines whose mined group is
/// exactly their ground-truth group. `truth` is parallel to `lines`.
double grouping_accuracy(std::span<const Template> templates, std::span<const LogLine> lines,
                         std::span<const std::string> truth);

/// Each member line of a labeled template becomes one example.
/// Throws InvalidArgument for labels of unknown templates or labels outside
/// the task's class table.
std::vector<LabeledExample> propagate_labels(std::span<const Template> templates,
                                             std::span<const LogLine> lines,
                                             const std::map<TemplateId, std::string>& labels,
                                             Task task);

/// Unique-plurality vote per template; nullopt marks a tie left for
/// adjudication.
std::map<TemplateId, std::optional<std::string>> resolve_conflicts(
    const std::map<TemplateId, std::vector<std::string>>& votes);

/// Template store: a header line then one JSON object per template.
inline constexpr int kTemplateStoreVersion = 1;
std::string serialize_templates(std::span<const Template> templates, const ParseTreeConfig& config);
void save_templates(const std::filesystem::path& path, std::span<const Template> templates,
                    const ParseTreeConfig& config);
struct TemplateStore {
  ParseTreeConfig config;
  std::vector<Template> templates;
};
TemplateStore parse_templates(std::string_view contents);
TemplateStore load_templates(const std::filesystem::path& path);

}  // namespace logrep

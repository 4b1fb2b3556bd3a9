#include "logrep/template_miner.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "logrep/error.hpp"
#include "logrep/normalize.hpp"
#include "logrep/text.hpp"

namespace logrep {

using nlohmann::json;

void ParseTreeConfig::validate() const {
  if (depth < 3) throw InvalidArgument("parse tree depth must be at least 3");
  if (!(similarity_threshold > 0.0 && similarity_threshold < 1.0)) {
    throw InvalidArgument("similarity threshold must lie in (0, 1)");
  }
  if (max_children < 1) throw InvalidArgument("max_children must be at least 1");
}

std::size_t Template::wildcard_count() const {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [](const auto& t) { return !t.has_value(); }));
}

std::string Template::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i] ? *tokens[i] : std::string(kWildcard);
  }
  return out;
}

double seq_similarity(std::span<const std::string> tokens, std::span<const TemplateToken> tmpl) {
  if (tokens.size() != tmpl.size()) {
    throw InvalidArgument("seq_similarity: length mismatch (" + std::to_string(tokens.size()) +
                          " vs " + std::to_string(tmpl.size()) + ")");
  }
  if (tokens.empty()) return 1.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tmpl[i] && *tmpl[i] == tokens[i]) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(tokens.size());
}

std::vector<std::string> mining_tokens(std::string_view raw_text) {
  return text::split_whitespace(normalize_line(raw_text));
}

struct TemplateMiner::Node {
  std::map<std::string, std::unique_ptr<Node>> children;
  std::vector<std::size_t> slots;  // indices into templates_
};

TemplateMiner::TemplateMiner(ParseTreeConfig config, TemplateId first_id)
    : config_(config), next_id_(first_id) {
  config_.validate();
}

TemplateMiner::~TemplateMiner() = default;
TemplateMiner::TemplateMiner(TemplateMiner&&) noexcept = default;
TemplateMiner& TemplateMiner::operator=(TemplateMiner&&) noexcept = default;

TemplateMiner::Node& TemplateMiner::route_for_insert(std::span<const std::string> tokens) {
  auto& root = by_length_[tokens.size()];
  if (!root) root = std::make_unique<Node>();
  Node* cur = root.get();
  const std::string wildcard(kWildcard);
  const auto child = [](Node* node, const std::string& key) {
    auto& slot = node->children[key];
    if (!slot) slot = std::make_unique<Node>();
    return slot.get();
  };
  const std::size_t routed = std::min(config_.depth - 2, tokens.size());
  for (std::size_t i = 0; i < routed; ++i) {
    const std::string& token = tokens[i];
    if (auto it = cur->children.find(token); it != cur->children.end() &&
                                             !text::contains_digit(token)) {
      cur = it->second.get();
      continue;
    }
    if (text::contains_digit(token)) {
      cur = child(cur, wildcard);
      continue;
    }
    const std::size_t n = cur->children.size();
    if (cur->children.contains(wildcard)) {
      cur = n < config_.max_children ? child(cur, token) : child(cur, wildcard);
    } else if (n + 1 < config_.max_children) {
      cur = child(cur, token);
    } else {
      cur = child(cur, wildcard);
    }
  }
  return *cur;
}

const TemplateMiner::Node* TemplateMiner::route_for_search(
    std::span<const std::string> tokens) const {
  const auto root = by_length_.find(tokens.size());
  if (root == by_length_.end()) return nullptr;
  const Node* cur = root->second.get();
  const std::string wildcard(kWildcard);
  const std::size_t routed = std::min(config_.depth - 2, tokens.size());
  for (std::size_t i = 0; i < routed; ++i) {
    const std::string& token = tokens[i];
    auto it = text::contains_digit(token) ? cur->children.end() : cur->children.find(token);
    if (it == cur->children.end()) it = cur->children.find(wildcard);
    if (it == cur->children.end()) return nullptr;
    cur = it->second.get();
  }
  return cur;
}

std::optional<std::size_t> TemplateMiner::best_in_leaf(const Node& leaf,
                                                       std::span<const std::string> tokens) const {
  std::optional<std::size_t> best;
  double best_sim = -1.0;
  std::size_t best_wild = 0;
  for (std::size_t slot : leaf.slots) {
    const Template& t = templates_[slot];
    const double sim = seq_similarity(tokens, t.tokens);
    const std::size_t wild = t.wildcard_count();
    if (sim > best_sim || (sim == best_sim && wild > best_wild)) {
      best = slot;
      best_sim = sim;
      best_wild = wild;
    }
  }
  if (best && best_sim >= config_.similarity_threshold) return best;
  return std::nullopt;
}

TemplateId TemplateMiner::add_tokens(std::vector<std::string> tokens, LineRef ref) {
  Node& leaf = route_for_insert(tokens);
  if (auto slot = best_in_leaf(leaf, tokens)) {
    Template& t = templates_[*slot];
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (t.tokens[i] && *t.tokens[i] != tokens[i]) t.tokens[i].reset();
    }
    ++t.support;
    t.members.push_back(std::move(ref));
    return t.id;
  }
  Template t;
  t.id = next_id_++;
  t.source = ref.source;
  t.tokens.assign(tokens.begin(), tokens.end());
  t.support = 1;
  t.members.push_back(std::move(ref));
  slot_of_[t.id] = templates_.size();
  leaf.slots.push_back(templates_.size());
  templates_.push_back(std::move(t));
  return templates_.back().id;
}

TemplateId TemplateMiner::add(const LogLine& line) {
  return add_tokens(mining_tokens(line.raw_text), LineRef{line.source_name, line.line_index});
}

std::optional<TemplateId> TemplateMiner::match(std::span<const std::string> tokens) const {
  const Node* leaf = route_for_search(tokens);
  if (!leaf) return std::nullopt;
  if (auto slot = best_in_leaf(*leaf, tokens)) return templates_[*slot].id;
  return std::nullopt;
}

std::optional<TemplateId> TemplateMiner::match(const LogLine& line) const {
  return match(mining_tokens(line.raw_text));
}

TemplateMiner TemplateMiner::from_templates(std::vector<Template> templates,
                                            ParseTreeConfig config) {
  std::sort(templates.begin(), templates.end(),
            [](const Template& a, const Template& b) { return a.id < b.id; });
  TemplateMiner miner(config, templates.empty() ? 0 : templates.back().id + 1);
  for (auto& t : templates) {
    std::vector<std::string> keys;
    keys.reserve(t.tokens.size());
    for (const auto& tok : t.tokens) keys.push_back(tok ? *tok : std::string(kWildcard));
    Node& leaf = miner.route_for_insert(keys);
    miner.slot_of_[t.id] = miner.templates_.size();
    leaf.slots.push_back(miner.templates_.size());
    miner.templates_.push_back(std::move(t));
  }
  return miner;
}

std::vector<Template> mine(std::span<const LogLine> lines, const ParseTreeConfig& config,
                           TemplateId first_id) {
  TemplateMiner miner(config, first_id);
  for (const auto& line : lines) miner.add(line);
  return miner.templates();
}

std::vector<Template> mine_sources(std::span<const LogSource> sources,
                                   const ParseTreeConfig& config) {
  std::vector<Template> all;
  TemplateId next = 0;
  for (const auto& source : sources) {
    auto part = mine(source.lines, config, next);
    next += part.size();
    for (auto& t : part) {
      t.source = source.name;
      all.push_back(std::move(t));
    }
  }
  return all;
}

std::optional<TemplateId> match(std::span<const Template> templates, const LogLine& line,
                                const ParseTreeConfig& config) {
  const auto miner = TemplateMiner::from_templates(
      std::vector<Template>(templates.begin(), templates.end()), config);
  return miner.match(line);
}

namespace {

std::map<LineRef, const LogLine*> index_lines(std::span<const LogLine> lines) {
  std::map<LineRef, const LogLine*> index;
  for (const auto& line : lines) index[LineRef{line.source_name, line.line_index}] = &line;
  return index;
}

}  // namespace

std::optional<std::string> verify_templates(std::span<const Template> templates,
                                            std::span<const LogLine> lines) {
  const auto index = index_lines(lines);
  for (const auto& t : templates) {
    if (t.support == 0 || t.support != t.members.size()) {
      return "template " + std::to_string(t.id) + ": support does not match member count";
    }
    for (const auto& ref : t.members) {
      const auto it = index.find(ref);
      if (it == index.end()) {
        return "template " + std::to_string(t.id) + ": unknown member " + ref.source + ":" +
               std::to_string(ref.index);
      }
      const auto tokens = mining_tokens(it->second->raw_text);
      if (tokens.size() != t.tokens.size()) {
        return "template " + std::to_string(t.id) + ": member length differs";
      }
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (t.tokens[i] && *t.tokens[i] != tokens[i]) {
          return "template " + std::to_string(t.id) + ": literal '" + *t.tokens[i] +
                 "' not shared by member " + ref.source + ":" + std::to_string(ref.index);
        }
      }
    }
  }
  return std::nullopt;
}

double grouping_accuracy(std::span<const Template> templates, std::span<const LogLine> lines,
                         std::span<const std::string> truth) {
  if (truth.size() != lines.size()) throw InvalidArgument("truth must be parallel to lines");
  if (lines.empty()) return 1.0;
  std::map<LineRef, std::string_view> truth_of;
  std::map<std::string_view, std::size_t> group_size;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    truth_of[LineRef{lines[i].source_name, lines[i].line_index}] = truth[i];
    ++group_size[truth[i]];
  }
  std::size_t correct = 0;
  for (const auto& t : templates) {
    std::set<std::string_view> groups;
    for (const auto& ref : t.members) {
      const auto it = truth_of.find(ref);
      if (it == truth_of.end()) throw InvalidArgument("template member missing from lines");
      groups.insert(it->second);
    }
    if (groups.size() == 1 && group_size[*groups.begin()] == t.members.size()) {
      correct += t.members.size();
    }
  }
  return static_cast<double>(correct) / static_cast<double>(lines.size());
}

std::vector<LabeledExample> propagate_labels(std::span<const Template> templates,
                                             std::span<const LogLine> lines,
                                             const std::map<TemplateId, std::string>& labels,
                                             Task task) {
  std::map<TemplateId, const Template*> by_id;
  for (const auto& t : templates) by_id[t.id] = &t;
  for (const auto& [id, label] : labels) {
    if (!by_id.contains(id)) {
      throw InvalidArgument("label given for unknown template id " + std::to_string(id));
    }
    if (!class_index(task, label)) {
      throw InvalidArgument("label '" + label + "' is not a " + std::string(task_code(task)) +
                            " class");
    }
  }
  const auto index = index_lines(lines);
  std::vector<LabeledExample> out;
  for (const auto& [id, label] : labels) {
    for (const auto& ref : by_id[id]->members) {
      const auto it = index.find(ref);
      if (it == index.end()) {
        throw InvalidArgument("template " + std::to_string(id) + " member " + ref.source + ":" +
                              std::to_string(ref.index) + " is not among the given lines");
      }
      out.push_back(LabeledExample{it->second->raw_text, label, task, id});
    }
  }
  return out;
}

std::map<TemplateId, std::optional<std::string>> resolve_conflicts(
    const std::map<TemplateId, std::vector<std::string>>& votes) {
  std::map<TemplateId, std::optional<std::string>> out;
  for (const auto& [id, ballot] : votes) {
    if (ballot.empty()) throw InvalidArgument("template " + std::to_string(id) + " has no votes");
    std::map<std::string, std::size_t> tally;
    for (const auto& v : ballot) ++tally[v];
    std::size_t top = 0;
    std::size_t at_top = 0;
    const std::string* winner = nullptr;
    for (const auto& [label, count] : tally) {
      if (count > top) {
        top = count;
        at_top = 1;
        winner = &label;
      } else if (count == top) {
        ++at_top;
      }
    }
    out[id] = at_top == 1 ? std::optional<std::string>(*winner) : std::nullopt;
  }
  return out;
}

std::string serialize_templates(std::span<const Template> templates,
                                const ParseTreeConfig& config) {
  std::string out;
  json header = {{"format", "logrep.templates"},
                 {"format_version", kTemplateStoreVersion},
                 {"config",
                  {{"depth", config.depth},
                   {"similarity_threshold", config.similarity_threshold},
                   {"max_children", config.max_children}}}};
  out += header.dump() + "\n";
  for (const auto& t : templates) {
    json tokens = json::array();
    for (const auto& tok : t.tokens) tokens.push_back(tok ? *tok : std::string(kWildcard));
    json members = json::array();
    for (const auto& m : t.members) members.push_back(json::array({m.source, m.index}));
    json row = {{"id", t.id},         {"source", t.source},   {"tokens", std::move(tokens)},
                {"support", t.support}, {"members", std::move(members)}};
    out += row.dump() + "\n";
  }
  return out;
}

void save_templates(const std::filesystem::path& path, std::span<const Template> templates,
                    const ParseTreeConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write template store " + path.string());
  out << serialize_templates(templates, config);
  if (!out) throw IoError("write failed for " + path.string());
}

TemplateStore parse_templates(std::string_view contents) {
  std::istringstream in{std::string(contents)};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("template store is empty");
  TemplateStore store;
  try {
    const json header = json::parse(line);
    if (header.value("format", "") != "logrep.templates") {
      throw FormatError("not a template store");
    }
    if (header.value("format_version", -1) != kTemplateStoreVersion) {
      throw FormatError("template store format_version mismatch");
    }
    const auto& cfg = header.at("config");
    store.config.depth = cfg.at("depth").get<std::size_t>();
    store.config.similarity_threshold = cfg.at("similarity_threshold").get<double>();
    store.config.max_children = cfg.at("max_children").get<std::size_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json row = json::parse(line);
      Template t;
      t.id = row.at("id").get<TemplateId>();
      t.source = row.value("source", "");
      for (const auto& tok : row.at("tokens")) {
        const auto s = tok.get<std::string>();
        t.tokens.push_back(s == kWildcard ? TemplateToken{} : TemplateToken{s});
      }
      t.support = row.at("support").get<std::size_t>();
      if (row.contains("members")) {
        for (const auto& m : row.at("members")) {
          t.members.push_back(LineRef{m.at(0).get<std::string>(), m.at(1).get<std::size_t>()});
        }
      }
      store.templates.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed template store: ") + e.what());
  }
  return store;
}

TemplateStore load_templates(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read template store " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_templates(buffer.str());
}

}  // namespace logrep

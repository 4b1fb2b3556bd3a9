#include <doctest.h>

#include "logrep/error.hpp"
#include "logrep/io.hpp"
#include "logrep/synthetic.hpp"
#include "logrep/template_miner.hpp"
#include "test_util.hpp"

using namespace logrep;

namespace {

std::vector<LogLine> lines_of(const std::vector<std::string>& texts, const std::string& source = "s") {
  std::vector<LogLine> out;
  for (std::size_t i = 0; i < texts.size(); ++i) out.push_back(LogLine{source, i, texts[i]});
  return out;
}

const TemplateToken W = std::nullopt;

}  // namespace

TEST_CASE("seq_similarity") {
  const std::vector<std::string> a{"send", "5", "bytes"};
  CHECK(seq_similarity(a, std::vector<TemplateToken>{"send", "5", "bytes"}) == 1.0);
  CHECK(seq_similarity(a, std::vector<TemplateToken>{"send", W, "bytes"}) == doctest::Approx(2.0 / 3.0));
  CHECK(seq_similarity(a, std::vector<TemplateToken>{W, W, W}) == 0.0);
  CHECK_THROWS_AS(seq_similarity(a, std::vector<TemplateToken>{"send"}), InvalidArgument);
}

TEST_CASE("mine: hand-run merge and match") {
  const auto lines = lines_of({"send 5 bytes", "send 7 bytes"});
  const auto t = mine(lines);
  REQUIRE(t.size() == 1);
  CHECK(t[0].to_string() == "send <*> bytes");
  CHECK(t[0].support == 2);
  CHECK(t[0].members.size() == 2);

  CHECK(match(t, LogLine{"s", 9, "send 9 bytes"}) == t[0].id);
  CHECK_FALSE(match(t, LogLine{"s", 9, "send 9 more bytes"}).has_value());
  for (const auto& l : lines) CHECK(match(t, l) == t[0].id);

  const auto single = mine(lines_of({"Connection closed by peer"}));
  REQUIRE(single.size() == 1);
  CHECK(single[0].to_string() == "connection closed by peer");
  CHECK(single[0].support == 1);
}

TEST_CASE("mine: routing separates dissimilar lines of equal length") {
  const auto t = mine(lines_of({"open file a", "open file b", "close socket now", "open file c"}));
  REQUIRE(t.size() == 2);
  CHECK(t[0].to_string() == "open file <*>");
  CHECK(t[0].support == 3);
  CHECK(t[1].support == 1);
}

TEST_CASE("mine: digit tokens route through the wildcard branch") {
  // Different leading numbers must still reach the same leaf.
  const auto t = mine(lines_of({"12 workers ready", "13 workers ready"}));
  REQUIRE(t.size() == 1);
  CHECK(t[0].to_string() == "<*> workers ready");
}

TEST_CASE("mine: max_children overflow") {
  ParseTreeConfig cfg;
  cfg.max_children = 2;
  std::vector<std::string> texts;
  for (const char* w : {"alpha", "beta", "gamma", "delta"}) texts.push_back(std::string(w) + " x y");
  const auto lines = lines_of(texts);
  const auto t = mine(lines, cfg);
  std::size_t support = 0;
  for (const auto& tm : t) support += tm.support;
  CHECK(support == 4);
  CHECK(!verify_templates(t, lines).has_value());
  ParseTreeConfig bad;
  bad.depth = 2;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = {};
  bad.similarity_threshold = 1.5;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("mine: invariants and determinism on a synthetic corpus") {
  const SyntheticCorpus corpus = gen_synthetic_corpus(default_benchmark_spec(6, 12), 4);
  const auto a = mine_sources(corpus.sources);
  const auto b = mine_sources(corpus.sources);
  CHECK(serialize_templates(a, {}) == serialize_templates(b, {}));

  std::vector<LogLine> all;
  for (const auto& s : corpus.sources) all.insert(all.end(), s.lines.begin(), s.lines.end());
  CHECK(!verify_templates(a, all).has_value());
  std::size_t support = 0;
  for (const auto& t : a) support += t.support;
  CHECK(support == all.size());

  for (std::size_t s = 0; s < corpus.sources.size(); ++s) {
    const auto per = mine(corpus.sources[s].lines);
    CHECK(per.size() == corpus.spec.formats[s].patterns.size());
    CHECK(grouping_accuracy(per, corpus.sources[s].lines, corpus.truth_keys(s)) == 1.0);
  }
}

TEST_CASE("verify_templates detects a broken literal") {
  const auto lines = lines_of({"send 5 bytes", "send 7 bytes"});
  auto t = mine(lines);
  t[0].tokens[1] = "5";
  CHECK(verify_templates(t, lines).has_value());
}

TEST_CASE("grouping accuracy counts exact group matches only") {
  const auto lines = lines_of({"a 1", "a 2", "b 3"});
  const auto t = mine(lines);
  const std::vector<std::string> good{"x", "x", "y"};
  const std::vector<std::string> split{"x", "z", "y"};
  CHECK(grouping_accuracy(t, lines, good) == 1.0);
  // Lines 0 and 1 share a mined group but not a truth group.
  CHECK(grouping_accuracy(t, lines, split) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("propagate_labels fan-out") {
  std::vector<std::string> texts;
  for (int i = 0; i < 14; ++i) texts.push_back("connection reset by peer " + std::to_string(i));
  const auto lines = lines_of(texts);
  const auto t = mine(lines);
  REQUIRE(t.size() == 1);
  const auto ex = propagate_labels(t, lines, {{t[0].id, "Network"}}, Task::kFaultCategory);
  CHECK(ex.size() == 14);
  for (const auto& e : ex) {
    CHECK(e.label == "Network");
    CHECK(e.template_id == t[0].id);
  }
  CHECK(propagate_labels(t, lines, {}, Task::kFaultCategory).empty());
  CHECK_THROWS_AS(propagate_labels(t, lines, {{t[0].id + 50, "Network"}}, Task::kFaultCategory),
                  InvalidArgument);
  CHECK_THROWS_AS(propagate_labels(t, lines, {{t[0].id, "Latency"}}, Task::kFaultCategory),
                  InvalidArgument);
}

TEST_CASE("propagate_labels: 14 templates cover a 150k-line source") {
  SyntheticFormat f{"MongoDB", {}, 150000, false};
  const char* verbs[] = {"connect", "accept", "close", "insert", "query", "update", "remove",
                         "flush", "repl", "elect", "index", "compact", "auth", "shutdown"};
  for (const char* v : verbs) {
    f.patterns.push_back({std::string(v) + "_event conn <N> took <N> ms on <IP>", std::nullopt, std::nullopt});
  }
  const SyntheticCorpus corpus = gen_synthetic_corpus(SyntheticSpec{{f}}, 2);
  const auto& lines = corpus.sources[0].lines;
  const auto t = mine(lines);
  REQUIRE(t.size() == 14);
  std::map<TemplateId, std::string> labels;
  for (const auto& tm : t) labels[tm.id] = "Application";
  CHECK(propagate_labels(t, lines, labels, Task::kFaultCategory).size() == 150000);
}

TEST_CASE("resolve_conflicts") {
  const auto r = resolve_conflicts({{1, {"A", "A", "B"}}, {2, {"A"}}, {3, {"A", "B"}}, {4, {"B", "A", "C", "B"}}});
  CHECK(r.at(1) == "A");
  CHECK(r.at(2) == "A");
  CHECK_FALSE(r.at(3).has_value());
  CHECK(r.at(4) == "B");
}

TEST_CASE("template store round-trip is byte-identical") {
  testing::TempDir dir("tmpl");
  const SyntheticCorpus corpus = gen_synthetic_corpus(default_benchmark_spec(3, 5), 1);
  const auto t = mine_sources(corpus.sources);
  ParseTreeConfig cfg;
  cfg.similarity_threshold = 0.5;
  save_templates(dir / "t.jsonl", t, cfg);
  const TemplateStore store = load_templates(dir / "t.jsonl");
  CHECK(store.config.similarity_threshold == 0.5);
  CHECK(serialize_templates(store.templates, store.config) == io::read_file(dir / "t.jsonl"));
  CHECK_THROWS_AS(parse_templates("not json\n"), FormatError);

  const TemplateMiner m = TemplateMiner::from_templates(store.templates, cfg);
  for (const auto& l : corpus.sources[0].lines) CHECK(m.match(l).has_value());
}

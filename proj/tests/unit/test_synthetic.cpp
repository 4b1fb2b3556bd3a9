#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "logrep/error.hpp"
#include "logrep/io.hpp"
#include "logrep/labeled_io.hpp"
#include "logrep/normalize.hpp"
#include "logrep/synthetic.hpp"
#include "logrep/template_miner.hpp"
#include "logrep/text.hpp"
#include "test_util.hpp"

using namespace logrep;
using logrep::testing::TempDir;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.formats.push_back({"alpha",
                          {{"<TS> open file <PATH> size <N>", "Information", "I/O"},
                           {"<TS> worker <ID> crashed at <HEX>", "Error", "Application"},
                           {"<TS> peer <IP> unreachable", "Availability", "Network"}},
                          10,
                          false});
  spec.formats.push_back({"beta", {{"<TS> login ok for <ID>", std::nullopt, std::nullopt}}, 3, true});
  return spec;
}

}  // namespace

TEST_CASE("generator: balanced pattern counts, determinism, seeds matter") {
  const SyntheticSpec spec = small_spec();
  const SyntheticCorpus a = gen_synthetic_corpus(spec, 5);
  const SyntheticCorpus b = gen_synthetic_corpus(spec, 5);
  const SyntheticCorpus c = gen_synthetic_corpus(spec, 6);
  REQUIRE(a.sources.size() == 2);
  CHECK(a.sources[0].lines.size() == 10);
  CHECK(a.sources[1].lines.size() == 3);
  CHECK(a.sources[1].held_out);
  CHECK(a.sources[0].format_label == "alpha");

  std::map<std::size_t, std::size_t> counts;
  for (std::size_t p : a.pattern_of_line[0]) ++counts[p];
  // 10 lines over 3 patterns: 4, 3, 3 in some order.
  CHECK(counts.size() == 3);
  for (const auto& [p, n] : counts) CHECK((n == 3 || n == 4));

  CHECK(serialize_ground_truth(a) == serialize_ground_truth(b));
  for (std::size_t i = 0; i < 10; ++i) CHECK(a.sources[0].lines[i].raw_text == b.sources[0].lines[i].raw_text);
  bool differs = false;
  for (std::size_t i = 0; i < 10; ++i) differs |= a.sources[0].lines[i].raw_text != c.sources[0].lines[i].raw_text;
  CHECK(differs);

  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(a.sources[0].lines[i].line_index == i);
    CHECK(a.sources[0].lines[i].source_name == "alpha");
  }
}

TEST_CASE("generator: slot fillers hold a digit and stay one token") {
  const SyntheticCorpus corpus = gen_synthetic_corpus(default_benchmark_spec(10, 4), 2);
  std::size_t checked = 0;
  for (std::size_t s = 0; s < corpus.sources.size(); ++s) {
    for (std::size_t i = 0; i < corpus.sources[s].lines.size(); ++i) {
      const auto& line = corpus.sources[s].lines[i];
      const auto pattern = text::split_whitespace(corpus.pattern(s, i).text);
      const auto raw = text::split_whitespace(line.raw_text);
      REQUIRE(raw.size() == pattern.size());
      for (std::size_t t = 0; t < pattern.size(); ++t) {
        if (pattern[t].find('<') == std::string::npos || pattern[t] == raw[t]) continue;
        CHECK(std::any_of(raw[t].begin(), raw[t].end(), [](char ch) { return ch >= '0' && ch <= '9'; }));
        CHECK(text::split_whitespace(normalize_line(raw[t])).size() == 1);
        ++checked;
      }
      // The line's mining tokens line up with the expected template.
      CHECK(mining_tokens(line.raw_text).size() == expected_template(corpus.pattern(s, i).text).size());
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("generator: invalid specs") {
  SyntheticSpec spec = small_spec();
  spec.formats[0].lines = 0;
  CHECK_THROWS_AS(gen_synthetic_corpus(spec, 1), InvalidArgument);
  spec = small_spec();
  spec.formats[1].patterns.clear();
  CHECK_THROWS_AS(gen_synthetic_corpus(spec, 1), InvalidArgument);
  spec = small_spec();
  spec.formats[1].name = "alpha";
  CHECK_THROWS_AS(gen_synthetic_corpus(spec, 1), InvalidArgument);
  spec = small_spec();
  spec.formats[0].patterns[0].golden_signal = "Nope";
  CHECK_THROWS_AS(gen_synthetic_corpus(spec, 1), InvalidArgument);
  CHECK_THROWS_AS(gen_synthetic_corpus(SyntheticSpec{}, 1), InvalidArgument);
  CHECK_THROWS_AS(default_benchmark_spec(0, 4), InvalidArgument);
}

TEST_CASE("expected_template") {
  const auto t = expected_template("<TS> open file <PATH> size=<N> done");
  REQUIRE(t.size() == 6);
  CHECK(!t[0]);
  CHECK(*t[1] == "open");
  CHECK(*t[2] == "file");
  CHECK(!t[3]);
  CHECK(!t[4]);
  CHECK(*t[5] == "done");
}

TEST_CASE("default benchmark: 16 formats, 4 held out, labels spread evenly") {
  const SyntheticSpec spec = default_benchmark_spec(40, 16, 7);
  REQUIRE(spec.formats.size() == 16);
  std::set<std::string> held;
  std::set<std::string> names;
  for (const auto& f : spec.formats) {
    names.insert(f.name);
    if (f.held_out) held.insert(f.name);
    CHECK(f.patterns.size() == 40);
    CHECK(f.lines == 640);
    std::map<std::string, std::size_t> gs, fc;
    std::set<std::string> texts;
    for (const auto& p : f.patterns) {
      REQUIRE(p.golden_signal);
      REQUIRE(p.fault_category);
      ++gs[*p.golden_signal];
      ++fc[*p.fault_category];
      texts.insert(p.text);
    }
    CHECK(texts.size() == 40);
    CHECK(gs.size() == 5);
    CHECK(fc.size() == 7);
    for (const auto& [label, n] : gs) CHECK((n == 8));
    for (const auto& [label, n] : fc) CHECK((n == 5 || n == 6));
  }
  CHECK(names == std::set<std::string>(task_classes(Task::kFormatDetection).begin(),
                                       task_classes(Task::kFormatDetection).end()));
  CHECK(held == std::set<std::string>{"HealthApp", "SSH", "Syslog-Sendmail", "Websphere"});
  CHECK(default_benchmark_spec(40, 16, 7).to_json() == spec.to_json());
  CHECK(default_benchmark_spec(40, 16, 8).to_json() != spec.to_json());
}

TEST_CASE("spec JSON round trip and plain-string patterns") {
  const SyntheticSpec spec = small_spec();
  const auto j = spec.to_json();
  CHECK(SyntheticSpec::from_json(j).to_json() == j);

  const auto plain = nlohmann::json::parse(
      R"({"formats":[{"name":"x","lines":4,"patterns":["a <N>","b <N>"]}]})");
  const SyntheticSpec p = SyntheticSpec::from_json(plain);
  REQUIRE(p.formats.size() == 1);
  CHECK(p.formats[0].patterns[1].text == "b <N>");
  CHECK(!p.formats[0].patterns[1].golden_signal);

  auto wrong = j;
  wrong["format_version"] = kSyntheticSpecVersion + 1;
  CHECK_THROWS_AS(SyntheticSpec::from_json(wrong), FormatError);
  CHECK_THROWS_AS(SyntheticSpec::from_json(nlohmann::json::parse(R"({"formats":[{"name":"x"}]})")),
                  FormatError);
}

TEST_CASE("ground truth: save, load, header checks") {
  TempDir dir("synthetic");
  const SyntheticCorpus corpus = gen_synthetic_corpus(small_spec(), 9);
  save_synthetic(dir.path(), corpus);
  const auto rows = load_ground_truth(dir / "ground_truth.jsonl");
  REQUIRE(rows.size() == 13);
  CHECK(rows[0].source == "alpha");
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(rows[i].index == i);
    CHECK(rows[i].pattern == corpus.pattern_of_line[0][i]);
    CHECK(rows[i].golden_signal == corpus.pattern(0, i).golden_signal);
    CHECK(rows[i].fault_category == corpus.pattern(0, i).fault_category);
  }
  CHECK(!rows[12].golden_signal);

  const auto sources = load_corpus(dir.path());
  REQUIRE(sources.size() == 2);
  CHECK(sources[0].lines.size() == 10);
  CHECK(sources[0].lines[3].raw_text == corpus.sources[0].lines[3].raw_text);

  io::write_file(dir / "bad.jsonl", "{\"format\":\"other\"}\n");
  CHECK_THROWS_AS(load_ground_truth(dir / "bad.jsonl"), FormatError);
  io::write_file(dir / "empty.jsonl", "");
  CHECK_THROWS_AS(load_ground_truth(dir / "empty.jsonl"), FormatError);
}

TEST_CASE("vote_template_labels: plurality per template, format label for detection") {
  const SyntheticCorpus corpus = gen_synthetic_corpus(small_spec(), 3);
  const auto templates = mine_sources(corpus.sources);
  const std::string gt = serialize_ground_truth(corpus);
  TempDir dir("votes");
  io::write_file(dir / "gt.jsonl", gt);
  const auto truth = load_ground_truth(dir / "gt.jsonl");

  const auto lfd = vote_template_labels(templates, truth, corpus.sources, Task::kFormatDetection);
  CHECK(lfd.size() == templates.size());
  for (const auto& t : templates) CHECK(lfd.at(t.id) == t.source);

  const auto gsc = vote_template_labels(templates, truth, corpus.sources, Task::kGoldenSignal);
  // The beta pattern has no golden signal, so only alpha's three templates vote.
  CHECK(gsc.size() == 3);
  for (const auto& t : templates) {
    if (t.source != "alpha") continue;
    const auto& first = t.members.front();
    CHECK(gsc.at(t.id) == *corpus.pattern(0, first.index).golden_signal);
  }

  // A template whose members split evenly is left out.
  Template mixed;
  mixed.id = 99;
  mixed.source = "alpha";
  std::size_t a = 0, b = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto p = corpus.pattern_of_line[0][i];
    if (p == 0 && a < 2) {
      mixed.members.push_back({"alpha", i});
      ++a;
    } else if (p == 1 && b < 2) {
      mixed.members.push_back({"alpha", i});
      ++b;
    }
  }
  mixed.support = mixed.members.size();
  const std::vector<Template> only{mixed};
  CHECK(vote_template_labels(only, truth, corpus.sources, Task::kGoldenSignal).empty());
}

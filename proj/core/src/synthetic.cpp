#include "logrep/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>

#include "logrep/error.hpp"
#include "logrep/io.hpp"
#include "logrep/labeled_io.hpp"
#include "logrep/rng.hpp"
#include "logrep/text.hpp"

namespace logrep {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 6> kSlots = {"<N>", "<HEX>", "<IP>", "<PATH>", "<ID>", "<TS>"};

struct FormatStyle {
  std::string_view name;
  std::string_view header;
  std::array<std::string_view, 6> words;
  bool held_out;
};

// Header text follows the timestamp and event token of every line.
const std::array<FormatStyle, 16> kStyles = {{
    {"Android", "I ActivityManager:", {"activity", "intent", "package", "wakelock", "binder", "surface"}, false},
    {"Apache", "[info] mod_jk", {"httpd", "vhost", "jk2_init", "workerenv", "scoreboard", "child"}, false},
    {"BGL", "RAS KERNEL INFO", {"ciod", "rts", "ddr", "torus", "midplane", "nodecard"}, false},
    {"HDFS", "INFO dfs.DataNode$PacketResponder:", {"datanode", "namenode", "blockmap", "replica", "pipeline", "fsnamesystem"}, false},
    {"HPC", "node-status state_change.node", {"gige", "boot_cmd", "partition", "ambient", "clusterfs", "switch_module"}, false},
    {"Hadoop", "INFO [main] org.apache.hadoop.mapreduce.v2.app.MRAppMaster:", {"jobtracker", "rmcontainer", "attempt", "shuffle", "yarn", "mapred"}, false},
    {"HealthApp", "Step_LSC", {"hiStep", "calories", "stepStandard", "sensorhub", "heartrate", "totalAltitude"}, true},
    {"Mac", "calvisitor-10-105-160-95 kernel[0]:", {"airport", "loginwindow", "powerd", "coreservices", "mdworker", "sandbox"}, false},
    {"Openstack", "nova-compute.log INFO nova.compute.manager", {"instance", "wsgi", "neutron", "glance", "hypervisor", "flavor"}, false},
    {"Proxifier", "chrome.exe *64 -", {"proxy", "https_tunnel", "bytes_sent", "lifetime", "proxifier_rule", "outbound"}, false},
    {"SSH", "LabSZ sshd[<N>]:", {"sshd", "pam_unix", "preauth", "ruser", "rhost", "kex"}, true},
    {"Syslog-Sendmail", "combo sendmail[<N>]:", {"mailer", "relay", "msgid", "smtp", "mta", "dsn"}, true},
    {"Spark", "INFO storage.BlockManager:", {"executor", "rdd", "stage", "broadcast", "taskset", "driver_rpc"}, false},
    {"Thunderbird", "dn228 kernel: [KERNEL_IB]", {"dhcpd", "ib_sm", "crond", "pbs_mom", "xinetd", "mcelog"}, false},
    {"Websphere", "WebContainer : 3 SRVE0242I:", {"servlet", "ejb", "jndi", "webcontainer", "classloader", "was_cell"}, true},
    {"Zookeeper", "[QuorumPeer[myid=1]/0:0:0:0:0:0:0:0:2181] - INFO", {"zxid", "quorum", "leader", "follower", "learner", "zkserver"}, false},
}};

const std::map<std::string, std::vector<std::string_view>>& golden_words() {
  static const std::map<std::string, std::vector<std::string_view>> words = {
      {"Availability", {"unreachable", "unavailable", "refused", "offline", "down", "disconnected"}},
      {"Error", {"error", "failed", "exception", "fatal", "invalid", "corrupt"}},
      {"Information", {"started", "completed", "registered", "received", "initialized", "loaded"}},
      {"Latency", {"slow", "timeout", "delayed", "latency", "lagging", "stalled"}},
      {"Saturation", {"full", "exhausted", "overload", "throttled", "limit", "saturated"}},
  };
  return words;
}

const std::map<std::string, std::vector<std::string_view>>& fault_words() {
  static const std::map<std::string, std::vector<std::string_view>> words = {
      {"Memory", {"memory", "heap", "oom", "allocation", "swap", "pagefault"}},
      {"Network", {"socket", "connection", "packet", "route", "dns", "network"}},
      {"Authentication", {"login", "password", "credential", "token", "auth", "session"}},
      {"I/O", {"disk", "read", "write", "blockdev", "filesystem", "io"}},
      {"Device", {"device", "driver", "sensor", "usb", "interrupt", "firmware"}},
      {"Application", {"app", "service", "thread", "request", "handler", "process"}},
      {"Other", {"misc", "general", "unknown", "notice", "status", "event"}},
  };
  return words;
}

constexpr std::array<std::string_view, 40> kVerbs = {
    "add",     "allocate", "apply",   "check",  "close",   "commit", "connect",  "create",
    "delete",  "dispatch", "drop",    "fetch",  "flush",   "handle", "load",     "lock",
    "merge",   "open",     "parse",   "poll",   "probe",   "queue",  "readback", "recover",
    "register", "release", "reload",  "remove", "renew",   "reset",  "resolve",  "restart",
    "retry",   "scan",     "schedule", "send",  "startup", "stop",   "sync",     "update"};
constexpr std::array<std::string_view, 30> kNouns = {
    "chunk",  "buffer",  "cachelet", "channel", "config",  "entry", "file",  "frame",
    "job",    "key",     "lease",    "log",     "map",     "message", "node", "page",
    "pool",   "port",    "queue",    "record",  "region",  "segment", "shard", "slot",
    "stream", "table",   "task",     "timer",   "txn",     "unit"};
constexpr std::array<std::string_view, 10> kFillers = {"for", "on", "at", "with", "from",
                                                       "in",  "to", "by", "via", "after"};
constexpr std::array<std::string_view, 5> kValueSlots = {"<N>", "<HEX>", "<IP>", "<PATH>", "<ID>"};

std::string two(std::size_t v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02zu", v);
  return buf;
}

std::string timestamp(Rng& rng, std::size_t style) {
  const std::size_t mo = 1 + rng.below(12), d = 1 + rng.below(28), h = rng.below(24),
                    mi = rng.below(60), s = rng.below(60);
  switch (style % 4) {
    case 0: return "2023-" + two(mo) + "-" + two(d) + "T" + two(h) + ":" + two(mi) + ":" + two(s);
    case 1: return "23" + two(mo) + two(d) + "-" + two(h) + two(mi) + two(s);
    case 2: return two(h) + ":" + two(mi) + ":" + two(s) + "." + std::to_string(100 + rng.below(900));
    default: return std::to_string(1600000000 + rng.below(90000000));
  }
}

std::string fill(std::string_view slot, Rng& rng, std::size_t style) {
  if (slot == "<N>") return std::to_string(rng.below(100000));
  if (slot == "<HEX>") {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s = "0x";
    for (int i = 0; i < 8; ++i) s += kHex[rng.below(16)];
    return s;
  }
  if (slot == "<IP>") {
    return "10." + std::to_string(rng.below(256)) + "." + std::to_string(rng.below(256)) + "." +
           std::to_string(1 + rng.below(254)) + ":" + std::to_string(1024 + rng.below(60000));
  }
  if (slot == "<PATH>") {
    return "/data/d" + std::to_string(rng.below(64)) + "/f" + std::to_string(rng.below(10000)) + ".dat";
  }
  if (slot == "<ID>") return "id" + std::to_string(100000 + rng.below(900000));
  return timestamp(rng, style);
}

// Replaces every slot occurrence in `pattern`.
std::string instantiate(std::string_view pattern, Rng& rng, std::size_t style) {
  std::string out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    bool matched = false;
    if (pattern[i] == '<') {
      for (auto slot : kSlots) {
        if (pattern.substr(i, slot.size()) == slot) {
          out += fill(slot, rng, style);
          i += slot.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) out += pattern[i++];
  }
  return out;
}

bool has_slot(std::string_view token) {
  return std::any_of(kSlots.begin(), kSlots.end(),
                     [&](std::string_view s) { return token.find(s) != std::string_view::npos; });
}

std::size_t style_of(std::string_view name) {
  std::size_t h = 0;
  for (char c : name) h = h * 31 + static_cast<unsigned char>(c);
  return h;
}

json pattern_json(const SyntheticPattern& p) {
  json j = {{"text", p.text}};
  if (p.golden_signal) j["golden_signal"] = *p.golden_signal;
  if (p.fault_category) j["fault_category"] = *p.fault_category;
  return j;
}

}  // namespace

json SyntheticSpec::to_json() const {
  json fs = json::array();
  for (const auto& f : formats) {
    json ps = json::array();
    for (const auto& p : f.patterns) ps.push_back(pattern_json(p));
    fs.push_back({{"name", f.name}, {"lines", f.lines}, {"held_out", f.held_out}, {"patterns", ps}});
  }
  return {{"format", "logrep.synthetic_spec"},
          {"format_version", kSyntheticSpecVersion},
          {"formats", std::move(fs)}};
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
  if (j.contains("format_version") && j["format_version"] != kSyntheticSpecVersion) {
    throw FormatError("synthetic spec format_version mismatch");
  }
  SyntheticSpec spec;
  try {
    for (const auto& fj : j.at("formats")) {
      SyntheticFormat f;
      f.name = fj.at("name").get<std::string>();
      f.lines = fj.at("lines").get<std::size_t>();
      f.held_out = fj.value("held_out", false);
      for (const auto& pj : fj.at("patterns")) {
        SyntheticPattern p;
        if (pj.is_string()) {
          p.text = pj.get<std::string>();
        } else {
          p.text = pj.at("text").get<std::string>();
          if (pj.contains("golden_signal")) p.golden_signal = pj["golden_signal"].get<std::string>();
          if (pj.contains("fault_category")) p.fault_category = pj["fault_category"].get<std::string>();
        }
        f.patterns.push_back(std::move(p));
      }
      spec.formats.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed synthetic spec: ") + e.what());
  }
  return spec;
}

std::vector<std::string> SyntheticCorpus::truth_keys(std::size_t source) const {
  std::vector<std::string> keys;
  for (std::size_t p : pattern_of_line.at(source)) {
    keys.push_back(sources[source].name + "#" + std::to_string(p));
  }
  return keys;
}

const SyntheticPattern& SyntheticCorpus::pattern(std::size_t source, std::size_t line) const {
  return spec.formats.at(source).patterns.at(pattern_of_line.at(source).at(line));
}

SyntheticCorpus gen_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.formats.empty()) throw InvalidArgument("synthetic spec has no formats");
  std::set<std::string> names;
  for (const auto& f : spec.formats) {
    if (f.lines == 0) throw InvalidArgument("format '" + f.name + "' has a zero line count");
    if (f.patterns.empty()) throw InvalidArgument("format '" + f.name + "' has no patterns");
    if (!names.insert(f.name).second) throw InvalidArgument("duplicate format '" + f.name + "'");
    for (const auto& p : f.patterns) {
      if (text::is_blank(p.text)) throw InvalidArgument("format '" + f.name + "' has a blank pattern");
      if (p.text.find('\n') != std::string::npos) {
        throw InvalidArgument("patterns must be single lines");
      }
      if (p.golden_signal && !class_index(Task::kGoldenSignal, *p.golden_signal)) {
        throw InvalidArgument("unknown golden signal '" + *p.golden_signal + "'");
      }
      if (p.fault_category && !class_index(Task::kFaultCategory, *p.fault_category)) {
        throw InvalidArgument("unknown fault category '" + *p.fault_category + "'");
      }
    }
  }
  SyntheticCorpus corpus;
  corpus.spec = spec;
  for (std::size_t fi = 0; fi < spec.formats.size(); ++fi) {
    const auto& f = spec.formats[fi];
    Rng rng(derive_seed(seed, fi));
    std::vector<std::size_t> order(f.lines);
    for (std::size_t i = 0; i < f.lines; ++i) order[i] = i % f.patterns.size();
    rng.shuffle(std::span<std::size_t>(order));
    LogSource src;
    src.name = f.name;
    src.format_label = f.name;
    src.held_out = f.held_out;
    const std::size_t style = style_of(f.name);
    for (std::size_t i = 0; i < f.lines; ++i) {
      src.lines.push_back(LogLine{f.name, i, instantiate(f.patterns[order[i]].text, rng, style)});
    }
    corpus.sources.push_back(std::move(src));
    corpus.pattern_of_line.push_back(std::move(order));
  }
  return corpus;
}

std::vector<TemplateToken> expected_template(std::string_view pattern) {
  std::vector<TemplateToken> out;
  for (const auto& token : text::split_whitespace(pattern)) {
    if (has_slot(token)) {
      out.emplace_back(std::nullopt);
    } else {
      for (auto& piece : mining_tokens(token)) out.emplace_back(std::move(piece));
    }
  }
  return out;
}

SyntheticSpec default_benchmark_spec(std::size_t patterns, std::size_t lines_per_pattern,
                                     std::uint64_t seed) {
  if (patterns == 0 || lines_per_pattern == 0) throw InvalidArgument("benchmark needs patterns and lines");
  if (patterns > kVerbs.size() * kNouns.size()) throw InvalidArgument("too many patterns per format");
  const auto golden = task_classes(Task::kGoldenSignal);
  const auto fault = task_classes(Task::kFaultCategory);
  SyntheticSpec spec;
  for (std::size_t fi = 0; fi < kStyles.size(); ++fi) {
    const auto& style = kStyles[fi];
    Rng rng(derive_seed(seed, 1000 + fi));
    SyntheticFormat f;
    f.name = style.name;
    f.held_out = style.held_out;
    f.lines = patterns * lines_per_pattern;

    std::vector<std::size_t> events(kVerbs.size() * kNouns.size());
    for (std::size_t i = 0; i < events.size(); ++i) events[i] = i;
    rng.shuffle(std::span<std::size_t>(events));
    std::vector<std::size_t> gs(patterns), fc(patterns);
    for (std::size_t p = 0; p < patterns; ++p) {
      gs[p] = p % golden.size();
      fc[p] = p % fault.size();
    }
    rng.shuffle(std::span<std::size_t>(gs));
    rng.shuffle(std::span<std::size_t>(fc));

    for (std::size_t p = 0; p < patterns; ++p) {
      SyntheticPattern pat;
      pat.golden_signal = golden[gs[p]];
      pat.fault_category = fault[fc[p]];
      const auto& gw = golden_words().at(*pat.golden_signal);
      const auto& fw = fault_words().at(*pat.fault_category);
      std::vector<std::string> body{std::string(gw[rng.below(gw.size())]),
                                    std::string(fw[rng.below(fw.size())]),
                                    std::string(style.words[rng.below(style.words.size())]),
                                    std::string(kFillers[rng.below(kFillers.size())])};
      if (rng.uniform() < 0.5) body.emplace_back(style.words[rng.below(style.words.size())]);
      const std::size_t slots = 1 + rng.below(3);
      for (std::size_t s = 0; s < slots; ++s) body.emplace_back(kValueSlots[rng.below(kValueSlots.size())]);
      rng.shuffle(std::span<std::string>(body));
      const std::size_t e = events[p];
      std::string text = "<TS> " + std::string(kVerbs[e / kNouns.size()]) + "_" +
                         std::string(kNouns[e % kNouns.size()]) + " " + std::string(style.header);
      for (const auto& b : body) text += " " + b;
      pat.text = std::move(text);
      f.patterns.push_back(std::move(pat));
    }
    spec.formats.push_back(std::move(f));
  }
  return spec;
}

std::string serialize_ground_truth(const SyntheticCorpus& corpus) {
  std::string out = json({{"format", "logrep.ground_truth"},
                          {"format_version", kGroundTruthVersion},
                          {"sources", corpus.sources.size()}})
                        .dump() +
                    "\n";
  for (std::size_t s = 0; s < corpus.sources.size(); ++s) {
    for (std::size_t i = 0; i < corpus.sources[s].lines.size(); ++i) {
      const auto& pat = corpus.pattern(s, i);
      std::vector<std::string> tmpl;
      for (const auto& t : expected_template(pat.text)) tmpl.push_back(t ? *t : std::string(kWildcard));
      json row = {{"source", corpus.sources[s].name},
                  {"index", i},
                  {"pattern", corpus.pattern_of_line[s][i]},
                  {"template", text::join(tmpl, " ")}};
      if (pat.golden_signal) row["golden_signal"] = *pat.golden_signal;
      if (pat.fault_category) row["fault_category"] = *pat.fault_category;
      out += row.dump() + "\n";
    }
  }
  return out;
}

void save_synthetic(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
  save_corpus(dir, corpus.sources);
  io::write_file(dir / "ground_truth.jsonl", serialize_ground_truth(corpus));
  io::write_file(dir / "synthetic_spec.json", corpus.spec.to_json().dump(2) + "\n");
}

std::vector<GroundTruthRow> load_ground_truth(const std::filesystem::path& path) {
  const std::string contents = io::read_file(path);
  std::vector<GroundTruthRow> rows;
  std::size_t start = 0;
  bool header = true;
  while (start < contents.size()) {
    std::size_t end = contents.find('\n', start);
    if (end == std::string::npos) end = contents.size();
    const std::string_view line(contents.data() + start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (header) {
        if (j.value("format", "") != "logrep.ground_truth" ||
            j.value("format_version", -1) != kGroundTruthVersion) {
          throw FormatError("ground truth file lacks a version " + std::to_string(kGroundTruthVersion) + " header");
        }
        header = false;
        continue;
      }
      GroundTruthRow r;
      r.source = j.at("source").get<std::string>();
      r.index = j.at("index").get<std::size_t>();
      r.pattern = j.at("pattern").get<std::size_t>();
      if (j.contains("golden_signal")) r.golden_signal = j["golden_signal"].get<std::string>();
      if (j.contains("fault_category")) r.fault_category = j["fault_category"].get<std::string>();
      rows.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed ground truth: ") + e.what());
    }
  }
  if (header) throw FormatError("ground truth file is empty");
  return rows;
}

std::map<TemplateId, std::string> vote_template_labels(std::span<const Template> templates,
                                                       std::span<const GroundTruthRow> truth,
                                                       std::span<const LogSource> sources, Task task) {
  std::map<std::pair<std::string, std::size_t>, const GroundTruthRow*> by_line;
  for (const auto& r : truth) by_line[{r.source, r.index}] = &r;
  std::map<std::string, std::optional<std::string>> format_of;
  for (const auto& s : sources) format_of[s.name] = s.format_label;

  std::map<TemplateId, std::vector<std::string>> votes;
  for (const auto& t : templates) {
    std::vector<std::string> v;
    for (const auto& m : t.members) {
      std::optional<std::string> label;
      if (task == Task::kFormatDetection) {
        const auto it = format_of.find(m.source);
        if (it != format_of.end()) label = it->second;
      } else {
        const auto it = by_line.find({m.source, m.index});
        if (it != by_line.end()) {
          label = task == Task::kGoldenSignal ? it->second->golden_signal : it->second->fault_category;
        }
      }
      if (label) v.push_back(*label);
    }
    if (!v.empty()) votes.emplace(t.id, std::move(v));
  }
  std::map<TemplateId, std::string> out;
  for (const auto& [id, label] : resolve_conflicts(votes)) {
    if (label) out.emplace(id, *label);
  }
  return out;
}

}  // namespace logrep

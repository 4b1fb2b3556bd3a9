#include "logrep/report.hpp"

#include <algorithm>
#include <cstdio>

#include "logrep/error.hpp"

namespace logrep {
namespace {

using nlohmann::json;

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string format_percent(double fraction) { return fixed(100.0 * fraction, 2); }

const CellResult* ExperimentBundle::find(Task task, std::size_t k, std::string_view model) const {
  for (const auto& c : cells) {
    if (c.task == task && c.k == k && c.model == model) return &c;
  }
  return nullptr;
}

std::vector<std::pair<std::string, std::string>> ExperimentBundle::model_rows(Task task) const {
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& c : cells) {
    if (c.task != task) continue;
    const std::pair<std::string, std::string> row{c.model_type, c.model};
    if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
  }
  return rows;
}

std::string render_table(const std::vector<std::vector<std::string>>& rows, std::size_t header_rows,
                         std::size_t label_columns) {
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  std::vector<std::size_t> width(cols, 0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) width[j] = std::max(width[j], r[j].size());
  }
  std::string rule = "+";
  for (std::size_t w : width) rule += std::string(w + 2, '-') + "+";
  rule += "\n";
  std::string out = rule;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += "|";
    for (std::size_t j = 0; j < cols; ++j) {
      const std::string cell = j < rows[i].size() ? rows[i][j] : "";
      out += " ";
      if (j < label_columns) {
        out += cell + std::string(width[j] - cell.size(), ' ');
      } else {
        out += std::string(width[j] - cell.size(), ' ') + cell;
      }
      out += " |";
    }
    out += "\n";
    if (i + 1 == header_rows) out += rule;
  }
  out += rule;
  return out;
}

std::string render_task_table(const ExperimentBundle& bundle, Task task) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> groups{"Model Type", "Model"};
  std::vector<std::string> metrics{"", ""};
  for (std::size_t k : bundle.shots) {
    groups.push_back(std::to_string(k) + "-shot");
    groups.push_back("");
    groups.push_back("");
    metrics.insert(metrics.end(), {"P", "R", "F1"});
  }
  rows.push_back(std::move(groups));
  rows.push_back(std::move(metrics));
  std::string last_type;
  for (const auto& [type, model] : bundle.model_rows(task)) {
    std::vector<std::string> row{type == last_type ? "" : type, model};
    last_type = type;
    for (std::size_t k : bundle.shots) {
      const CellResult* c = bundle.find(task, k, model);
      if (c && c->ok()) {
        row.push_back(format_percent(c->eval->scores.precision));
        row.push_back(format_percent(c->eval->scores.recall));
        row.push_back(format_percent(c->eval->scores.f1));
      } else {
        const std::string mark = c ? "err" : "-";
        row.insert(row.end(), {mark, mark, mark});
      }
    }
    rows.push_back(std::move(row));
  }
  return std::string(task_title(task)) + "\n" + render_table(rows, 2);
}

std::string render_confusion(const EvalReport& report) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"True \\ Predicted"};
  for (const auto& c : report.classes) header.push_back(c);
  rows.push_back(std::move(header));
  const auto cells = row_normalize_percent(report.confusion);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::vector<std::string> row{report.classes[i]};
    row.insert(row.end(), cells[i].begin(), cells[i].end());
    rows.push_back(std::move(row));
  }
  return render_table(rows, 1, 1);
}

std::string render_csv(const ExperimentBundle& bundle) {
  std::string out =
      "task,k,model_type,model,precision,recall,f1,majority_f1,train_examples,test_examples,error\n";
  for (const auto& c : bundle.cells) {
    out += std::string(task_code(c.task)) + "," + std::to_string(c.k) + "," +
           csv_field(c.model_type) + "," + csv_field(c.model) + ",";
    if (c.ok()) {
      out += fixed(c.eval->scores.precision, 6) + "," + fixed(c.eval->scores.recall, 6) + "," +
             fixed(c.eval->scores.f1, 6);
    } else {
      out += ",,";
    }
    out += "," + fixed(c.majority_f1, 6) + "," + std::to_string(c.train_examples) + "," +
           std::to_string(c.test_examples) + "," + csv_field(c.error) + "\n";
  }
  return out;
}

json bundle_to_json(const ExperimentBundle& bundle) {
  json cells = json::array();
  for (const auto& c : bundle.cells) {
    json j = {{"task", task_code(c.task)},
              {"k", c.k},
              {"model_type", c.model_type},
              {"model", c.model},
              {"majority_f1", c.majority_f1},
              {"train_examples", c.train_examples},
              {"test_examples", c.test_examples},
              {"deficient_classes", c.deficient_classes},
              {"error", c.error}};
    j["eval"] = c.eval ? c.eval->to_json() : json(nullptr);
    cells.push_back(std::move(j));
  }
  return {{"format", "logrep.experiment"},
          {"format_version", kReportFormatVersion},
          {"shots", bundle.shots},
          {"settings", bundle.settings},
          {"cells", std::move(cells)}};
}

ExperimentBundle bundle_from_json(const json& j) {
  if (j.value("format", "") != "logrep.experiment" ||
      j.value("format_version", -1) != kReportFormatVersion) {
    throw FormatError("not an experiment bundle of format_version " +
                      std::to_string(kReportFormatVersion));
  }
  ExperimentBundle b;
  try {
    b.shots = j.at("shots").get<std::vector<std::size_t>>();
    b.settings = j.value("settings", json::object());
    for (const auto& cj : j.at("cells")) {
      CellResult c;
      c.task = parse_task(cj.at("task").get<std::string>());
      c.k = cj.at("k").get<std::size_t>();
      c.model_type = cj.at("model_type").get<std::string>();
      c.model = cj.at("model").get<std::string>();
      c.majority_f1 = cj.value("majority_f1", 0.0);
      c.train_examples = cj.value("train_examples", std::size_t{0});
      c.test_examples = cj.value("test_examples", std::size_t{0});
      c.deficient_classes = cj.value("deficient_classes", std::vector<std::string>{});
      c.error = cj.value("error", "");
      if (cj.contains("eval") && !cj["eval"].is_null()) {
        const json& e = cj["eval"];
        EvalReport r;
        r.task = e.value("task", "");
        r.model = e.value("model", "");
        r.examples = e.at("examples").get<std::size_t>();
        r.classes = e.at("classes").get<std::vector<std::string>>();
        r.confusion = e.at("confusion").get<ConfusionMatrix>();
        r.scores = weighted_prf(r.confusion, r.classes);
        r.kappa = cohen_kappa(r.confusion);
        c.eval = std::move(r);
      }
      b.cells.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed experiment bundle: ") + e.what());
  }
  return b;
}

}  // namespace logrep

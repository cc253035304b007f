// SPDX-License-Identifier: Apache-2.0
#include "devmoe/eval/report.hpp"

#include <cmath>
#include <cstdio>
#include <algorithm>
#include <fstream>
#include "json.hpp"
#include <sstream>
#include <stdexcept>

namespace devmoe::eval {

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Same digits as the CSV files.
double round2(double v) { return std::stod(fixed2(v)); }

}  // namespace

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

std::string matrix_csv(const ScoreMatrix& m) {
  std::string s = "row_task,col_task,score\n";
  for (std::size_t t = 0; t < m.size(); ++t)
    for (std::size_t i = 0; i <= t; ++i)
      if (m.has(t, i)) s += std::to_string(t + 1) + "," + std::to_string(i + 1) + "," + fixed2(m.at(t, i)) + "\n";
  return s;
}

ScoreMatrix parse_matrix_csv(const std::string& text, Metric metric, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line != "row_task,col_task,score") {
    throw std::runtime_error(source + ":1: expected header row_task,col_task,score");
  }
  struct Cell {
    std::size_t t, i;
    double v;
  };
  std::vector<Cell> cells;
  std::size_t tasks = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Cell c{};
    char tail = 0;
    if (std::sscanf(line.c_str(), "%zu,%zu,%lf%c", &c.t, &c.i, &c.v, &tail) != 3 || c.t == 0 || c.i == 0 || c.i > c.t) {
      throw std::runtime_error(source + ":" + std::to_string(lineno) + ": malformed cell '" + line + "'");
    }
    tasks = std::max(tasks, c.t);
    cells.push_back(c);
  }
  ScoreMatrix m(tasks, metric);
  for (const Cell& c : cells) m.set(c.t - 1, c.i - 1, c.v);
  return m;
}

std::string summary_json(const ReportInput& input) {
  nlohmann::ordered_json j;
  j["variant"] = input.variant;
  j["seed"] = input.seed;
  const auto rows = [](const ScoreMatrix& m, bool forgetting) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < m.complete_rows(); ++t) {
      if (forgetting) {
        arr.push_back(t == 0 ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(round2(average_forgetting(m, t))));
      } else {
        arr.push_back(round2(avg_row(m, t)));
      }
    }
    return arr;
  };
  j["avg"] = rows(input.acc, false);
  j["af"] = rows(input.acc, true);
  j["auc_avg"] = rows(input.auc, false);
  j["auc_af"] = rows(input.auc, true);
  j["params"] = {{"total", input.params_total}, {"trainable", input.params_trainable}};
  j["config_digest"] = input.config_digest;
  return j.dump(2) + "\n";
}

void emit_report(const ReportInput& input, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  write_text_file(dir / "acc_matrix.csv", matrix_csv(input.acc));
  write_text_file(dir / "auc_matrix.csv", matrix_csv(input.auc));

  std::string metrics = "row_task,avg_acc,af_acc,avg_auc,af_auc\n";
  const std::size_t rows = std::min(input.acc.complete_rows(), input.auc.complete_rows());
  for (std::size_t t = 0; t < rows; ++t) {
    metrics += std::to_string(t + 1) + "," + fixed2(avg_row(input.acc, t)) + "," +
               (t == 0 ? "" : fixed2(average_forgetting(input.acc, t))) + "," + fixed2(avg_row(input.auc, t)) + "," +
               (t == 0 ? "" : fixed2(average_forgetting(input.auc, t))) + "\n";
  }
  write_text_file(dir / "metrics.csv", metrics);

  std::string log = "task,epoch,step,l_cls,l_ort,l_llb,lambda1,lambda2,total\n";
  for (const StepRecord& r : input.steps) {
    log += std::to_string(r.task) + "," + std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + general(r.cls) +
           "," + general(r.ort) + "," + general(r.llb) + "," + general(r.lambda1) + "," + general(r.lambda2) + "," +
           general(r.total) + "\n";
  }
  write_text_file(dir / "loss_log.csv", log);
  write_text_file(dir / "summary.json", summary_json(input));
}

}  // namespace devmoe::eval

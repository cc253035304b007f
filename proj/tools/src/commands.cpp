// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "devmoe/config/experiment_config.hpp"
#include "devmoe/continual/runner.hpp"
#include "devmoe/eval/embedding.hpp"
#include "devmoe/eval/report.hpp"
#include "devmoe/selfcheck/gradcheck.hpp"
#include "devmoe/selfcheck/propcheck.hpp"

namespace devmoe::cli {

namespace fs = std::filesystem;
namespace cl = continual;

namespace {

struct Loaded {
  config::ExperimentConfig config;
  std::string digest;
};

Loaded load(const CommonOptions& o) {
  Loaded l;
  l.config = o.config ? config::load_config(*o.config, o.overrides)
                      : config::parse_config("", "<defaults>", o.overrides);
  if (!o.seeds.empty()) l.config.seeds = o.seeds;
  l.digest = config::config_digest(l.config);
  return l;
}

void write_resolved(const config::ExperimentConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  eval::write_text_file(dir / "resolved_config.yaml", config::to_yaml(c) + "\n");
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Avg and AF of one score-matrix row; AF is NaN on row 0.
struct RowStats {
  double avg_acc = 0.0;
  double af_acc = NAN;
  double avg_auc = 0.0;
  double af_auc = NAN;
};

RowStats row_stats(const eval::ScoreMatrix& acc, const eval::ScoreMatrix& auc, std::size_t t) {
  RowStats s;
  s.avg_acc = eval::avg_row(acc, t);
  s.avg_auc = eval::avg_row(auc, t);
  if (t > 0) {
    s.af_acc = eval::average_forgetting(acc, t);
    s.af_auc = eval::average_forgetting(auc, t);
  }
  return s;
}

RowStats mean_stats(const std::vector<RowStats>& v) {
  RowStats m{0.0, 0.0, 0.0, 0.0};
  for (const RowStats& s : v) {
    m.avg_acc += s.avg_acc / static_cast<double>(v.size());
    m.af_acc += s.af_acc / static_cast<double>(v.size());
    m.avg_auc += s.avg_auc / static_cast<double>(v.size());
    m.af_auc += s.af_auc / static_cast<double>(v.size());
  }
  return m;
}

std::string stats_csv(const RowStats& s) {
  return fmt(s.avg_acc) + "," + fmt(s.af_acc) + "," + fmt(s.avg_auc) + "," + fmt(s.af_auc);
}

void write_run_extras(const cl::RunConfig& rc, const cl::RunResult& r, const fs::path& dir) {
  std::string params = "task,total,trainable,growth_per_task\n";
  for (const cl::ParamRecord& p : r.params) {
    params += std::to_string(p.task) + "," + std::to_string(p.total) + "," + std::to_string(p.trainable) + "," +
              std::to_string(p.growth_per_task) + "\n";
  }
  eval::write_text_file(dir / "params.csv", params);

  std::string overlaps = "layer,task_i,task_j,initial,final\n";
  char buf[160];
  for (const cl::OverlapRecord& o : r.overlaps) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.9g,%.9g\n", o.layer, o.i, o.j, o.initial, o.final);
    overlaps += buf;
  }
  eval::write_text_file(dir / "overlaps.csv", overlaps);

  const cl::TaskStream stream(rc.stream);
  std::vector<cl::Dataset> tests;
  for (std::size_t t = 1; t <= rc.stream.num_tasks; ++t) tests.push_back(stream.generate_task(t).test);
  std::vector<eval::EmbeddingSource> sources;
  for (std::size_t t = 0; t < tests.size(); ++t) sources.push_back({t + 1, &tests[t].tokens, tests[t].labels});
  eval::write_embeddings_csv(dir / "embeddings.csv", eval::export_embeddings(*r.model, sources));
}

struct Scores {
  eval::ScoreMatrix acc;
  eval::ScoreMatrix auc;
};

/// One variant and seed into `dir`. Throws on a freeze violation.
Scores run_one(const Loaded& l, cl::Variant variant, std::uint64_t seed, const fs::path& dir) {
  cl::RunConfig rc = cl::with_seed(l.config.run, seed);
  rc.variant = variant;
  const std::string tag = cl::to_string(variant) + " seed " + std::to_string(seed);
  cl::RunOptions opt;
  opt.checkpoint_dir = dir / "checkpoints";
  opt.config_digest = l.digest;
  opt.progress = [&](const std::string& line) { std::cout << "[" << tag << "] " << line << std::endl; };
  const cl::RunResult r = cl::run_sequence(rc, opt);
  if (!r.freeze_violations.empty() || !r.backbone_unchanged) {
    std::string what = tag + ": frozen parameters changed";
    for (const std::string& v : r.freeze_violations) what += "; " + v;
    throw std::runtime_error(what);
  }
  const std::vector<eval::StepRecord> steps = r.all_steps();
  const eval::ReportInput in{cl::to_string(variant), seed, r.acc, r.auc, steps,
                             r.params.back().total, r.params.back().trainable, l.digest};
  eval::emit_report(in, dir);
  write_run_extras(rc, r, dir);
  return {r.acc, r.auc};
}

void print_stats(const std::string& label, const RowStats& s) {
  std::cout << label << ": final-row Avg acc " << fmt(s.avg_acc) << ", AF acc " << fmt(s.af_acc) << ", Avg AUC "
            << fmt(s.avg_auc) << ", AF AUC " << fmt(s.af_auc) << std::endl;
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

constexpr const char* kStatsHeader = "avg_acc,af_acc,avg_auc,af_auc";

}  // namespace

int cmd_run(const CommonOptions& o) {
  const Loaded l = load(o);
  write_resolved(l.config, o.out);
  std::string csv = std::string("seed,") + kStatsHeader + "\n";
  std::vector<RowStats> all;
  for (std::uint64_t seed : l.config.seeds) {
    const Scores sc = run_one(l, l.config.run.variant, seed, o.out / seed_dir(seed));
    all.push_back(row_stats(sc.acc, sc.auc, sc.acc.size() - 1));
    print_stats("seed " + std::to_string(seed), all.back());
    csv += std::to_string(seed) + "," + stats_csv(all.back()) + "\n";
  }
  const RowStats m = mean_stats(all);
  print_stats("mean", m);
  csv += "mean," + stats_csv(m) + "\n";
  eval::write_text_file(o.out / "summary.csv", csv);
  std::cout << "outputs in " << o.out.string() << std::endl;
  return kExitOk;
}

int cmd_ablate(const CommonOptions& o) {
  const Loaded l = load(o);
  write_resolved(l.config, o.out);
  std::string csv = std::string("variant,row_task,") + kStatsHeader + "\n";
  for (cl::Variant v : cl::all_variants()) {
    const std::string name = cl::to_string(v);
    std::vector<std::vector<RowStats>> rows(l.config.run.stream.num_tasks);
    for (std::uint64_t seed : l.config.seeds) {
      const Scores sc = run_one(l, v, seed, o.out / name / seed_dir(seed));
      for (std::size_t t = 0; t < rows.size(); ++t) rows[t].push_back(row_stats(sc.acc, sc.auc, t));
    }
    for (std::size_t t = 0; t < rows.size(); ++t) {
      const RowStats m = mean_stats(rows[t]);
      csv += name + "," + std::to_string(t + 1) + "," + stats_csv(m) + "\n";
      if (t + 1 == rows.size()) print_stats(name, m);
    }
  }
  eval::write_text_file(o.out / "ablation.csv", csv);
  std::cout << "outputs in " << o.out.string() << std::endl;
  return kExitOk;
}

int cmd_sweep_rank(const CommonOptions& o) {
  const Loaded base = load(o);
  write_resolved(base.config, o.out);
  std::string csv = std::string("rank,status,") + kStatsHeader + "\n";
  for (std::size_t rank : base.config.sweep_ranks) {
    Loaded l = base;
    l.config.run.model.rank = rank;
    try {
      l.config.run.model.validate();
    } catch (const std::invalid_argument& e) {
      std::cout << "rank " << rank << " skipped: " << e.what() << std::endl;
      csv += std::to_string(rank) + ",skipped,,,,\n";
      continue;
    }
    l.digest = config::config_digest(l.config);
    const fs::path dir = o.out / ("rank_" + std::to_string(rank));
    write_resolved(l.config, dir);
    std::vector<RowStats> all;
    for (std::uint64_t seed : l.config.seeds) {
      const Scores sc = run_one(l, l.config.run.variant, seed, dir / seed_dir(seed));
      all.push_back(row_stats(sc.acc, sc.auc, sc.acc.size() - 1));
    }
    const RowStats m = mean_stats(all);
    print_stats("rank " + std::to_string(rank), m);
    csv += std::to_string(rank) + ",ok," + stats_csv(m) + "\n";
  }
  eval::write_text_file(o.out / "sweep.csv", csv);
  std::cout << "outputs in " << o.out.string() << std::endl;
  return kExitOk;
}

int cmd_report(const fs::path& dir) {
  std::vector<fs::path> found;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "acc_matrix.csv") found.push_back(entry.path().parent_path());
  }
  std::sort(found.begin(), found.end());
  if (found.empty()) {
    std::cerr << "report: no acc_matrix.csv below " << dir.string() << "\n";
    return kExitFailure;
  }
  std::string csv = std::string("run,tasks,") + kStatsHeader + "\n";
  for (const fs::path& run : found) {
    const auto read = [&](const char* f, eval::Metric m) {
      std::ifstream in(run / f);
      if (!in) throw std::runtime_error("cannot read " + (run / f).string());
      std::stringstream ss;
      ss << in.rdbuf();
      return eval::parse_matrix_csv(ss.str(), m, (run / f).string());
    };
    const eval::ScoreMatrix acc = read("acc_matrix.csv", eval::Metric::Acc);
    const eval::ScoreMatrix auc = read("auc_matrix.csv", eval::Metric::Auc);
    const std::size_t rows = std::min(acc.complete_rows(), auc.complete_rows());
    const std::string rel = fs::relative(run, dir).generic_string();
    if (rows == 0) {
      std::cout << rel << ": no complete row" << std::endl;
      continue;
    }
    const RowStats s = row_stats(acc, auc, rows - 1);
    print_stats(rel, s);
    csv += rel + "," + std::to_string(rows) + "," + stats_csv(s) + "\n";
  }
  eval::write_text_file(dir / "report.csv", csv);
  return kExitOk;
}

namespace {

int print_checks(const std::vector<selfcheck::CheckResult>& results) {
  std::vector<std::string> failed;
  for (const selfcheck::CheckResult& r : results) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-4s %-28s %.3e (tol %.1e)", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.value,
                  r.tolerance);
    std::cout << buf << (r.detail.empty() ? "" : "  " + r.detail) << std::endl;
    if (!r.passed) failed.push_back(r.name);
  }
  if (failed.empty()) return kExitOk;
  std::cout << "failing checks:";
  for (const std::string& f : failed) std::cout << " " << f;
  std::cout << std::endl;
  return kExitFailure;
}

}  // namespace

int cmd_gradcheck(bool inject_fault) {
  selfcheck::GradcheckOptions opt;
  opt.inject_fault = inject_fault;
  return print_checks(selfcheck::run_gradcheck(opt));
}

int cmd_propcheck(std::uint64_t seed, std::size_t cases) { return print_checks(selfcheck::run_propcheck(seed, cases)); }

}  // namespace devmoe::cli

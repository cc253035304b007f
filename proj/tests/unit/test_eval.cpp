// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "devmoe/eval/embedding.hpp"
#include "devmoe/eval/metrics.hpp"
#include "devmoe/eval/report.hpp"
#include "devmoe/linalg/ops.hpp"
#include "json.hpp"
#include "oracles.hpp"

namespace ev = devmoe::eval;
using devmoe::linalg::Matrix;

namespace {

// DevFD rows of the FF++ -> DFDC-P -> DFD -> CDF2 protocol, accuracy in percent.
ev::ScoreMatrix published_rows() {
  ev::ScoreMatrix m(4, ev::Metric::Acc);
  const std::vector<std::vector<double>> rows{
      {98.41}, {97.06, 89.90}, {92.44, 89.07, 97.91}, {90.71, 90.31, 93.12, 85.15}};
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t i = 0; i < rows[t].size(); ++i) m.set(t, i, rows[t][i]);
  return m;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ev::ScoreMatrix small_matrix() {
  ev::ScoreMatrix m(2, ev::Metric::Acc);
  m.set(0, 0, 90.0);
  m.set(1, 0, 80.0);
  m.set(1, 1, 95.126);
  return m;
}

}  // namespace

TEST(Metrics, PublishedForgettingCells) {
  const ev::ScoreMatrix m = published_rows();
  EXPECT_NEAR(ev::average_forgetting(m, 1), 1.35, 0.005);
  EXPECT_NEAR(ev::average_forgetting(m, 2), 3.40, 0.005);
  EXPECT_NEAR(ev::average_forgetting(m, 3), 4.03, 0.005);
}

TEST(Metrics, PublishedAverageCells) {
  const ev::ScoreMatrix m = published_rows();
  EXPECT_NEAR(ev::avg_row(m, 3), 89.82, 0.005);
  EXPECT_NEAR(ev::avg_row(m, 1), 93.48, 0.005);
  EXPECT_NEAR(ev::avg_row(m, 2), 93.14, 0.005);
  EXPECT_NEAR(ev::avg_row(m, 0), 98.41, 1e-12);
}

TEST(Metrics, SpanOverloadsAgree) {
  const std::vector<double> diag{98.41, 89.90, 97.91};
  const std::vector<double> row{90.71, 90.31, 93.12, 85.15};
  EXPECT_DOUBLE_EQ(ev::average_forgetting(diag, row), ev::average_forgetting(published_rows(), 3));
  EXPECT_DOUBLE_EQ(ev::avg_row(row), ev::avg_row(published_rows(), 3));
}

TEST(Metrics, ForgettingUndefinedOnFirstRow) {
  EXPECT_THROW((void)ev::average_forgetting(published_rows(), 0), std::invalid_argument);
}

TEST(Metrics, NegativeForgettingAllowed) {
  ev::ScoreMatrix m(2, ev::Metric::Acc);
  m.set(0, 0, 70.0);
  m.set(1, 0, 80.0);
  m.set(1, 1, 90.0);
  EXPECT_DOUBLE_EQ(ev::average_forgetting(m, 1), -10.0);
}

TEST(ScoreMatrix, LowerTriangularOnly) {
  ev::ScoreMatrix m(3, ev::Metric::Auc);
  EXPECT_THROW(m.set(0, 1, 50.0), std::out_of_range);
  EXPECT_THROW(m.set(3, 0, 50.0), std::out_of_range);
  EXPECT_THROW(m.set(1, 0, 101.0), std::invalid_argument);
  EXPECT_FALSE(m.has(1, 0));
  EXPECT_THROW((void)m.at(1, 0), std::logic_error);
  m.set(0, 0, 50.0);
  EXPECT_EQ(m.complete_rows(), 1u);
  m.set(1, 1, 50.0);
  EXPECT_EQ(m.complete_rows(), 1u);
  EXPECT_EQ(m.filled_cells(), 2u);
}

TEST(Accuracy, ThresholdAndCount) {
  // Exactly 0.5 counts as real.
  const std::vector<double> p{0.1, 0.6, 0.5, 0.49};
  const std::vector<int> y{0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(ev::accuracy(p, y), 75.0);
  EXPECT_DOUBLE_EQ(ev::accuracy(p, y, 0.05), 50.0);
  EXPECT_THROW((void)ev::accuracy(p, std::vector<int>{0}), std::invalid_argument);
}

TEST(Auc, HandCases) {
  EXPECT_DOUBLE_EQ(ev::auc(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 1}), 100.0);
  EXPECT_DOUBLE_EQ(ev::auc(std::vector<double>{0.9, 0.1}, std::vector<int>{0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(ev::auc(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}), 50.0);
  EXPECT_DOUBLE_EQ(ev::auc(std::vector<double>{0.2, 0.4, 0.4, 0.8}, std::vector<int>{0, 0, 1, 1}), 87.5);
}

TEST(Auc, SingleClassRejected) {
  EXPECT_THROW((void)ev::auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), std::invalid_argument);
  EXPECT_THROW((void)ev::auc(std::vector<double>{0.1}, std::vector<int>{0, 1}), std::invalid_argument);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  devmoe::linalg::Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 60;
    std::vector<double> s(n);
    std::vector<int> y(n);
    const unsigned levels = 1 + static_cast<unsigned>(rng() % 6);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels) / 4.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_EQ(ev::auc(s, y), oracle::pairwise_auc(s, y)) << "trial " << trial;
  }
}

TEST(Report, MatrixCsvFormat) {
  EXPECT_EQ(ev::matrix_csv(small_matrix()), "row_task,col_task,score\n1,1,90.00\n2,1,80.00\n2,2,95.13\n");
}

TEST(Report, ByteStableAcrossEmits) {
  const auto base = std::filesystem::temp_directory_path() / "devmoe_report_test";
  std::filesystem::remove_all(base);
  const std::vector<ev::StepRecord> steps{{1, 0, 0, 0.69, 0.0, 0.01, 0.5, 0.5, 0.692}};
  ev::ReportInput in{"full", 3, small_matrix(), small_matrix(), steps, 100, 10, "abc"};
  ev::emit_report(in, base / "a");
  ev::emit_report(in, base / "b");
  for (const char* f : {"acc_matrix.csv", "auc_matrix.csv", "metrics.csv", "loss_log.csv", "summary.json"}) {
    const std::string a = slurp(base / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(base / "b" / f)) << f;
  }
  EXPECT_EQ(slurp(base / "a" / "metrics.csv"), "row_task,avg_acc,af_acc,avg_auc,af_auc\n1,90.00,,90.00,\n2,87.56,10.00,87.56,10.00\n");
}

TEST(Report, SummaryJsonFields) {
  const std::vector<ev::StepRecord> steps;
  ev::ReportInput in{"cls_only", 2, small_matrix(), small_matrix(), steps, 100, 10, "abc"};
  const auto j = nlohmann::json::parse(ev::summary_json(in));
  EXPECT_EQ(j["variant"], "cls_only");
  EXPECT_EQ(j["seed"], 2);
  EXPECT_TRUE(j["af"][0].is_null());
  EXPECT_DOUBLE_EQ(j["af"][1].get<double>(), 10.0);
  EXPECT_DOUBLE_EQ(j["avg"][1].get<double>(), 87.56);
  EXPECT_EQ(j["params"]["trainable"], 10);
  EXPECT_EQ(j["config_digest"], "abc");
}

TEST(Report, UnwritableDirectoryNamesPath) {
  const std::vector<ev::StepRecord> steps;
  ev::ReportInput in{"full", 1, small_matrix(), small_matrix(), steps, 1, 1, ""};
  try {
    ev::emit_report(in, "/proc/devmoe_cannot_write_here");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/proc/devmoe_cannot_write_here"), std::string::npos);
  }
}

TEST(Pca, RecoversDominantAxes) {
  // Points spread along e0 (sd 5) and e1 (sd 1) in 4-D.
  devmoe::linalg::Rng rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix f(4, 400);
  for (std::size_t j = 0; j < 400; ++j) {
    f(0, j) = 3.0 + 5.0 * n(rng);
    f(1, j) = 1.0 * n(rng);
    f(2, j) = 0.01 * n(rng);
    f(3, j) = -2.0 + 0.01 * n(rng);
  }
  const ev::PcaResult r = ev::pca_2d(f);
  ASSERT_EQ(r.coords.rows(), 400u);
  ASSERT_EQ(r.coords.cols(), 2u);
  EXPECT_GT(std::abs(r.axes(0, 0)), 0.999);
  EXPECT_GT(std::abs(r.axes(1, 1)), 0.999);
  EXPECT_GE(r.explained_variance[0], r.explained_variance[1]);
  // Eigen oracle on the centred covariance.
  Matrix centred = devmoe::linalg::transpose(f);
  for (std::size_t i = 0; i < 4; ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < 400; ++j) m += centred(j, i);
    for (std::size_t j = 0; j < 400; ++j) centred(j, i) -= m / 400.0;
  }
  const auto evals = oracle::gram_eigenvalues(centred);
  EXPECT_NEAR(r.explained_variance[0], evals[0] / 400.0, 1e-8 * evals[0]);
  EXPECT_NEAR(r.explained_variance[1], evals[1] / 400.0, 1e-8 * evals[0]);
  double mean0 = 0.0;
  for (std::size_t j = 0; j < 400; ++j) mean0 += r.coords(j, 0);
  EXPECT_NEAR(mean0 / 400.0, 0.0, 1e-10);
}

TEST(Pca, OneDimensionalInput) {
  Matrix f = Matrix::from_rows({{1.0, 2.0, 3.0}});
  const ev::PcaResult r = ev::pca_2d(f);
  EXPECT_EQ(r.axes.rows(), 2u);
  EXPECT_EQ(r.axes(1, 0), 0.0);
  EXPECT_NEAR(std::abs(r.coords(0, 0)), 1.0, 1e-12);
}

TEST(Report, MatrixCsvParsesBack) {
  const ev::ScoreMatrix m = small_matrix();
  const ev::ScoreMatrix back = ev::parse_matrix_csv(ev::matrix_csv(m), ev::Metric::Acc, "mem");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_DOUBLE_EQ(back.at(1, 0), 80.0);
  EXPECT_DOUBLE_EQ(back.at(1, 1), 95.13);
  EXPECT_THROW((void)ev::parse_matrix_csv("nope\n", ev::Metric::Acc, "mem"), std::runtime_error);
  try {
    (void)ev::parse_matrix_csv("row_task,col_task,score\n1,2,50\n", ev::Metric::Acc, "x.csv");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("x.csv:2"), std::string::npos) << e.what();
  }
}

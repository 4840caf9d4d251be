#include <doctest.h>

#include <fstream>
#include <sstream>

#include "drape/metrics.hpp"

using namespace drape;

namespace {

// published full-scale accuracy matrix used as a numeric fixture
AccuracyMatrix fixture_matrix() {
  AccuracyMatrix a(8);
  a.push_stage({73.66});
  a.push_stage({70.29, 59.93});
  a.push_stage({69.21, 59.43, 94.46});
  a.push_stage({69.87, 59.71, 94.50, 61.96});
  a.push_stage({69.79, 59.54, 94.53, 61.88, 54.60});
  a.push_stage({70.01, 59.51, 94.46, 61.93, 54.55, 68.03});
  a.push_stage({70.57, 59.49, 94.32, 61.19, 54.32, 68.07, 66.65});
  a.push_stage({70.67, 59.61, 94.16, 61.37, 54.43, 67.92, 66.53, 65.11});
  return a;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("final average reproduces the published value") {
  const AccuracyMatrix a = fixture_matrix();
  CHECK(round_report(final_average(a)) == doctest::Approx(67.48));

  AccuracyMatrix full(2);
  full.push_stage({100});
  full.push_stage({100, 100});
  CHECK(final_average(full) == doctest::Approx(100.0));

  AccuracyMatrix one(1);
  one.push_stage({42.5});
  CHECK(final_average(one) == doctest::Approx(42.5));

  AccuracyMatrix incomplete(3);
  incomplete.push_stage({50});
  CHECK_THROWS_AS(final_average(incomplete), UndefinedStageError);
}

TEST_CASE("stage metrics reproduce the published B_t and M_t") {
  const AccuracyMatrix a = fixture_matrix();
  const Scalar expect_b[] = {3.37, 2.48, 1.32, 1.07, 0.83, 0.78, 0.66};
  const Scalar expect_m[] = {65.11, 74.37, 71.51, 68.07, 68.08, 67.80, 67.48};
  for (int t = 2; t <= 8; ++t) {
    CHECK(round_report(backward_transfer(a, t)) == doctest::Approx(expect_b[t - 2]));
    CHECK(round_report(mean_accuracy(a, t)) == doctest::Approx(expect_m[t - 2]));
  }
  const StageMetricSummary s = stage_metrics(a);
  CHECK(round_report(s.bwt_mean) == doctest::Approx(1.50));
  CHECK(round_report(s.mean_acc_mean) == doctest::Approx(68.92));
}

TEST_CASE("constant matrices show zero forgetting") {
  AccuracyMatrix a(3);
  a.push_stage({70});
  a.push_stage({70, 70});
  a.push_stage({70, 70, 70});
  for (int t = 2; t <= 3; ++t) CHECK(backward_transfer(a, t) == doctest::Approx(0.0));
  CHECK(mean_accuracy(a, 1) == doctest::Approx(70.0));
  CHECK_THROWS_AS(backward_transfer(a, 1), UndefinedStageError);
}

TEST_CASE("csv round trip preserves the triangle") {
  const AccuracyMatrix a = fixture_matrix();
  std::stringstream ss;
  a.to_csv(ss);
  const AccuracyMatrix b = AccuracyMatrix::from_csv(ss);
  REQUIRE(b.n_tasks() == 8);
  for (int t = 1; t <= 8; ++t)
    for (int s = 1; s <= t; ++s) CHECK(b.at(s, t) == doctest::Approx(a.at(s, t)).epsilon(1e-9));
}

TEST_CASE("malformed csv is rejected") {
  std::stringstream empty("");
  CHECK_THROWS_AS(AccuracyMatrix::from_csv(empty), IoError);
  std::stringstream bad("stage,t1\n1,abc\n");
  CHECK_THROWS_AS(AccuracyMatrix::from_csv(bad), IoError);
  std::stringstream ragged("stage,t1,t2\n1,50,60\n");  // too many entries for stage 1
  CHECK_THROWS_AS(AccuracyMatrix::from_csv(ragged), IoError);
}

TEST_CASE("metrics ignore tasks beyond stage t") {
  AccuracyMatrix a(3);
  a.push_stage({80});
  a.push_stage({75, 60});
  a.push_stage({70, 55, 90});
  AccuracyMatrix b(3);
  b.push_stage({80});
  b.push_stage({75, 60});
  b.push_stage({70, 55, 10});  // only the last stage's new task differs
  CHECK(backward_transfer(a, 2) == backward_transfer(b, 2));
  CHECK(mean_accuracy(a, 2) == mean_accuracy(b, 2));
  CHECK(backward_transfer(a, 3) == backward_transfer(b, 3));  // new task not in B_3
}

TEST_CASE("confusion matrix is row normalized") {
  SUBCASE("perfect routing is the scaled identity") {
    std::vector<std::pair<int, int>> log;
    for (int t = 0; t < 3; ++t)
      for (int i = 0; i < 5; ++i) log.emplace_back(t, t);
    const ConfusionMatrix cm = routing_confusion(log, 3);
    CHECK((cm.rows - 100.0 * Mat::Identity(3, 3)).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  SUBCASE("split decisions split the row") {
    const std::vector<std::pair<int, int>> log{{0, 0}, {0, 1}, {1, 1}};
    const ConfusionMatrix cm = routing_confusion(log, 2);
    CHECK(cm.rows(0, 0) == doctest::Approx(50.0));
    CHECK(cm.rows(0, 1) == doctest::Approx(50.0));
    CHECK(cm.rows(1, 1) == doctest::Approx(100.0));
    for (Index r = 0; r < 2; ++r)
      CHECK(cm.rows.row(r).sum() == doctest::Approx(100.0).epsilon(1e-9));
  }
  SUBCASE("a task with no samples is an error") {
    const std::vector<std::pair<int, int>> log{{0, 0}};
    CHECK_THROWS_AS(routing_confusion(log, 2), DegenerateInputError);
    CHECK_THROWS_AS(routing_confusion({}, 2), DegenerateInputError);
  }
}

TEST_CASE("report rounding is half away from zero") {
  CHECK(round_report(2.485) == doctest::Approx(2.49));
  CHECK(round_report(1.064) == doctest::Approx(1.06));
  CHECK(round_report(-0.146) == doctest::Approx(-0.15));
  CHECK(round_report(67.4751) == doctest::Approx(67.48));
  CHECK(round_report(0.0) == doctest::Approx(0.0));
}

TEST_SUITE_END();

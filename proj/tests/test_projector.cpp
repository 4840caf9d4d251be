#include <doctest.h>

#include "drape/projector.hpp"
#include "drape/rng.hpp"

using namespace drape;

TEST_SUITE_BEGIN("projector");

TEST_CASE("zero input with zero biases maps to zero") {
  ProjectorParams p = ProjectorParams::init(4, 6, 5, 3);
  p.l1.b.setZero();
  p.l2.b.setZero();
  CHECK(project(p, Mat::Zero(3, 4)).norm() == 0.0);
}

TEST_CASE("taps count every observed row and stay symmetric PSD") {
  ProjectorParams p = ProjectorParams::init(4, 6, 5, 3);
  Rng rng(5);
  ad::Tape t;
  ParamRegistry reg;
  p.register_params(reg);
  TapeBinding binding(t, reg);
  const BoundProjector bound = bound_projector(binding);

  for (int k = 0; k < 3; ++k)
    project(t, bound, p, t.constant(randn(rng, 7, 4, 1.0)), /*collect=*/true);
  CHECK(p.tap1.count == 21);
  CHECK(p.tap2.count == 21);

  // collect off leaves taps untouched
  project(t, bound, p, t.constant(randn(rng, 7, 4, 1.0)), /*collect=*/false);
  CHECK(p.tap1.count == 21);

  const TapDrain d = drain_taps(p);
  CHECK(d.count1 == 21);
  CHECK((d.gram1 - d.gram1.transpose()).lpNorm<Eigen::Infinity>() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Mat> eig(d.gram1);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  CHECK(p.tap1.count == 0);
  CHECK(p.tap1.gram.norm() == 0.0);
}

TEST_CASE("single observed row gives its outer product") {
  ProjectorParams p = ProjectorParams::init(2, 3, 3, 1);
  Mat row(1, 2);
  row << 1, 0;
  p.tap1.observe(row);
  CHECK(p.tap1.count == 1);
  CHECK(p.tap1.gram(0, 0) == 1.0);
  CHECK(p.tap1.gram(0, 1) == 0.0);
  CHECK(p.tap1.gram(1, 1) == 0.0);

  Mat row2(1, 2);
  row2 << 0, 1;
  p.tap1.observe(row2);
  CHECK((p.tap1.gram - Mat::Identity(2, 2)).norm() == 0.0);
  CHECK(p.tap1.count == 2);
}

TEST_CASE("drained trace matches mean squared row norm") {
  ProjectorParams p = ProjectorParams::init(5, 4, 4, 9);
  Rng rng(17);
  const Mat rows = randn(rng, 40, 5, 1.3);
  p.tap1.observe(rows);
  const TapDrain d = drain_taps(p);
  const Scalar mean_sq = rows.rowwise().squaredNorm().mean();
  CHECK(d.gram1.trace() / static_cast<Scalar>(d.count1) ==
        doctest::Approx(mean_sq).epsilon(1e-10));
}

TEST_CASE("no observations drain to zero") {
  ProjectorParams p = ProjectorParams::init(3, 3, 3, 2);
  const TapDrain d = drain_taps(p);
  CHECK(d.count1 == 0);
  CHECK(d.gram1.norm() == 0.0);
}

TEST_CASE("tape forward equals inference forward") {
  ProjectorParams p = ProjectorParams::init(4, 8, 6, 21);
  Rng rng(23);
  const Mat x = randn(rng, 5, 4, 1.0);
  ad::Tape t;
  ParamRegistry reg;
  p.register_params(reg);
  TapeBinding binding(t, reg);
  const Mat on_tape = project(t, bound_projector(binding), p, t.constant(x), false).val();
  CHECK((on_tape - project(p, x)).norm() == 0.0);
}

TEST_SUITE_END();

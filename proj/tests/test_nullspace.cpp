#include <doctest.h>

#include <Eigen/QR>

#include "drape/nullspace.hpp"
#include "drape/rng.hpp"

using namespace drape;

namespace {

// random rotation of a geometrically decaying spectrum; second-moment
// matrices of real features look like this, and the tail mass never forces
// the rank clamp to override the energy threshold
Mat random_psd(Rng& rng, Index d) {
  const Mat q = Eigen::HouseholderQR<Mat>(randn(rng, d, d, 1.0)).householderQ() *
                Mat::Identity(d, d);
  Vec lambda(d);
  Scalar v = 0.5 + rng.uniform();
  for (Index k = 0; k < d; ++k) {
    lambda(k) = v * (0.8 + 0.4 * rng.uniform());
    v /= 6.0;
  }
  return q * lambda.asDiagonal() * q.transpose();
}

}  // namespace

TEST_SUITE_BEGIN("nullspace");

TEST_CASE("moment update is an exact running mean") {
  MomentStats m0 = MomentStats::zero(2);
  Mat g1(2, 2);
  g1 << 1, 0, 0, 0;
  const MomentStats m1 = update_moment(m0, g1, 1);
  CHECK(m1.m(0, 0) == doctest::Approx(1.0));
  CHECK(m1.n == 1);

  Mat g2(2, 2);
  g2 << 0, 0, 0, 1;
  const MomentStats m2 = update_moment(m1, g2, 1);
  CHECK(m2.m(0, 0) == doctest::Approx(0.5));
  CHECK(m2.m(1, 1) == doctest::Approx(0.5));
  CHECK(m2.n == 2);
}

TEST_CASE("moment update rejects empty statistics") {
  MomentStats m0 = MomentStats::zero(2);
  CHECK_THROWS_AS(update_moment(m0, Mat::Zero(2, 2), 0), EmptyStatisticsError);
}

TEST_CASE("merging streams in either order matches the one-shot mean") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat rows_a = randn(rng, 7, 4, 1.0);
    const Mat rows_b = randn(rng, 5, 4, 1.0);
    const Mat ga = rows_a.transpose() * rows_a;
    const Mat gb = rows_b.transpose() * rows_b;

    const MomentStats ab = update_moment(update_moment(MomentStats::zero(4), ga, 7), gb, 5);
    const MomentStats ba = update_moment(update_moment(MomentStats::zero(4), gb, 5), ga, 7);
    Mat all(12, 4);
    all << rows_a, rows_b;
    const Mat oneshot = all.transpose() * all / 12.0;

    CHECK((ab.m - ba.m).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((ab.m - oneshot).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("diagonal projection picks the documented ranks") {
  Mat m = Mat::Zero(3, 3);
  m.diagonal() << 4, 1, 0;

  SUBCASE("eps 0.8 retains one direction") {
    const ProjectionMatrix p = compute_projection(m, 0.8);
    CHECK(p.rank == 1);
    Mat expect = Mat::Zero(3, 3);
    expect(1, 1) = 1;
    expect(2, 2) = 1;
    CHECK((p.pi - expect).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  SUBCASE("eps 0.99 retains two directions") {
    const ProjectionMatrix p = compute_projection(m, 0.99);
    CHECK(p.rank == 2);
    Mat expect = Mat::Zero(3, 3);
    expect(2, 2) = 1;
    CHECK((p.pi - expect).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("identity moment clamps the rank to d-1") {
  const ProjectionMatrix p = compute_projection(Mat::Identity(3, 3), 0.99);
  CHECK(p.rank == 2);
  const Vec third = p.v_perp.col(0);
  CHECK((p.pi - third * third.transpose()).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("zero moment degenerates to the identity projector with a warning flag") {
  const ProjectionMatrix p = compute_projection(Mat::Zero(4, 4), 0.9);
  CHECK(p.degenerate);
  CHECK(p.rank == 0);
  CHECK((p.pi - Mat::Identity(4, 4)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("projection algebra invariants over random PSD matrices") {
  Rng rng(77);
  for (const Index d : {4, 8, 16}) {
    for (const Scalar eps : {0.8, 0.9, 0.99}) {
      for (int trial = 0; trial < 30; ++trial) {
        const Mat m = random_psd(rng, d);
        const ProjectionMatrix p = compute_projection(m, eps);
        CHECK((p.pi - p.pi.transpose()).lpNorm<Eigen::Infinity>() < 1e-10);
        CHECK((p.pi * p.pi - p.pi).lpNorm<Eigen::Infinity>() < 1e-10);
        CHECK((p.pi * p.v_par).lpNorm<Eigen::Infinity>() < 1e-8);
        const Scalar leaked = (p.v_perp.transpose() * m * p.v_perp).trace();
        CHECK(leaked <= (1 - eps) * m.trace() + 1e-8);
        CHECK(p.rank >= 1);
        CHECK(p.rank <= d - 1);
      }
    }
  }
}

TEST_CASE("retained rank is nondecreasing in eps") {
  Rng rng(78);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat m = random_psd(rng, 8);
    Index prev = 0;
    for (const Scalar eps : {0.5, 0.8, 0.9, 0.99, 1.0}) {
      const Index r = compute_projection(m, eps).rank;
      CHECK(r >= prev);
      prev = r;
    }
  }
}

TEST_CASE("projected gradient zeroes retained coordinates") {
  Mat m = Mat::Zero(3, 3);
  m.diagonal() << 4, 1, 0;
  const ProjectionMatrix p = compute_projection(m, 0.8);
  Mat grad(1, 3);
  grad << 1, 1, 1;
  const Mat projected = project_gradient(grad, p);
  CHECK(projected(0, 0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(projected(0, 1) == doctest::Approx(1.0));
  CHECK(projected(0, 2) == doctest::Approx(1.0));

  // identity projector leaves the gradient unchanged
  ProjectionMatrix ident = compute_projection(Mat::Zero(3, 3), 0.8);
  CHECK((project_gradient(grad, ident) - grad).norm() == 0.0);
}

TEST_CASE("retained-subspace vectors are annihilated exactly") {
  Rng rng(79);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat m = random_psd(rng, 6);
    const ProjectionMatrix p = compute_projection(m, 0.9);
    const Vec coeffs = randn(rng, p.rank, 1, 1.0);
    const Vec v = p.v_par * coeffs;
    const Mat grad = randn(rng, 5, 6, 1.0);
    CHECK((project_gradient(grad, p) * v).norm() < 1e-8 * (grad.norm() * v.norm() + 1));
  }
}

TEST_CASE("interference bound holds on random instances") {
  Rng rng(80);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index d = 4 + rng.below(6);
    const Mat m = random_psd(rng, d);
    const Scalar eps = 0.5 + 0.49 * rng.uniform();
    const ProjectionMatrix p = compute_projection(m, eps);
    const Mat grad = randn(rng, 3 + rng.below(4), d, 1.0);
    const Vec v = randn(rng, d, 1, 1.0);
    const Scalar eta = 0.01 + rng.uniform();
    const InterferenceBound b = interference_bound(grad, p, v, eta);
    CHECK(b.lhs <= b.rhs * (1 + 1e-10) + 1e-12);
  }
}

TEST_CASE("interference vanishes for retained features and obeys the operator norm") {
  Rng rng(81);
  const Mat m = random_psd(rng, 5);
  const ProjectionMatrix p = compute_projection(m, 0.9);
  const Mat grad = randn(rng, 4, 5, 1.0);

  const Vec v_par = p.v_par * randn(rng, p.rank, 1, 1.0);
  const InterferenceBound parallel = interference_bound(grad, p, v_par, 0.5);
  CHECK(parallel.lhs < 1e-10);

  // pi = I case: plain operator-norm inequality
  const ProjectionMatrix ident = compute_projection(Mat::Zero(5, 5), 0.9);
  const Vec v = randn(rng, 5, 1, 1.0);
  const InterferenceBound b = interference_bound(grad, ident, v, 0.5);
  CHECK(b.lhs == doctest::Approx((0.5 * grad * v).norm()).epsilon(1e-12));
  CHECK(b.lhs <= b.rhs * (1 + 1e-12));
}

TEST_SUITE_END();

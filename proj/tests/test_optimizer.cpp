#include <doctest.h>

#include "drape/nullspace.hpp"
#include "drape/optimizer.hpp"
#include "drape/rng.hpp"

using namespace drape;

TEST_SUITE_BEGIN("optimizer");

TEST_CASE("identity hook performs a plain descent step") {
  Rng rng(3);
  Mat w = randn(rng, 2, 3, 1.0);
  const Mat w0 = w;
  const Mat g = randn(rng, 2, 3, 1.0);
  ParamRegistry reg;
  reg.add("w", &w, ParamGroup::Generator);
  Gradients grads{{"w", g}};
  sgd_step(reg, grads, {}, 0.1, 0.01);
  CHECK((w - (w0 - 0.1 * g)).norm() < 1e-15);
}

TEST_CASE("learning-rate groups are respected") {
  Rng rng(5);
  Mat gen = randn(rng, 2, 2, 1.0);
  Mat proj = randn(rng, 2, 2, 1.0);
  const Mat gen0 = gen, proj0 = proj;
  ParamRegistry reg;
  reg.add("gen", &gen, ParamGroup::Generator);
  reg.add("proj", &proj, ParamGroup::Projector);
  const Mat g = Mat::Ones(2, 2);
  sgd_step(reg, Gradients{{"gen", g}, {"proj", g}}, {}, 0.5, 0.05);
  CHECK((gen - (gen0 - 0.5 * g)).norm() < 1e-15);
  CHECK((proj - (proj0 - 0.05 * g)).norm() < 1e-15);
}

TEST_CASE("a zero projection hook freezes the weight") {
  Rng rng(7);
  Mat w = randn(rng, 3, 4, 1.0);
  const Mat w0 = w;
  ParamRegistry reg;
  reg.add("w", &w, ParamGroup::Projector);
  GradHooks hooks;
  const ProjectionMatrix zero_pi{Mat::Zero(4, 4), 3, Mat::Identity(4, 4), Mat(4, 0),
                                 Vec::Ones(4), false};
  hooks["w"] = [&](const Mat& g) { return project_gradient(g, zero_pi); };
  sgd_step(reg, Gradients{{"w", randn(rng, 3, 4, 1.0)}}, hooks, 0.3, 0.3);
  CHECK(w == w0);
}

TEST_CASE("hooks on distinct parameters are order independent") {
  Rng rng(9);
  Mat a = randn(rng, 2, 2, 1.0);
  Mat b = randn(rng, 2, 2, 1.0);
  Mat a2 = a, b2 = b;
  const Mat ga = randn(rng, 2, 2, 1.0);
  const Mat gb = randn(rng, 2, 2, 1.0);

  GradHooks hooks;
  hooks["a"] = [](const Mat& g) { return Mat(2.0 * g); };
  hooks["b"] = [](const Mat& g) { return Mat(-g); };

  ParamRegistry reg1;
  reg1.add("a", &a, ParamGroup::Generator);
  reg1.add("b", &b, ParamGroup::Generator);
  sgd_step(reg1, Gradients{{"a", ga}, {"b", gb}}, hooks, 0.1, 0.1);

  ParamRegistry reg2;  // reversed registration order
  reg2.add("b", &b2, ParamGroup::Generator);
  reg2.add("a", &a2, ParamGroup::Generator);
  sgd_step(reg2, Gradients{{"b", gb}, {"a", ga}}, hooks, 0.1, 0.1);

  CHECK(a == a2);
  CHECK(b == b2);
}

TEST_CASE("updates to frozen parameters are rejected") {
  Mat w = Mat::Ones(2, 2);
  bool frozen = true;
  ParamRegistry reg;
  reg.add("w", &w, ParamGroup::Generator, &frozen);
  CHECK_THROWS_AS(sgd_step(reg, Gradients{{"w", Mat::Ones(2, 2)}}, {}, 0.1, 0.1),
                  FrozenParamError);
  frozen = false;
  sgd_step(reg, Gradients{{"w", Mat::Ones(2, 2)}}, {}, 0.1, 0.1);
  CHECK(w(0, 0) == doctest::Approx(0.9));
}

TEST_CASE("frozen parameters are absent from the gradient map") {
  Mat a = Mat::Ones(1, 2);
  Mat b = Mat::Ones(1, 2);
  bool frozen = true;
  ParamRegistry reg;
  reg.add("a", &a, ParamGroup::Generator);
  reg.add("b", &b, ParamGroup::Generator, &frozen);
  ad::Tape t;
  TapeBinding binding(t, reg);
  ad::Value loss = ad::sum_squares(ad::concat_rows({binding.at("a"), binding.at("b")}));
  t.backward(loss);
  const Gradients grads = binding.grads();
  CHECK(grads.count("a") == 1);
  CHECK(grads.count("b") == 0);
}

TEST_CASE("schedule warms up linearly then decays to zero") {
  const int total = 100;
  CHECK(lr_schedule(0, total, 0.03) > 0.0);
  CHECK(lr_schedule(2, total, 0.03) == doctest::Approx(1.0));  // warmup = 3 steps
  CHECK(lr_schedule(3, total, 0.03) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(lr_schedule(total - 1, total, 0.03) < 0.001);
  // monotone decay after warmup
  Scalar prev = 2.0;
  for (int s = 3; s < total; ++s) {
    const Scalar v = lr_schedule(s, total, 0.03);
    CHECK(v <= prev + 1e-12);
    prev = v;
  }
}

TEST_SUITE_END();

#include <doctest.h>

#include <cmath>

#include "drape/generator.hpp"
#include "drape/gradcheck.hpp"
#include "drape/rng.hpp"

using namespace drape;

namespace {

GeneratorConfig small_cfg(PromptMode mode = PromptMode::Segment) {
  GeneratorConfig cfg;
  cfg.d_model = 12;
  cfg.hidden = 8;
  cfg.prompt_len = 2;
  cfg.heads = 2;
  cfg.dropout = 0.0;
  cfg.mode = mode;
  return cfg;
}

struct Instance {
  Mat w;  // [m x d]
  Mat u;  // [s x d]
  std::vector<char> valid;
};

Instance make_instance(std::uint64_t seed, Index s = 5, Index m = 3) {
  Rng rng(seed);
  Instance in;
  in.w = randn(rng, m, 12, 1.0);
  in.u = randn(rng, s, 12, 1.0);
  in.valid.assign(static_cast<std::size_t>(s), 1);
  in.valid[static_cast<std::size_t>(s) - 1] = 0;  // one "answer" position
  return in;
}

Mat run_generate(const GeneratorParams& p, const Instance& in) {
  return generate_prompt(p, in.w, in.u, in.valid);
}

}  // namespace

TEST_SUITE_BEGIN("generator");

TEST_CASE("segment pooling averages contiguous balanced segments") {
  GeneratorConfig cfg = small_cfg();
  cfg.d_model = 8;  // identity f_u keeps rows comparable
  GeneratorParams p = GeneratorParams::init(cfg, 3);
  p.f_u.w = Mat::Identity(8, 8);
  p.f_u.b.setZero();

  Rng rng(5);
  const Mat u = randn(rng, 4, 8, 1.0);
  ad::Tape t;
  BoundGenerator g = bind_generator(t, p, false);
  ad::Value h_u = linear(t, g.f_u, t.constant(u));

  SUBCASE("all valid: two segments of two rows") {
    const std::vector<char> valid{1, 1, 1, 1};
    ad::Value pooled = ad::segment_masked_mean(h_u, balanced_segments(4, 2), valid);
    CHECK((pooled.val().row(0) - 0.5 * (u.row(0) + u.row(1))).norm() < 1e-14);
    CHECK((pooled.val().row(1) - 0.5 * (u.row(2) + u.row(3))).norm() < 1e-14);
  }
  SUBCASE("masked position drops from numerator and denominator") {
    const std::vector<char> valid{1, 0, 1, 1};
    ad::Value pooled = ad::segment_masked_mean(h_u, balanced_segments(4, 2), valid);
    CHECK((pooled.val().row(0) - u.row(0)).norm() < 1e-14);
  }
}

TEST_CASE("short sequences produce an empty segment pooling to zero") {
  const auto segs = balanced_segments(3, 4);
  REQUIRE(segs.size() == 4);
  int empty = 0;
  for (const auto& [b, e] : segs) empty += (b == e) ? 1 : 0;
  CHECK(empty == 1);

  ad::Tape t;
  Rng rng(6);
  ad::Value x = t.constant(randn(rng, 3, 4, 1.0));
  ad::Value pooled = ad::segment_masked_mean(x, segs, {1, 1, 1});
  bool found_zero_row = false;
  for (Index r = 0; r < pooled.val().rows(); ++r)
    if (pooled.val().row(r).norm() == 0.0) found_zero_row = true;
  CHECK(found_zero_row);
}

TEST_CASE("queries respect the key-padding mask exactly") {
  const GeneratorConfig cfg = small_cfg();
  const GeneratorParams p = GeneratorParams::init(cfg, 7);
  Rng rng(9);
  const Mat u = randn(rng, 5, 12, 1.0);
  const std::vector<char> valid{1, 1, 0, 0, 0};

  ad::Tape t;
  BoundGenerator g = bind_generator(t, p, false);
  const QueryResult q = init_queries(t, g, cfg, t.constant(u), valid);
  CHECK(q.q.val().rows() == 2);
  CHECK(q.q.val().cols() == 8);
  CHECK(q.attn.col(2).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(q.attn.col(3).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(q.attn.col(4).lpNorm<Eigen::Infinity>() == 0.0);

  const std::vector<char> none(5, 0);
  CHECK_THROWS_AS(init_queries(t, g, cfg, t.constant(u), none), DegenerateInputError);
}

TEST_CASE("cross-attention weight rows sum to one") {
  const GeneratorConfig cfg = small_cfg();
  const GeneratorParams p = GeneratorParams::init(cfg, 11);
  const Instance in = make_instance(31);
  ad::Tape t;
  BoundGenerator g = bind_generator(t, p, false);
  const QueryResult q = init_queries(t, g, cfg, t.constant(in.u), in.valid);
  const SynthesisResult syn = synthesize(t, g, cfg, q.q, t.constant(in.w), false, nullptr);
  REQUIRE(syn.cross_attn.rows() == cfg.prompt_len);
  REQUIRE(syn.cross_attn.cols() == in.w.rows());
  for (Index r = 0; r < syn.cross_attn.rows(); ++r)
    CHECK(syn.cross_attn.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("prompt shape contract holds in every mode") {
  for (const PromptMode mode :
       {PromptMode::Segment, PromptMode::Mean, PromptMode::Static, PromptMode::Learnable}) {
    const GeneratorConfig cfg = small_cfg(mode);
    const GeneratorParams p = GeneratorParams::init(cfg, 13);
    const Instance in = make_instance(37);
    const Mat prompt = run_generate(p, in);
    CHECK(prompt.rows() == cfg.prompt_len);
    CHECK(prompt.cols() == cfg.d_model);
  }
}

TEST_CASE("inference ignores the dropout rate") {
  GeneratorConfig with_dropout = small_cfg();
  with_dropout.dropout = 0.5;
  GeneratorParams p = GeneratorParams::init(with_dropout, 17);
  GeneratorParams q = p;
  q.cfg.dropout = 0.0;
  const Instance in = make_instance(41);
  CHECK(run_generate(p, in) == run_generate(q, in));
}

TEST_CASE("static mode returns the stored prompt regardless of inputs") {
  const GeneratorConfig cfg = small_cfg(PromptMode::Static);
  const GeneratorParams p = GeneratorParams::init(cfg, 19);
  const Mat a = run_generate(p, make_instance(43));
  const Mat b = run_generate(p, make_instance(44, 6, 4));
  CHECK(a == b);
  CHECK(a == p.static_prompt);
}

TEST_CASE("mean mode collapses all prompt rows to one vector") {
  const GeneratorConfig cfg = small_cfg(PromptMode::Mean);
  const GeneratorParams p = GeneratorParams::init(cfg, 23);
  const Mat prompt = run_generate(p, make_instance(47));
  CHECK((prompt.row(0) - prompt.row(1)).norm() < 1e-13);
}

TEST_CASE("masking invariance: invalid-position content never reaches the prompt") {
  const GeneratorConfig cfg = small_cfg();
  const GeneratorParams p = GeneratorParams::init(cfg, 29);
  for (int trial = 0; trial < 50; ++trial) {
    Instance in = make_instance(100 + static_cast<std::uint64_t>(trial), 6, 3);
    in.valid = {1, 1, 1, 0, 0, 0};
    const Mat base = run_generate(p, in);

    Rng rng(900 + static_cast<std::uint64_t>(trial));
    Instance mutated = in;
    mutated.u.row(3) = randn(rng, 1, 12, 3.0);
    mutated.u.row(4) = randn(rng, 1, 12, 3.0);
    mutated.u.row(5).setConstant(1e6);
    const Mat after = run_generate(p, mutated);
    CHECK(base == after);  // bit identical
  }
}

TEST_CASE("different images give different prompts in segment mode") {
  const GeneratorConfig cfg = small_cfg();
  const GeneratorParams p = GeneratorParams::init(cfg, 31);
  Instance in = make_instance(53);
  const Mat base = run_generate(p, in);
  Rng rng(54);
  in.w = randn(rng, 3, 12, 1.0);
  const Mat other = run_generate(p, in);
  CHECK((base - other).norm() > 0.0);
}

TEST_CASE("learnable mode skips instruction pooling but keeps vision attention") {
  const GeneratorConfig cfg = small_cfg(PromptMode::Learnable);
  const GeneratorParams p = GeneratorParams::init(cfg, 37);
  Instance in = make_instance(59);
  const Mat base = run_generate(p, in);
  // instruction content is irrelevant in this mode
  Rng rng(60);
  in.u = randn(rng, 5, 12, 2.0);
  CHECK(run_generate(p, in) == base);
  // but the image still matters through cross attention
  in.w = randn(rng, 3, 12, 1.0);
  CHECK((run_generate(p, in) - base).norm() > 0.0);
}

TEST_CASE("disabled cross-attention removes image dependence") {
  GeneratorConfig cfg = small_cfg();
  cfg.cross_attention = false;
  const GeneratorParams p = GeneratorParams::init(cfg, 41);
  Instance in = make_instance(61);
  const Mat base = run_generate(p, in);
  Rng rng(62);
  in.w = randn(rng, 3, 12, 1.0);
  CHECK(run_generate(p, in) == base);
}

TEST_CASE("full generator gradients match finite differences") {
  GeneratorConfig cfg = small_cfg();
  GeneratorParams p = GeneratorParams::init(cfg, 43);
  const Instance in = make_instance(67);
  ParamRegistry reg;
  p.register_params(reg, "gen");
  const auto build = [&](ad::Tape& t, const TapeBinding& b) {
    BoundGenerator g = bound_generator(b, cfg, "gen");
    PromptResult res =
        generate(t, g, cfg, t.constant(in.w), t.constant(in.u), in.valid, false, nullptr);
    return ad::scale(ad::sum_squares(res.prompt),
                     1.0 / static_cast<Scalar>(res.prompt.val().size()));
  };
  const GradCheckReport rep = gradcheck(build, reg);
  INFO("worst ", rep.worst_param, " rel ", rep.max_rel_err);
  CHECK(rep.max_rel_err <= 1e-5);
}

TEST_CASE("invalid configurations are rejected") {
  GeneratorConfig cfg = small_cfg();
  cfg.prompt_len = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_cfg();
  cfg.hidden = 9;  // not divisible by heads=2
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_SUITE_END();

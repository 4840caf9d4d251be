#include <algorithm>
#include <string>
#include <utility>

#include "drape/backbone.hpp"
#include "drape/generator.hpp"
#include "drape/gradcheck.hpp"
#include "drape/projector.hpp"
#include "drape/rng.hpp"

namespace drape {
namespace {

constexpr Scalar kTol = 1e-5;

struct SmallInstance {
  GeneratorConfig gen_cfg;
  GeneratorParams gen;
  ProjectorParams proj;
  BackboneParams backbone;
  Mat visual;                  // raw, [m x d_v_raw]
  std::vector<int> text;
  std::vector<char> valid;
  std::vector<int> answer;
  int instr_len = 0;
  std::uint64_t dropout_seed = 0;
};

SmallInstance make_instance(std::uint64_t seed, PromptMode mode, bool with_dropout) {
  SmallInstance in;
  in.gen_cfg.d_model = 16;
  in.gen_cfg.hidden = 8;
  in.gen_cfg.prompt_len = 2;
  in.gen_cfg.heads = 2;
  in.gen_cfg.dropout = with_dropout ? 0.25 : 0.0;
  in.gen_cfg.mode = mode;
  in.gen = GeneratorParams::init(in.gen_cfg, seed);
  in.proj = ProjectorParams::init(/*d_in=*/6, /*d_hidden=*/8, /*d_out=*/16,
                                  substream(seed, 2));

  BackboneConfig bb;
  bb.d_v_raw = 5;
  bb.d_v_enc = 6;
  bb.d_model = 16;
  bb.heads = 2;
  bb.vocab = 11;
  bb.s_max = 6;
  bb.seed = substream(seed, 3);
  in.backbone = make_backbone(bb);

  Rng rng(substream(seed, 4));
  in.visual = randn(rng, 3, 5, 1.0);
  in.instr_len = 3;
  in.text = {1, 4, 2, 7, 5, 0};
  in.valid = {1, 1, 1, 0, 0, 0};
  in.answer = {7, 5};
  in.dropout_seed = substream(seed, 5);
  return in;
}

// generator + projector + frozen-decoder loss; the criterion instance
ad::Value pipeline_loss(SmallInstance& in, ad::Tape& t, const TapeBinding& b) {
  ProjectorParams& proj = in.proj;
  BoundProjector bp = bound_projector(b);
  BoundGenerator bg = bound_generator(b, in.gen_cfg, "gen");
  ad::Value venc = t.constant(encode_image(in.backbone, in.visual));
  ad::Value w = project(t, bp, proj, venc, /*collect=*/false);
  ad::Value u = t.constant(embed_text(in.backbone, in.text));
  Rng dropout_rng(in.dropout_seed);  // same mask on every evaluation
  PromptResult prompt = generate(t, bg, in.gen_cfg, w, u, in.valid,
                                 /*train_mode=*/in.gen_cfg.dropout > 0, &dropout_rng);
  ad::Value zprime = ad::concat_rows({prompt.prompt, w, u});
  const Index first_answer_row = in.gen_cfg.prompt_len + in.visual.rows() + in.instr_len;
  return nll_loss(t, in.backbone, zprime, in.answer, first_answer_row).loss;
}

Scalar check_linear(std::uint64_t seed) {
  Rng rng(seed);
  LinearParams lin = LinearParams::init(4, 5, rng);
  lin.b = randn(rng, 1, 4, 0.5);
  const Mat x = randn(rng, 3, 5, 1.0);
  ParamRegistry reg;
  reg.add("lin", lin, ParamGroup::Generator);
  const auto build = [&](ad::Tape& t, const TapeBinding& b) {
    ad::Value y = linear(t, b.linear("lin"), t.constant(x));
    return ad::scale(ad::sum_squares(y), 1.0 / static_cast<Scalar>(y.val().size()));
  };
  return gradcheck(build, reg).max_rel_err;
}

Scalar check_gelu_mlp(std::uint64_t seed) {
  Rng rng(seed);
  LinearParams l1 = LinearParams::init(6, 4, rng);
  LinearParams l2 = LinearParams::init(3, 6, rng);
  const Mat x = randn(rng, 5, 4, 1.0);
  ParamRegistry reg;
  reg.add("l1", l1, ParamGroup::Generator);
  reg.add("l2", l2, ParamGroup::Generator);
  const auto build = [&](ad::Tape& t, const TapeBinding& b) {
    ad::Value y = linear(t, b.linear("l2"), ad::gelu(linear(t, b.linear("l1"), t.constant(x))));
    return ad::scale(ad::sum_squares(y), 1.0 / static_cast<Scalar>(y.val().size()));
  };
  return gradcheck(build, reg).max_rel_err;
}

Scalar check_layer_norm(std::uint64_t seed) {
  Rng rng(seed);
  LayerNormParams ln = LayerNormParams::init(6);
  ln.gain = randn(rng, 1, 6, 1.0);
  ln.shift = randn(rng, 1, 6, 0.5);
  LinearParams l = LinearParams::init(6, 6, rng);
  const Mat x = randn(rng, 4, 6, 1.0);
  ParamRegistry reg;
  reg.add("ln", ln, ParamGroup::Generator);
  reg.add("l", l, ParamGroup::Generator);
  const auto build = [&](ad::Tape& t, const TapeBinding& b) {
    ad::Value y = layer_norm(t, b.layer_norm("ln"), linear(t, b.linear("l"), t.constant(x)));
    return ad::scale(ad::sum_squares(y), 1.0 / static_cast<Scalar>(y.val().size()));
  };
  return gradcheck(build, reg).max_rel_err;
}

Scalar check_mha(std::uint64_t seed) {
  Rng rng(seed);
  MhaParams attn = MhaParams::init(8, 2, rng);
  const Mat q = randn(rng, 3, 8, 1.0);
  const Mat kv = randn(rng, 5, 8, 1.0);
  const std::vector<char> key_valid = {1, 0, 1, 1, 0};
  ParamRegistry reg;
  reg.add("attn", attn, ParamGroup::Generator);
  const auto build = [&](ad::Tape& t, const TapeBinding& b) {
    MhaResult res = mha(t, b.mha("attn", 2), t.constant(q), t.constant(kv),
                        AttnMask{AttnMaskKind::KeyValid, &key_valid});
    return ad::scale(ad::sum_squares(res.out), 1.0 / static_cast<Scalar>(res.out.val().size()));
  };
  return gradcheck(build, reg).max_rel_err;
}

Scalar check_projector(std::uint64_t seed) {
  SmallInstance in = make_instance(seed, PromptMode::Segment, false);
  ParamRegistry reg;
  in.proj.register_params(reg);
  const auto build = [&](ad::Tape& t, const TapeBinding& b) {
    BoundProjector bp = bound_projector(b);
    ad::Value venc = t.constant(encode_image(in.backbone, in.visual));
    ad::Value y = project(t, bp, in.proj, venc, false);
    return ad::scale(ad::sum_squares(y), 1.0 / static_cast<Scalar>(y.val().size()));
  };
  return gradcheck(build, reg).max_rel_err;
}

Scalar check_generator(std::uint64_t seed, PromptMode mode, bool with_dropout) {
  SmallInstance in = make_instance(seed, mode, with_dropout);
  ParamRegistry reg;
  in.gen.register_params(reg, "gen");
  Rng w_rng(substream(seed, 9));
  const Mat w = randn(w_rng, 3, 16, 1.0);
  const auto build = [&](ad::Tape& t, const TapeBinding& b) {
    BoundGenerator bg = bound_generator(b, in.gen_cfg, "gen");
    ad::Value u = t.constant(embed_text(in.backbone, in.text));
    Rng dropout_rng(in.dropout_seed);
    PromptResult res = generate(t, bg, in.gen_cfg, t.constant(w), u, in.valid,
                                with_dropout, &dropout_rng);
    return ad::scale(ad::sum_squares(res.prompt),
                     1.0 / static_cast<Scalar>(res.prompt.val().size()));
  };
  return gradcheck(build, reg).max_rel_err;
}

Scalar check_pipeline(std::uint64_t seed) {
  SmallInstance in = make_instance(seed, PromptMode::Segment, true);
  ParamRegistry reg;
  in.proj.register_params(reg);
  in.gen.register_params(reg, "gen");
  const auto build = [&](ad::Tape& t, const TapeBinding& b) { return pipeline_loss(in, t, b); };
  return gradcheck(build, reg).max_rel_err;
}

}  // namespace

GradcheckSuiteReport run_gradcheck_suite(int seeds) {
  GradcheckSuiteReport report;
  const auto record = [&](const std::string& name, Scalar rel) {
    report.per_module.emplace_back(name, rel);
    report.max_rel_err = std::max(report.max_rel_err, rel);
  };

  Scalar rel = 0;
  for (int s = 0; s < 3; ++s) rel = std::max(rel, check_linear(100 + s));
  record("linear", rel);
  rel = 0;
  for (int s = 0; s < 3; ++s) rel = std::max(rel, check_gelu_mlp(200 + s));
  record("gelu_mlp", rel);
  rel = 0;
  for (int s = 0; s < 3; ++s) rel = std::max(rel, check_layer_norm(300 + s));
  record("layer_norm", rel);
  rel = 0;
  for (int s = 0; s < 3; ++s) rel = std::max(rel, check_mha(400 + s));
  record("masked_mha", rel);
  rel = 0;
  for (int s = 0; s < 3; ++s) rel = std::max(rel, check_projector(500 + s));
  record("projector", rel);
  rel = 0;
  for (int s = 0; s < 3; ++s)
    rel = std::max(rel, check_generator(600 + s, PromptMode::Segment, false));
  record("generator_segment", rel);
  rel = std::max(check_generator(700, PromptMode::Mean, false),
                 check_generator(701, PromptMode::Learnable, false));
  rel = std::max(rel, check_generator(702, PromptMode::Static, false));
  record("generator_variants", rel);
  rel = check_generator(800, PromptMode::Segment, true);
  record("generator_dropout", rel);
  rel = 0;
  for (int s = 0; s < seeds; ++s) rel = std::max(rel, check_pipeline(900 + s));
  record("full_pipeline_nll", rel);

  report.passed = report.max_rel_err <= kTol;
  return report;
}

}  // namespace drape

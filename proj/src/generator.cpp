#include "drape/generator.hpp"

#include <algorithm>
#include <cmath>

namespace drape {

PromptMode prompt_mode_from_string(const std::string& s) {
  if (s == "segment") return PromptMode::Segment;
  if (s == "mean") return PromptMode::Mean;
  if (s == "static") return PromptMode::Static;
  if (s == "learnable") return PromptMode::Learnable;
  throw ConfigError("unknown generator mode: " + s);
}

std::string to_string(PromptMode m) {
  switch (m) {
    case PromptMode::Segment: return "segment";
    case PromptMode::Mean: return "mean";
    case PromptMode::Static: return "static";
    case PromptMode::Learnable: return "learnable";
  }
  return "segment";
}

void GeneratorConfig::validate() const {
  if (prompt_len < 1) throw ConfigError("generator: prompt_len must be >= 1");
  if (heads < 1 || hidden < heads || hidden % heads != 0)
    throw ConfigError("generator: hidden must be a positive multiple of heads");
  if (dropout < 0 || dropout >= 1) throw ConfigError("generator: dropout must lie in [0, 1)");
}

GeneratorParams GeneratorParams::init(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(substream(seed, 0x6e2));
  GeneratorParams p;
  p.cfg = cfg;
  p.f_u = LinearParams::init(cfg.hidden, cfg.d_model, rng);
  p.f_v = LinearParams::init(cfg.hidden, cfg.d_model, rng);
  p.query_mha = MhaParams::init(cfg.hidden, cfg.heads, rng);
  p.cross_mha = MhaParams::init(cfg.hidden, cfg.heads, rng);
  p.ln_q = LayerNormParams::init(cfg.hidden);
  p.ln_r = LayerNormParams::init(cfg.hidden);
  p.head1 = LinearParams::init(2 * cfg.hidden, cfg.hidden, rng);
  p.head2 = LinearParams::init(cfg.d_model, 2 * cfg.hidden, rng);
  p.static_prompt = randn(rng, cfg.prompt_len, cfg.d_model, 0.02);
  p.queries = randn(rng, cfg.prompt_len, cfg.hidden,
                    1.0 / std::sqrt(static_cast<Scalar>(cfg.hidden)));
  return p;
}

void GeneratorParams::register_params(ParamRegistry& reg, const std::string& prefix) {
  // only parameters the active mode actually uses take part in training
  if (cfg.mode == PromptMode::Static) {
    reg.add(prefix + ".static_prompt", &static_prompt, ParamGroup::Generator, &frozen);
    return;
  }
  if (cfg.mode == PromptMode::Learnable)
    reg.add(prefix + ".queries", &queries, ParamGroup::Generator, &frozen);
  else {
    reg.add(prefix + ".f_u", f_u, ParamGroup::Generator, &frozen);
    reg.add(prefix + ".query_mha", query_mha, ParamGroup::Generator, &frozen);
    reg.add(prefix + ".ln_q", ln_q, ParamGroup::Generator, &frozen);
  }
  if (cfg.cross_attention) {
    reg.add(prefix + ".f_v", f_v, ParamGroup::Generator, &frozen);
    reg.add(prefix + ".cross_mha", cross_mha, ParamGroup::Generator, &frozen);
    reg.add(prefix + ".ln_r", ln_r, ParamGroup::Generator, &frozen);
  }
  reg.add(prefix + ".head1", head1, ParamGroup::Generator, &frozen);
  reg.add(prefix + ".head2", head2, ParamGroup::Generator, &frozen);
}

BoundGenerator bound_generator(const TapeBinding& binding, const GeneratorConfig& cfg,
                               const std::string& prefix) {
  BoundGenerator g;
  if (cfg.mode == PromptMode::Static) {
    g.static_prompt = binding.at(prefix + ".static_prompt");
    return g;
  }
  if (cfg.mode == PromptMode::Learnable)
    g.queries = binding.at(prefix + ".queries");
  else {
    g.f_u = binding.linear(prefix + ".f_u");
    g.query_mha = binding.mha(prefix + ".query_mha", cfg.heads);
    g.ln_q = binding.layer_norm(prefix + ".ln_q");
  }
  if (cfg.cross_attention) {
    g.f_v = binding.linear(prefix + ".f_v");
    g.cross_mha = binding.mha(prefix + ".cross_mha", cfg.heads);
    g.ln_r = binding.layer_norm(prefix + ".ln_r");
  }
  g.head1 = binding.linear(prefix + ".head1");
  g.head2 = binding.linear(prefix + ".head2");
  return g;
}

BoundGenerator bind_generator(ad::Tape& t, const GeneratorParams& p, bool trainable) {
  BoundGenerator g;
  const bool train = trainable && !p.frozen;
  if (p.cfg.mode == PromptMode::Static) {
    g.static_prompt = t.leaf(p.static_prompt, train);
    return g;
  }
  if (p.cfg.mode == PromptMode::Learnable)
    g.queries = t.leaf(p.queries, train);
  else {
    g.f_u = bind(t, p.f_u, train);
    g.query_mha = bind(t, p.query_mha, train);
    g.ln_q = bind(t, p.ln_q, train);
  }
  if (p.cfg.cross_attention) {
    g.f_v = bind(t, p.f_v, train);
    g.cross_mha = bind(t, p.cross_mha, train);
    g.ln_r = bind(t, p.ln_r, train);
  }
  g.head1 = bind(t, p.head1, train);
  g.head2 = bind(t, p.head2, train);
  return g;
}

std::vector<std::pair<Index, Index>> balanced_segments(Index s, Index count) {
  std::vector<std::pair<Index, Index>> segs;
  segs.reserve(static_cast<std::size_t>(count));
  for (Index p = 0; p < count; ++p)
    segs.emplace_back(p * s / count, (p + 1) * s / count);
  return segs;
}

QueryResult init_queries(ad::Tape& t, const BoundGenerator& g, const GeneratorConfig& cfg,
                         ad::Value u, const std::vector<char>& instr_valid) {
  const Index s = u.val().rows();
  require_shape(s >= 1, "init_queries: empty instruction sequence");
  require_shape(static_cast<Index>(instr_valid.size()) == s,
                "init_queries: mask length mismatch");
  if (std::none_of(instr_valid.begin(), instr_valid.end(), [](char c) { return c != 0; }))
    throw DegenerateInputError("init_queries: no valid instruction position");

  ad::Value h_u = linear(t, g.f_u, u);
  ad::Value pooled;
  if (cfg.mode == PromptMode::Mean) {
    // one masked global mean broadcast to every query slot
    const std::vector<std::pair<Index, Index>> whole{{0, s}};
    pooled = ad::replicate_row(ad::segment_masked_mean(h_u, whole, instr_valid),
                               cfg.prompt_len);
  } else {
    pooled = ad::segment_masked_mean(h_u, balanced_segments(s, cfg.prompt_len), instr_valid);
  }
  MhaResult res =
      mha(t, g.query_mha, pooled, h_u, AttnMask{AttnMaskKind::KeyValid, &instr_valid});
  return {layer_norm(t, g.ln_q, res.out), std::move(res.attn)};
}

SynthesisResult synthesize(ad::Tape& t, const BoundGenerator& g, const GeneratorConfig& cfg,
                           ad::Value queries, ad::Value w, bool train_mode, Rng* dropout_rng) {
  require_shape(queries.val().rows() == cfg.prompt_len && queries.val().cols() == cfg.hidden,
                "synthesize: query shape mismatch");
  ad::Value r = queries;
  Mat cross_attn;
  if (cfg.cross_attention) {
    require_shape(w.val().cols() == cfg.d_model, "synthesize: visual width mismatch");
    ad::Value h_v = linear(t, g.f_v, w);
    MhaResult res = mha(t, g.cross_mha, queries, h_v, AttnMask{AttnMaskKind::None, nullptr});
    r = layer_norm(t, g.ln_r, ad::add(queries, res.out));
    cross_attn = std::move(res.attn);
  }
  if (train_mode && cfg.dropout > 0) {
    require_shape(dropout_rng != nullptr, "synthesize: dropout requires an rng in train mode");
    const Scalar keep = 1.0 - cfg.dropout;
    Mat mask(r.val().rows(), r.val().cols());
    for (Index i = 0; i < mask.rows(); ++i)
      for (Index j = 0; j < mask.cols(); ++j)
        mask(i, j) = dropout_rng->uniform() < keep ? 1.0 : 0.0;
    r = ad::dropout(r, mask, keep);
  }
  ad::Value prompt = linear(t, g.head2, ad::gelu(linear(t, g.head1, r)));
  return {prompt, std::move(cross_attn)};
}

PromptResult generate(ad::Tape& t, const BoundGenerator& g, const GeneratorConfig& cfg,
                      ad::Value w, ad::Value u, const std::vector<char>& instr_valid,
                      bool train_mode, Rng* dropout_rng) {
  if (cfg.mode == PromptMode::Static) {
    (void)w;
    (void)u;
    return {g.static_prompt, Mat(), Mat()};
  }
  if (cfg.mode == PromptMode::Learnable) {
    SynthesisResult syn = synthesize(t, g, cfg, g.queries, w, train_mode, dropout_rng);
    return {syn.prompt, Mat(), std::move(syn.cross_attn)};
  }
  QueryResult q = init_queries(t, g, cfg, u, instr_valid);
  SynthesisResult syn = synthesize(t, g, cfg, q.q, w, train_mode, dropout_rng);
  return {syn.prompt, std::move(q.attn), std::move(syn.cross_attn)};
}

Mat generate_prompt(const GeneratorParams& p, const Mat& w, const Mat& u,
                    const std::vector<char>& instr_valid) {
  ad::Tape t;
  BoundGenerator g = bind_generator(t, p, /*trainable=*/false);
  return generate(t, g, p.cfg, t.constant(w), t.constant(u), instr_valid,
                  /*train_mode=*/false, nullptr)
      .prompt.val();
}

}  // namespace drape

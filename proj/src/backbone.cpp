#include "drape/backbone.hpp"

#include <cmath>

#include "drape/errors.hpp"
#include "drape/rng.hpp"

namespace drape {

BackboneParams make_backbone(const BackboneConfig& cfg) {
  if (cfg.d_model % cfg.heads != 0)
    throw ConfigError("backbone: d_model must be divisible by heads");
  BackboneParams bb;
  bb.cfg = cfg;
  Rng rng(substream(cfg.seed, 0xbb));
  bb.phi = randn(rng, cfg.d_v_enc, cfg.d_v_raw, 1.0 / std::sqrt(static_cast<Scalar>(cfg.d_v_raw)));
  bb.token_tab = randn(rng, cfg.vocab, cfg.d_model, 1.0);
  bb.pos_tab = randn(rng, cfg.s_max, cfg.d_model, 0.5);
  bb.attn = MhaParams::init(cfg.d_model, cfg.heads, rng);
  bb.readout = LinearParams::init(cfg.vocab, cfg.d_model, rng);
  return bb;
}

Mat encode_image(const BackboneParams& bb, const Eigen::Ref<const Mat>& visual) {
  require_shape(visual.cols() == bb.cfg.d_v_raw, "encode_image: raw feature dim mismatch");
  return visual * bb.phi.transpose();
}

Mat embed_text(const BackboneParams& bb, std::span<const int> tokens) {
  const Index s = static_cast<Index>(tokens.size());
  if (s > bb.cfg.s_max) throw ShapeError("embed_text: sequence longer than s_max");
  Mat u(s, bb.cfg.d_model);
  for (Index p = 0; p < s; ++p) {
    const int tok = tokens[static_cast<std::size_t>(p)];
    if (tok < 0 || tok >= bb.cfg.vocab) throw VocabError("embed_text: token id out of range");
    u.row(p) = bb.token_tab.row(tok) + bb.pos_tab.row(p);
  }
  return u;
}

RowVec embed_token(const BackboneParams& bb, int token, Index position) {
  if (token < 0 || token >= bb.cfg.vocab) throw VocabError("embed_token: token id out of range");
  if (position < 0 || position >= bb.cfg.s_max)
    throw ShapeError("embed_token: position out of range");
  return bb.token_tab.row(token) + bb.pos_tab.row(position);
}

ad::Value decode_logits(ad::Tape& t, const BackboneParams& bb, ad::Value zprime) {
  require_shape(zprime.val().cols() == bb.cfg.d_model, "decode_logits: width mismatch");
  const BoundMha attn = bind(t, bb.attn, /*trainable=*/false);
  const BoundLinear readout = bind(t, bb.readout, /*trainable=*/false);
  ad::Value normed = layer_norm_fixed(t, zprime);
  MhaResult res = mha(t, attn, normed, normed, AttnMask{AttnMaskKind::Causal, nullptr});
  return linear(t, readout, layer_norm_fixed(t, res.out));
}

NllLoss nll_loss(ad::Tape& t, const BackboneParams& bb, ad::Value zprime,
                 std::span<const int> answer_tokens, Index first_answer_row) {
  require_shape(!answer_tokens.empty(), "nll_loss: answer must have length >= 1");
  require_shape(first_answer_row >= 1, "nll_loss: no conditioning row before the answer");
  require_shape(first_answer_row + static_cast<Index>(answer_tokens.size()) <=
                    zprime.val().rows(),
                "nll_loss: answer span exceeds the sequence");
  ad::Value logits = decode_logits(t, bb, zprime);
  std::vector<Index> rows(answer_tokens.size());
  std::vector<int> targets(answer_tokens.begin(), answer_tokens.end());
  for (std::size_t j = 0; j < answer_tokens.size(); ++j)
    rows[j] = first_answer_row + static_cast<Index>(j) - 1;
  ad::NllResult nll = ad::nll_from_logits(logits, rows, targets);
  return {nll.loss, std::move(nll.per_token)};
}

namespace {

int argmax_lowest_tie(const RowVec& logits) {
  Index best = 0;
  for (Index i = 1; i < logits.size(); ++i)
    if (logits(i) > logits(best)) best = i;
  return static_cast<int>(best);
}

}  // namespace

std::vector<int> greedy_decode(const BackboneParams& bb, const Mat& prefix, int steps,
                               Index first_text_pos) {
  require_shape(prefix.cols() == bb.cfg.d_model, "greedy_decode: width mismatch");
  require_shape(prefix.rows() >= 1, "greedy_decode: empty prefix");
  Mat seq = prefix;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (int j = 0; j < steps; ++j) {
    ad::Tape t;
    ad::Value logits = decode_logits(t, bb, t.constant(seq));
    const int tok = argmax_lowest_tie(logits.val().row(logits.val().rows() - 1));
    out.push_back(tok);
    seq.conservativeResize(seq.rows() + 1, Eigen::NoChange);
    seq.row(seq.rows() - 1) = embed_token(bb, tok, first_text_pos + j);
  }
  return out;
}

int exact_match(std::span<const int> pred, std::span<const int> gold) {
  if (pred.size() != gold.size()) return 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] != gold[i]) return 0;
  return 1;
}

}  // namespace drape

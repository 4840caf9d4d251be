#include "drape/nn.hpp"

#include <cmath>

namespace drape {

LinearParams LinearParams::init(Index out, Index in, Rng& rng) {
  LinearParams p;
  p.w = randn(rng, out, in, 1.0 / std::sqrt(static_cast<Scalar>(in)));
  p.b = Mat::Zero(1, out);
  return p;
}

LinearParams LinearParams::zero(Index out, Index in) {
  return {Mat::Zero(out, in), Mat::Zero(1, out)};
}

LayerNormParams LayerNormParams::init(Index n) {
  return {Mat::Ones(1, n), Mat::Zero(1, n)};
}

MhaParams MhaParams::init(Index width, int heads, Rng& rng) {
  if (heads < 1 || width % heads != 0)
    throw ConfigError("mha: width must be divisible by a positive head count");
  MhaParams p;
  p.q = LinearParams::init(width, width, rng);
  p.k = LinearParams::init(width, width, rng);
  p.v = LinearParams::init(width, width, rng);
  p.o = LinearParams::init(width, width, rng);
  p.heads = heads;
  return p;
}

BoundLinear bind(ad::Tape& t, const LinearParams& p, bool trainable) {
  return {t.leaf(p.w, trainable), t.leaf(p.b, trainable)};
}

BoundLayerNorm bind(ad::Tape& t, const LayerNormParams& p, bool trainable) {
  return {t.leaf(p.gain, trainable), t.leaf(p.shift, trainable)};
}

BoundMha bind(ad::Tape& t, const MhaParams& p, bool trainable) {
  return {bind(t, p.q, trainable), bind(t, p.k, trainable), bind(t, p.v, trainable),
          bind(t, p.o, trainable), p.heads};
}

ad::Value linear(ad::Tape& t, const BoundLinear& l, ad::Value x) {
  (void)t;
  return ad::linear(x, l.w, l.b);
}

ad::Value layer_norm(ad::Tape& t, const BoundLayerNorm& n, ad::Value x) {
  (void)t;
  return ad::layer_norm(x, n.gain, n.shift, kLayerNormEps);
}

ad::Value layer_norm_fixed(ad::Tape& t, ad::Value x) {
  const Index n = x.val().cols();
  return ad::layer_norm(x, t.constant(Mat::Ones(1, n)), t.constant(Mat::Zero(1, n)),
                        kLayerNormEps);
}

MhaResult mha(ad::Tape& t, const BoundMha& p, ad::Value query, ad::Value keyval,
              const AttnMask& mask) {
  const Index width = t.val(p.q.w.id).rows();
  require_shape(query.val().cols() == width, "mha: query width mismatch");
  require_shape(keyval.val().cols() == width, "mha: key/value width mismatch");
  const Index nq = query.val().rows();
  const Index nk = keyval.val().rows();
  const Index dk = width / p.heads;

  BoolArray allowed(nq, nk);
  switch (mask.kind) {
    case AttnMaskKind::None:
      allowed.setConstant(true);
      break;
    case AttnMaskKind::KeyValid: {
      require_shape(mask.key_valid != nullptr &&
                        static_cast<Index>(mask.key_valid->size()) == nk,
                    "mha: key mask length mismatch");
      for (Index j = 0; j < nk; ++j)
        allowed.col(j).setConstant((*mask.key_valid)[static_cast<std::size_t>(j)] != 0);
      break;
    }
    case AttnMaskKind::Causal: {
      require_shape(nq == nk, "mha: causal mask requires square attention");
      for (Index i = 0; i < nq; ++i)
        for (Index j = 0; j < nk; ++j) allowed(i, j) = j <= i;
      break;
    }
  }

  ad::Value q = linear(t, p.q, query);
  ad::Value k = linear(t, p.k, keyval);
  ad::Value v = linear(t, p.v, keyval);

  const Scalar inv_scale = 1.0 / std::sqrt(static_cast<Scalar>(dk));
  std::vector<ad::Value> heads;
  heads.reserve(static_cast<std::size_t>(p.heads));
  Mat attn_mean = Mat::Zero(nq, nk);
  for (int h = 0; h < p.heads; ++h) {
    const Index c0 = static_cast<Index>(h) * dk;
    ad::Value qh = ad::slice_cols(q, c0, dk);
    ad::Value kh = ad::slice_cols(k, c0, dk);
    ad::Value vh = ad::slice_cols(v, c0, dk);
    ad::Value scores = ad::scale(ad::matmul_nt(qh, kh), inv_scale);
    ad::Value weights = ad::masked_softmax(scores, allowed);
    attn_mean += weights.val();
    heads.push_back(ad::matmul(weights, vh));
  }
  attn_mean /= static_cast<Scalar>(p.heads);
  ad::Value merged = p.heads == 1 ? heads.front() : ad::concat_cols(heads);
  return {linear(t, p.o, merged), std::move(attn_mean)};
}

}  // namespace drape

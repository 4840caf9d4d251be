#pragma once

#include <string>
#include <vector>

#include "drape/autodiff.hpp"
#include "drape/rng.hpp"
#include "drape/types.hpp"

namespace drape {

constexpr Scalar kLayerNormEps = 1e-5;

struct LinearParams {
  Mat w;  // [out x in]
  Mat b;  // [1 x out]

  static LinearParams init(Index out, Index in, Rng& rng);
  static LinearParams zero(Index out, Index in);
};

struct LayerNormParams {
  Mat gain;   // [1 x n]
  Mat shift;  // [1 x n]

  static LayerNormParams init(Index n);
};

struct MhaParams {
  LinearParams q, k, v, o;  // all [width x width]
  int heads = 1;

  static MhaParams init(Index width, int heads, Rng& rng);
};

// Per-tape bound views of the parameter structs.
struct BoundLinear {
  ad::Value w, b;
};
struct BoundLayerNorm {
  ad::Value gain, shift;
};
struct BoundMha {
  BoundLinear q, k, v, o;
  int heads = 1;
};

// Direct binding (constants when trainable=false); used for frozen modules.
BoundLinear bind(ad::Tape& t, const LinearParams& p, bool trainable);
BoundLayerNorm bind(ad::Tape& t, const LayerNormParams& p, bool trainable);
BoundMha bind(ad::Tape& t, const MhaParams& p, bool trainable);

ad::Value linear(ad::Tape& t, const BoundLinear& l, ad::Value x);
ad::Value layer_norm(ad::Tape& t, const BoundLayerNorm& n, ad::Value x);
// parameter-free row normalization (gain 1, shift 0)
ad::Value layer_norm_fixed(ad::Tape& t, ad::Value x);

enum class AttnMaskKind { None, KeyValid, Causal };

struct AttnMask {
  AttnMaskKind kind = AttnMaskKind::None;
  const std::vector<char>* key_valid = nullptr;  // for KeyValid
};

struct MhaResult {
  ad::Value out;
  Mat attn;  // attention weights averaged over heads, [nq x nk]
};

// Scaled dot-product multi-head attention composed from tape primitives.
// Head masks guarantee exactly-zero weight on disallowed keys.
MhaResult mha(ad::Tape& t, const BoundMha& p, ad::Value query, ad::Value keyval,
              const AttnMask& mask);

}  // namespace drape

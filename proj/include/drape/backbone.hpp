#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "drape/nn.hpp"
#include "drape/types.hpp"

namespace drape {

struct BackboneConfig {
  Index d_v_raw = 16;   // raw visual feature dim (stream d_v)
  Index d_v_enc = 12;   // vision-encoder output dim (projector input)
  Index d_model = 32;   // decoder width
  int heads = 4;
  int vocab = 32;
  Index s_max = 10;
  std::uint64_t seed = 1;
};

// Every component here is fixed at construction and never updated: the
// vision-encoder output stage phi, the text embedder psi (token + positional
// tables) and a single pre-norm causal attention block with a linear readout.
struct BackboneParams {
  BackboneConfig cfg;
  Mat phi;        // [d_v_enc x d_v_raw]
  Mat token_tab;  // [vocab x d_model]
  Mat pos_tab;    // [s_max x d_model]
  MhaParams attn;          // width d_model
  LinearParams readout;    // [vocab x d_model]
};

BackboneParams make_backbone(const BackboneConfig& cfg);

// phi applied to raw visual rows: [m x d_v_raw] -> [m x d_v_enc].
Mat encode_image(const BackboneParams& bb, const Eigen::Ref<const Mat>& visual);

// token + positional embedding for every position (invalid positions are
// embedded too; masking is handled downstream). Returns [s x d_model].
Mat embed_text(const BackboneParams& bb, std::span<const int> tokens);

// single token embedded at an explicit text position
RowVec embed_token(const BackboneParams& bb, int token, Index position);

// Frozen decoder: pre-norm causal self-attention with residual, then a
// row-normalized linear readout. Returns [n x vocab] logits.
ad::Value decode_logits(ad::Tape& t, const BackboneParams& bb, ad::Value zprime);

struct NllLoss {
  ad::Value loss;                 // mean over answer positions
  std::vector<Scalar> per_token;  // -log p(y_j | ...) terms
};

// Teacher-forced autoregressive loss. zprime already contains the embedded
// answer tokens; first_answer_row is the row index of answer token 0, so the
// logits that predict answer j come from row first_answer_row + j - 1.
NllLoss nll_loss(ad::Tape& t, const BackboneParams& bb, ad::Value zprime,
                 std::span<const int> answer_tokens, Index first_answer_row);

// Argmax decoding for `steps` tokens, appending each decoded token embedded
// at text positions first_text_pos, first_text_pos + 1, ... Ties break
// toward the smallest token id.
std::vector<int> greedy_decode(const BackboneParams& bb, const Mat& prefix, int steps,
                               Index first_text_pos);

int exact_match(std::span<const int> pred, std::span<const int> gold);

}  // namespace drape

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drape/nn.hpp"
#include "drape/optimizer.hpp"
#include "drape/rng.hpp"
#include "drape/types.hpp"

namespace drape {

enum class PromptMode { Segment, Mean, Static, Learnable };

PromptMode prompt_mode_from_string(const std::string& s);
std::string to_string(PromptMode m);

struct GeneratorConfig {
  Index d_model = 32;   // LLM embedding width d
  Index hidden = 32;    // generator latent width H
  Index prompt_len = 4; // L_p
  int heads = 4;
  Scalar dropout = 0.1;
  PromptMode mode = PromptMode::Segment;
  bool cross_attention = true;  // ablation switch for the vision stage

  void validate() const;
};

// Task-specific cross-modal prompt generator: instruction-aware query
// initialization (segment pooling + self attention over instruction
// features) followed by vision-guided synthesis (cross attention + MLP
// head). Static and learnable-query variants skip the stages they replace.
struct GeneratorParams {
  GeneratorConfig cfg;
  LinearParams f_u, f_v;       // [H x d]
  MhaParams query_mha;         // width H, key-padding masked
  MhaParams cross_mha;         // width H
  LayerNormParams ln_q, ln_r;
  LinearParams head1;          // [2H x H]
  LinearParams head2;          // [d x 2H]
  Mat static_prompt;           // [L_p x d]  (Static mode)
  Mat queries;                 // [L_p x H]  (Learnable mode)
  bool frozen = false;

  static GeneratorParams init(const GeneratorConfig& cfg, std::uint64_t seed);
  void register_params(ParamRegistry& reg, const std::string& prefix) ;
};

struct BoundGenerator {
  BoundLinear f_u, f_v;
  BoundMha query_mha, cross_mha;
  BoundLayerNorm ln_q, ln_r;
  BoundLinear head1, head2;
  ad::Value static_prompt, queries;
};

BoundGenerator bound_generator(const TapeBinding& binding, const GeneratorConfig& cfg,
                               const std::string& prefix);
BoundGenerator bind_generator(ad::Tape& t, const GeneratorParams& p, bool trainable);

// Balanced contiguous partition of [0, s) into count segments:
// segment p covers [floor(p*s/count), floor((p+1)*s/count)).
std::vector<std::pair<Index, Index>> balanced_segments(Index s, Index count);

struct QueryResult {
  ad::Value q;     // [L_p x H]
  Mat attn;        // query-attention weights over instruction positions
};

// Instruction-aware query initialization (Segment and Mean pooling modes).
// Throws DegenerateInputError when no instruction position is valid.
QueryResult init_queries(ad::Tape& t, const BoundGenerator& g, const GeneratorConfig& cfg,
                         ad::Value u, const std::vector<char>& instr_valid);

struct SynthesisResult {
  ad::Value prompt;  // [L_p x d]
  Mat cross_attn;    // [L_p x m] cross-attention weights (empty if disabled)
};

SynthesisResult synthesize(ad::Tape& t, const BoundGenerator& g, const GeneratorConfig& cfg,
                           ad::Value queries, ad::Value w, bool train_mode, Rng* dropout_rng);

struct PromptResult {
  ad::Value prompt;
  Mat query_attn;
  Mat cross_attn;
};

// Full generator: mode-dependent composition of the two stages.
PromptResult generate(ad::Tape& t, const BoundGenerator& g, const GeneratorConfig& cfg,
                      ad::Value w, ad::Value u, const std::vector<char>& instr_valid,
                      bool train_mode, Rng* dropout_rng);

// Inference wrapper (no gradients, dropout off).
Mat generate_prompt(const GeneratorParams& p, const Mat& w, const Mat& u,
                    const std::vector<char>& instr_valid);

}  // namespace drape

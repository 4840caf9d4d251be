#pragma once

#include <cstdint>
#include <string>

#include "drape/generator.hpp"
#include "drape/router.hpp"
#include "drape/stream.hpp"
#include "drape/types.hpp"

namespace drape {

enum class RouterMode { Learned, Oracle, None };

RouterMode router_mode_from_string(const std::string& s);
std::string to_string(RouterMode m);

// Full experiment configuration. File format is flat key=value lines under
// [section] headers; '#' starts a comment. Unknown keys are rejected.
struct RunConfig {
  StreamConfig stream;

  struct Backbone {
    Index enc_dim = 12;    // vision-encoder output dim
    Index model_dim = 32;  // decoder width d
    int heads = 4;
  } backbone;

  struct Generator {
    Index prompt_len = 4;
    Index hidden = 32;
    int heads = 4;
    Scalar dropout = 0.1;
    PromptMode mode = PromptMode::Segment;
  } generator;

  struct Projector {
    Index hidden = 0;  // 0 = model_dim
  } projector;

  struct Router {
    Index embed_dim = 8;
    Scalar tau = 0.07;
    Scalar refine_lr = 0.05;
    int refine_steps = 100;
    RouterMode mode = RouterMode::Learned;
  } router;

  struct Trainer {
    int epochs = 1;
    int batch_size = 8;
    Scalar lr_generator = 1.0;
    Scalar lr_projector = 0.1;
    Scalar warmup_ratio = 0.03;
    Scalar eps = 0.99;  // null-space energy-retention threshold
    bool nullspace = true;
    bool cross_attention = true;
    bool project_biases = false;
  } trainer;

  std::uint64_t seed = 1;

  void validate() const;

  // stream seed follows the run seed so one knob reproduces the whole run
  StreamConfig stream_config() const;
  GeneratorConfig generator_config() const;
  RouterConfig router_config() const;
  Index projector_hidden() const { return projector.hidden > 0 ? projector.hidden : backbone.model_dim; }
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace drape

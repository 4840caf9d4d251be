#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "drape/autodiff.hpp"
#include "drape/nn.hpp"
#include "drape/types.hpp"

namespace drape {

enum class ParamGroup { Generator, Projector };

struct ParamEntry {
  std::string name;
  Mat* value = nullptr;
  ParamGroup group = ParamGroup::Generator;
  const bool* frozen = nullptr;  // nullptr = never frozen

  bool is_frozen() const { return frozen != nullptr && *frozen; }
};

// Named collection of trainable arrays. Owners keep the storage; the
// registry only references it, so it must not outlive the param structs.
class ParamRegistry {
 public:
  void add(std::string name, Mat* value, ParamGroup group, const bool* frozen = nullptr);
  void add(const std::string& prefix, LinearParams& p, ParamGroup g, const bool* frozen = nullptr);
  void add(const std::string& prefix, LayerNormParams& p, ParamGroup g,
           const bool* frozen = nullptr);
  void add(const std::string& prefix, MhaParams& p, ParamGroup g, const bool* frozen = nullptr);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  const ParamEntry& at(const std::string& name) const;
  bool contains(const std::string& name) const;

 private:
  std::vector<ParamEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

using Gradients = std::map<std::string, Mat>;

// Binds every registry entry as a tape leaf (needs_grad for unfrozen entries)
// and reads gradients back after Tape::backward.
class TapeBinding {
 public:
  TapeBinding(ad::Tape& tape, const ParamRegistry& reg);

  ad::Value at(const std::string& name) const;
  BoundLinear linear(const std::string& prefix) const;
  BoundLayerNorm layer_norm(const std::string& prefix) const;
  BoundMha mha(const std::string& prefix, int heads) const;

  // Gradients of all unfrozen entries (zero for untouched parameters).
  Gradients grads() const;

 private:
  ad::Tape* tape_;
  const ParamRegistry* reg_;
  std::map<std::string, ad::Value> values_;
};

// Per-parameter gradient transformation applied before the update.
using GradHook = std::function<Mat(const Mat&)>;
using GradHooks = std::map<std::string, GradHook>;

// Plain gradient descent over the registry. Throws FrozenParamError if a
// gradient targets a frozen entry.
void sgd_step(const ParamRegistry& reg, const Gradients& grads, const GradHooks& hooks,
              Scalar lr_generator, Scalar lr_projector);

// Cosine decay with linear warmup; returns the multiplier in [0, 1].
Scalar lr_schedule(int step, int total_steps, Scalar warmup_ratio);

}  // namespace drape

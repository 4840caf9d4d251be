#include "drape/optimizer.hpp"

#include <cmath>

namespace drape {

void ParamRegistry::add(std::string name, Mat* value, ParamGroup group, const bool* frozen) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  index_[name] = entries_.size();
  entries_.push_back({std::move(name), value, group, frozen});
}

void ParamRegistry::add(const std::string& prefix, LinearParams& p, ParamGroup g,
                        const bool* frozen) {
  add(prefix + ".w", &p.w, g, frozen);
  add(prefix + ".b", &p.b, g, frozen);
}

void ParamRegistry::add(const std::string& prefix, LayerNormParams& p, ParamGroup g,
                        const bool* frozen) {
  add(prefix + ".gain", &p.gain, g, frozen);
  add(prefix + ".shift", &p.shift, g, frozen);
}

void ParamRegistry::add(const std::string& prefix, MhaParams& p, ParamGroup g,
                        const bool* frozen) {
  add(prefix + ".q", p.q, g, frozen);
  add(prefix + ".k", p.k, g, frozen);
  add(prefix + ".v", p.v, g, frozen);
  add(prefix + ".o", p.o, g, frozen);
}

const ParamEntry& ParamRegistry::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second];
}

bool ParamRegistry::contains(const std::string& name) const { return index_.count(name) > 0; }

TapeBinding::TapeBinding(ad::Tape& tape, const ParamRegistry& reg) : tape_(&tape), reg_(&reg) {
  for (const ParamEntry& e : reg.entries())
    values_.emplace(e.name, tape.leaf(*e.value, !e.is_frozen()));
}

ad::Value TapeBinding::at(const std::string& name) const {
  const auto it = values_.find(name);
  if (it == values_.end()) throw ConfigError("unbound parameter: " + name);
  return it->second;
}

BoundLinear TapeBinding::linear(const std::string& prefix) const {
  return {at(prefix + ".w"), at(prefix + ".b")};
}

BoundLayerNorm TapeBinding::layer_norm(const std::string& prefix) const {
  return {at(prefix + ".gain"), at(prefix + ".shift")};
}

BoundMha TapeBinding::mha(const std::string& prefix, int heads) const {
  return {linear(prefix + ".q"), linear(prefix + ".k"), linear(prefix + ".v"),
          linear(prefix + ".o"), heads};
}

Gradients TapeBinding::grads() const {
  Gradients out;
  for (const ParamEntry& e : reg_->entries()) {
    if (e.is_frozen()) continue;
    out.emplace(e.name, tape_->grad(values_.at(e.name)));
  }
  return out;
}

void sgd_step(const ParamRegistry& reg, const Gradients& grads, const GradHooks& hooks,
              Scalar lr_generator, Scalar lr_projector) {
  for (const auto& [name, grad] : grads) {
    const ParamEntry& e = reg.at(name);
    if (e.is_frozen()) throw FrozenParamError("update targets frozen parameter: " + name);
    require_shape(grad.rows() == e.value->rows() && grad.cols() == e.value->cols(),
                  "sgd_step: gradient shape mismatch for " + name);
    const auto hook = hooks.find(name);
    const Mat g = hook == hooks.end() ? grad : hook->second(grad);
    const Scalar lr = e.group == ParamGroup::Generator ? lr_generator : lr_projector;
    *e.value -= lr * g;
  }
}

Scalar lr_schedule(int step, int total_steps, Scalar warmup_ratio) {
  if (total_steps <= 0) return 1.0;
  const int warmup = std::max(1, static_cast<int>(std::lround(warmup_ratio * total_steps)));
  if (step < warmup) return static_cast<Scalar>(step + 1) / static_cast<Scalar>(warmup);
  if (total_steps <= warmup) return 1.0;
  const Scalar progress =
      static_cast<Scalar>(step - warmup) / static_cast<Scalar>(total_steps - warmup);
  return 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace drape

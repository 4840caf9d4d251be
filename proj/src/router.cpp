#include "drape/router.hpp"

#include <cmath>

#include "drape/errors.hpp"
#include "drape/rng.hpp"

namespace drape {

RouterEncoders RouterEncoders::init(int vocab, Index d_v_raw, Index d_r, std::uint64_t seed) {
  Rng rng(substream(seed, 0xc11b));
  RouterEncoders enc;
  enc.xi_table = randn(rng, vocab, d_r, 1.0);
  enc.gamma = randn(rng, d_r, d_v_raw, 1.0 / std::sqrt(static_cast<Scalar>(d_v_raw)));
  return enc;
}

Vec xi_embed(const RouterEncoders& enc, std::span<const int> tokens,
             std::span<const char> valid) {
  require_shape(tokens.size() == valid.size(), "xi_embed: mask length mismatch");
  Vec sum = Vec::Zero(enc.xi_table.cols());
  long long n = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!valid[i]) continue;
    const int tok = tokens[i];
    if (tok < 0 || tok >= enc.xi_table.rows()) throw VocabError("xi_embed: token out of range");
    sum += enc.xi_table.row(tok).transpose();
    ++n;
  }
  if (n == 0) throw DegenerateInputError("xi_embed: no valid instruction tokens");
  return sum / static_cast<Scalar>(n);
}

Vec gamma_embed(const RouterEncoders& enc, const Eigen::Ref<const Mat>& visual) {
  require_shape(visual.cols() == enc.gamma.cols(), "gamma_embed: feature dim mismatch");
  require_shape(visual.rows() >= 1, "gamma_embed: empty visual input");
  const Vec pooled = visual.colwise().mean().transpose();
  return enc.gamma * pooled;
}

RoutingFeature fuse_routing_parts(const Vec& xi_raw, const Vec& gamma_raw) {
  const Scalar nx = xi_raw.norm();
  const Scalar ng = gamma_raw.norm();
  if (nx == 0 || ng == 0)
    throw DegenerateInputError("routing_feature: zero embedding cannot be normalized");
  Vec e(xi_raw.size() + gamma_raw.size());
  e.head(xi_raw.size()) = xi_raw / nx;
  e.tail(gamma_raw.size()) = gamma_raw / ng;
  e.normalize();
  return {std::move(e)};
}

RoutingFeature routing_feature(const RouterEncoders& enc, const Sample& sample) {
  return fuse_routing_parts(xi_embed(enc, sample.text, sample.instr_valid),
                            gamma_embed(enc, sample.visual));
}

TaskPrototype init_prototype(const std::vector<RoutingFeature>& features, int task_id) {
  if (features.empty()) throw DegenerateInputError("init_prototype: empty feature list");
  Vec mean = Vec::Zero(features.front().e.size());
  for (const RoutingFeature& f : features) mean += f.e;
  mean /= static_cast<Scalar>(features.size());
  const Scalar n = mean.norm();
  if (n == 0) throw DegenerateInputError("init_prototype: zero mean embedding");
  return {mean / n, task_id};
}

namespace {

Scalar cosine(const Vec& a, const Vec& b) { return a.dot(b) / (a.norm() * b.norm()); }

// gradient of cos(e, c) w.r.t. c at unit-norm c (e unit as well)
Vec cosine_grad(const Vec& e, const Vec& c) { return e - e.dot(c) * c; }

}  // namespace

Scalar prototype_loss(const std::vector<RoutingFeature>& features, const Vec& c_t,
                      const std::vector<TaskPrototype>& prev, Scalar tau) {
  if (features.empty()) throw MissingCacheError("prototype_loss: empty feature cache");
  if (!(tau > 0)) throw ConfigError("prototype_loss: tau must be positive");
  Scalar total = 0;
  for (const RoutingFeature& f : features) {
    const Scalar own = std::exp(cosine(f.e, c_t) / tau);
    Scalar denom = own;
    for (const TaskPrototype& p : prev) denom += std::exp(cosine(f.e, p.c) / tau);
    total += -std::log(own / denom);
  }
  return total / static_cast<Scalar>(features.size());
}

TaskPrototype refine_prototype(const TaskPrototype& proto,
                               const std::vector<RoutingFeature>& cached,
                               const std::vector<TaskPrototype>& prev, Scalar tau, Scalar lr,
                               int steps, RefineTrace* trace) {
  if (cached.empty()) throw MissingCacheError("refine_prototype: empty feature cache");
  if (!(tau > 0)) throw ConfigError("refine_prototype: tau must be positive");
  TaskPrototype out = proto;
  if (trace) trace->loss.clear();
  for (int step = 0; step < steps; ++step) {
    if (trace) trace->loss.push_back(prototype_loss(cached, out.c, prev, tau));
    Vec grad = Vec::Zero(out.c.size());
    for (const RoutingFeature& f : cached) {
      const Scalar own = std::exp(cosine(f.e, out.c) / tau);
      Scalar denom = own;
      for (const TaskPrototype& p : prev) denom += std::exp(cosine(f.e, p.c) / tau);
      const Scalar p_own = own / denom;
      grad += -(1.0 - p_own) / tau * cosine_grad(f.e, out.c);
    }
    grad /= static_cast<Scalar>(cached.size());
    const Vec delta = lr * grad;
    if (delta.isZero(0.0)) continue;  // exact fixed point, keep bits untouched
    out.c -= delta;
    out.c.normalize();
  }
  if (trace) trace->loss.push_back(prototype_loss(cached, out.c, prev, tau));
  return out;
}

int route(const RoutingFeature& feature, const std::vector<TaskPrototype>& prototypes) {
  if (prototypes.empty()) throw DegenerateInputError("route: no registered prototypes");
  int best = 0;
  Scalar best_score = cosine(feature.e, prototypes.front().c);
  for (std::size_t i = 1; i < prototypes.size(); ++i) {
    const Scalar s = cosine(feature.e, prototypes[i].c);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  return prototypes[static_cast<std::size_t>(best)].task_id;
}

PrototypeRouter::PrototypeRouter(RouterConfig cfg, RouterEncoders enc)
    : cfg_(cfg), enc_(std::move(enc)) {}

void PrototypeRouter::register_task(int task_id) {
  if (cache_.empty()) throw MissingCacheError("register_task: no cached routing features");
  TaskPrototype proto = init_prototype(cache_, task_id);
  last_trace_.loss.clear();
  if (!protos_.empty())
    proto = refine_prototype(proto, cache_, protos_, cfg_.tau, cfg_.refine_lr,
                             cfg_.refine_steps, &last_trace_);
  protos_.push_back(std::move(proto));
  discard_cache();
}

int PrototypeRouter::route_sample(const Sample& s) const {
  return route(routing_feature(enc_, s), protos_);
}

}  // namespace drape

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "drape/errors.hpp"
#include "drape/stream.hpp"
#include "drape/types.hpp"

namespace drape {

struct RouterConfig {
  Index embed_dim = 8;    // d_r per modality
  Scalar tau = 0.07;
  Scalar refine_lr = 0.05;
  int refine_steps = 100;
  std::uint64_t seed = 1;
};

// Fixed seeded stand-ins for frozen CLIP encoders sharing one embedding
// space across tasks: bag-of-token-embeddings for text, a linear map of the
// pooled raw visual features for vision.
struct RouterEncoders {
  Mat xi_table;  // [vocab x d_r]
  Mat gamma;     // [d_r x d_v_raw]

  static RouterEncoders init(int vocab, Index d_v_raw, Index d_r, std::uint64_t seed);
};

struct RoutingFeature {
  Vec e;  // unit vector in R^{2 d_r}
};

struct TaskPrototype {
  Vec c;  // unit vector
  int task_id = -1;
};

Vec xi_embed(const RouterEncoders& enc, std::span<const int> tokens,
             std::span<const char> valid);
Vec gamma_embed(const RouterEncoders& enc, const Eigen::Ref<const Mat>& visual);

// normalize each part, concatenate, normalize the whole
RoutingFeature fuse_routing_parts(const Vec& xi_raw, const Vec& gamma_raw);
RoutingFeature routing_feature(const RouterEncoders& enc, const Sample& sample);

TaskPrototype init_prototype(const std::vector<RoutingFeature>& features, int task_id);

// Prototype classification loss: softmax over cosine similarities to the
// own prototype vs. all previous ones, temperature tau.
Scalar prototype_loss(const std::vector<RoutingFeature>& features, const Vec& c_t,
                      const std::vector<TaskPrototype>& prev, Scalar tau);

struct RefineTrace {
  std::vector<Scalar> loss;  // loss before each step, plus the final value
};

// Full-batch gradient descent on the classification loss w.r.t. c_t only,
// renormalizing to unit length after every step.
TaskPrototype refine_prototype(const TaskPrototype& proto,
                               const std::vector<RoutingFeature>& cached,
                               const std::vector<TaskPrototype>& prev, Scalar tau, Scalar lr,
                               int steps, RefineTrace* trace = nullptr);

// argmax of cosine similarity; ties resolve to the smallest task id
int route(const RoutingFeature& feature, const std::vector<TaskPrototype>& prototypes);

// Stateful wrapper owning the prototype list and the per-task feature cache.
class PrototypeRouter {
 public:
  PrototypeRouter() = default;
  PrototypeRouter(RouterConfig cfg, RouterEncoders enc);

  const RouterEncoders& encoders() const { return enc_; }
  const RouterConfig& config() const { return cfg_; }

  void cache(const RoutingFeature& f) { cache_.push_back(f); }
  bool has_cache() const { return !cache_.empty(); }
  std::size_t cache_size() const { return cache_.size(); }

  // mean-init (+ contrastive refinement for later tasks), then discard the
  // per-instance cache; only the compact prototype survives
  void register_task(int task_id);
  void discard_cache() { cache_.clear(); }

  int route_sample(const Sample& s) const;
  const std::vector<TaskPrototype>& prototypes() const { return protos_; }
  std::vector<TaskPrototype>& prototypes_mutable() { return protos_; }
  const RefineTrace& last_refine_trace() const { return last_trace_; }

 private:
  RouterConfig cfg_;
  RouterEncoders enc_;
  std::vector<TaskPrototype> protos_;
  std::vector<RoutingFeature> cache_;
  RefineTrace last_trace_;
};

}  // namespace drape

#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "drape/backbone.hpp"
#include "drape/config.hpp"
#include "drape/generator.hpp"
#include "drape/metrics.hpp"
#include "drape/nullspace.hpp"
#include "drape/projector.hpp"
#include "drape/router.hpp"
#include "drape/stream.hpp"

namespace drape {

struct StepRecord {
  int task = 0;  // zero-based
  int step = 0;
  Scalar loss = 0;
  Scalar lr_generator = 0, lr_projector = 0;
};

struct SpectrumRecord {
  int task = 0;
  int layer = 0;  // 1 or 2
  Index rank = 0;
  Vec spectrum;
};

struct InferResult {
  std::vector<int> tokens;
  int routed_task = -1;   // id actually used for generation
  int learned_route = -1; // prototype decision, recorded in every mode
};

// Sequential-task trainer: one generator per task, shared projector with
// tap collection, null-space hooks from the second task on, prototype
// registration after each task.
class ContinualTrainer {
 public:
  explicit ContinualTrainer(const RunConfig& cfg);

  // Trains the next task in sequence (task.id must equal tasks_done()).
  void train_task(const Task& task);

  int tasks_done() const { return static_cast<int>(frozen_generators()); }

  // true_task is required by oracle mode only
  InferResult infer(const Sample& sample, RouterMode mode, int true_task = -1) const;

  // cross-attention weights (prompt rows x visual tokens) that generator_id
  // produces for this sample; empty when the mode has no vision stage
  Mat cross_attention_probe(const Sample& sample, int generator_id) const;

  // exact-match accuracy (percentage) on each seen task's test split
  std::vector<Scalar> evaluate_stage(const TaskStream& stream,
                                     std::vector<std::pair<int, int>>* route_log = nullptr,
                                     std::vector<std::pair<int, int>>* used_log = nullptr) const;

  const RunConfig& config() const { return cfg_; }
  const BackboneParams& backbone() const { return backbone_; }
  const ProjectorParams& projector() const { return projector_; }
  ProjectorParams& projector_mutable() { return projector_; }
  const std::vector<GeneratorParams>& generators() const { return generators_; }
  std::vector<GeneratorParams>& generators_mutable() { return generators_; }
  const PrototypeRouter& router() const { return router_; }
  PrototypeRouter& router_mutable() { return router_; }
  const std::vector<MomentStats>& moments() const { return moments_; }
  const std::vector<ProjectionMatrix>& projections() const { return projections_; }
  const std::vector<StepRecord>& loss_log() const { return loss_log_; }
  const std::vector<SpectrumRecord>& spectrum_log() const { return spectrum_log_; }
  // prototype-refinement loss traces, one entry per task from the second on
  const std::vector<RefineTrace>& refine_log() const { return refine_log_; }

  // restore support (checkpoint loading)
  void restore_state(std::vector<GeneratorParams> gens, ProjectorParams proj,
                     PrototypeRouter router, std::vector<MomentStats> moments,
                     std::vector<ProjectionMatrix> projections);

 private:
  std::size_t frozen_generators() const;

  RunConfig cfg_;
  BackboneParams backbone_;
  ProjectorParams projector_;
  std::vector<GeneratorParams> generators_;
  PrototypeRouter router_;
  std::vector<MomentStats> moments_;            // one per projector layer
  std::vector<ProjectionMatrix> projections_;   // empty until the first task finished
  std::vector<StepRecord> loss_log_;
  std::vector<SpectrumRecord> spectrum_log_;
  std::vector<RefineTrace> refine_log_;
};

struct RunSummary {
  Scalar final_average = 0;
  Scalar bwt_mean = 0;
  Scalar ma_mean = 0;
  Scalar routing_accuracy = 0;  // learned-router accuracy at the final stage
};

struct RunOutputs {
  AccuracyMatrix accuracy;
  RunSummary summary;
  ConfusionMatrix confusion;  // learned routing decisions at the final stage
  std::vector<StepRecord> loss_log;
  std::vector<SpectrumRecord> spectrum_log;
  // (stage, true task, learned route, used generator) per evaluated sample
  std::vector<std::array<int, 4>> route_log;
};

// Full stream experiment: train every task, evaluating all seen tasks after
// each stage.
RunOutputs run_experiment(const RunConfig& cfg, ContinualTrainer* trainer_out = nullptr,
                          const TaskStream* stream_override = nullptr);

// evaluation parallelism cap; reads DRAPE_THREADS (>= 1), default 1
int evaluation_threads();

}  // namespace drape

#include "drape/trainer.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <thread>

#include "drape/gradcheck.hpp"
#include "drape/optimizer.hpp"

namespace drape {
namespace {

BackboneConfig backbone_config(const RunConfig& cfg) {
  BackboneConfig bb;
  bb.d_v_raw = cfg.stream.d_v;
  bb.d_v_enc = cfg.backbone.enc_dim;
  bb.d_model = cfg.backbone.model_dim;
  bb.heads = cfg.backbone.heads;
  bb.vocab = cfg.stream.vocab;
  bb.s_max = cfg.stream.s_max;
  bb.seed = substream(cfg.seed, 0xdec0d);
  return bb;
}

// text with answer and padding positions blanked; inference must not read
// the supervised response, and prompt masking makes this a no-op for P
std::vector<int> censored_text(const Sample& s) {
  std::vector<int> text(s.text.size(), kPadToken);
  for (std::size_t i = 0; i < text.size(); ++i)
    if (s.instr_valid[i]) text[i] = s.text[i];
  return text;
}

void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  const int workers = std::min(threads, n);
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w]() {
      for (int i = w; i < n; i += workers) body(i);
    });
  for (std::thread& th : pool) th.join();
}

}  // namespace

int evaluation_threads() {
  const char* env = std::getenv("DRAPE_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

ContinualTrainer::ContinualTrainer(const RunConfig& cfg)
    : cfg_(cfg),
      backbone_(make_backbone(backbone_config(cfg))),
      projector_(ProjectorParams::init(cfg.backbone.enc_dim, cfg.projector_hidden(),
                                       cfg.backbone.model_dim, substream(cfg.seed, 0x9607))),
      router_(cfg.router_config(),
              RouterEncoders::init(cfg.stream.vocab, cfg.stream.d_v, cfg.router.embed_dim,
                                   substream(cfg.seed, 0xc11b))) {
  cfg_.validate();
  moments_.push_back(MomentStats::zero(projector_.d_in()));
  moments_.push_back(MomentStats::zero(projector_.d_hidden()));
}

std::size_t ContinualTrainer::frozen_generators() const {
  std::size_t n = 0;
  for (const GeneratorParams& g : generators_)
    if (g.frozen) ++n;
  return n;
}

void ContinualTrainer::train_task(const Task& task) {
  const int t = tasks_done();
  if (task.id != t)
    throw SequencingError("train_task: expected task " + std::to_string(t) + ", got " +
                          std::to_string(task.id));
  if (task.train.empty()) throw DegenerateInputError("train_task: task has no training data");

  GeneratorConfig gen_cfg = cfg_.generator_config();
  generators_.push_back(
      GeneratorParams::init(gen_cfg, substream(cfg_.seed, 0x3000 + static_cast<std::uint64_t>(t))));
  GeneratorParams& gen = generators_.back();

  ParamRegistry reg;
  projector_.register_params(reg);
  gen.register_params(reg, "gen");

  GradHooks hooks;
  if (t > 0 && cfg_.trainer.nullspace) {
    const ProjectionMatrix& pi1 = projections_[0];
    const ProjectionMatrix& pi2 = projections_[1];
    hooks["proj.l1.w"] = [&pi1](const Mat& g) { return project_gradient(g, pi1); };
    hooks["proj.l2.w"] = [&pi2](const Mat& g) { return project_gradient(g, pi2); };
    if (cfg_.trainer.project_biases) {
      // homogeneous-coordinate limit: the constant bias direction is always
      // inside the retained subspace, so its projected update vanishes
      hooks["proj.l1.b"] = [](const Mat& g) { return Mat(Mat::Zero(g.rows(), g.cols())); };
      hooks["proj.l2.b"] = [](const Mat& g) { return Mat(Mat::Zero(g.rows(), g.cols())); };
    }
  }

  const int n_train = static_cast<int>(task.train.size());
  const int batch = cfg_.trainer.batch_size;
  const int steps_per_epoch = (n_train + batch - 1) / batch;
  const int total_steps = steps_per_epoch * cfg_.trainer.epochs;

  Rng dropout_rng(substream(cfg_.seed, 0x4000 + static_cast<std::uint64_t>(t)));
  int step = 0;
  for (int epoch = 0; epoch < cfg_.trainer.epochs; ++epoch) {
    std::vector<int> order(task.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(substream(cfg_.seed, 0x5000 + static_cast<std::uint64_t>(t) * 131 +
                                             static_cast<std::uint64_t>(epoch)));
    shuffle(shuffle_rng, order);

    for (int b0 = 0; b0 < n_train; b0 += batch, ++step) {
      const int bn = std::min(batch, n_train - b0);
      ad::Tape tape;
      TapeBinding binding(tape, reg);
      BoundProjector proj = bound_projector(binding);
      BoundGenerator bgen = bound_generator(binding, gen_cfg, "gen");

      ad::Value batch_loss;
      for (int i = 0; i < bn; ++i) {
        const Sample& s = task.train[static_cast<std::size_t>(order[static_cast<std::size_t>(b0 + i)])];
        if (epoch == 0) router_.cache(routing_feature(router_.encoders(), s));

        ad::Value venc = tape.constant(encode_image(backbone_, s.visual));
        ad::Value w = project(tape, proj, projector_, venc, /*collect=*/true);
        ad::Value u = tape.constant(embed_text(backbone_, s.text));
        PromptResult prompt =
            generate(tape, bgen, gen_cfg, w, u, s.instr_valid, /*train_mode=*/true, &dropout_rng);
        ad::Value zprime = ad::concat_rows({prompt.prompt, w, u});
        const Index first_answer_row = gen_cfg.prompt_len + cfg_.stream.m + s.instr_len;
        NllLoss nll = nll_loss(tape, backbone_, zprime, s.answer, first_answer_row);
        batch_loss = batch_loss.valid() ? ad::add(batch_loss, nll.loss) : nll.loss;
      }
      ad::Value loss = ad::scale(batch_loss, 1.0 / static_cast<Scalar>(bn));
      tape.backward(loss);

      const Scalar mult = lr_schedule(step, total_steps, cfg_.trainer.warmup_ratio);
      const Scalar lr_gen = cfg_.trainer.lr_generator * mult;
      const Scalar lr_proj = cfg_.trainer.lr_projector * mult;
      sgd_step(reg, binding.grads(), hooks, lr_gen, lr_proj);
      loss_log_.push_back({t, step, loss.val()(0, 0), lr_gen, lr_proj});
    }
  }

  // post-task steps: freeze, merge statistics, rebuild projections for the
  // next task, then register the routing prototype and drop the cache
  gen.frozen = true;

  const TapDrain drained = drain_taps(projector_);
  moments_[0] = update_moment(moments_[0], drained.gram1, drained.count1);
  moments_[1] = update_moment(moments_[1], drained.gram2, drained.count2);
  projections_.clear();
  projections_.push_back(compute_projection(moments_[0].m, cfg_.trainer.eps));
  projections_.push_back(compute_projection(moments_[1].m, cfg_.trainer.eps));
  for (int layer = 0; layer < 2; ++layer)
    spectrum_log_.push_back({t, layer + 1, projections_[static_cast<std::size_t>(layer)].rank,
                             projections_[static_cast<std::size_t>(layer)].spectrum});

  router_.register_task(t);
  if (t > 0) refine_log_.push_back(router_.last_refine_trace());
}

InferResult ContinualTrainer::infer(const Sample& sample, RouterMode mode, int true_task) const {
  const int done = tasks_done();
  if (done == 0) throw SequencingError("infer: no trained tasks");

  InferResult out;
  out.learned_route = router_.route_sample(sample);
  switch (mode) {
    case RouterMode::Learned:
      out.routed_task = out.learned_route;
      break;
    case RouterMode::Oracle:
      if (true_task < 0 || true_task >= done)
        throw BoundsError("infer: oracle mode needs a valid true task id");
      out.routed_task = true_task;
      break;
    case RouterMode::None:
      out.routed_task = done - 1;
      break;
  }

  const GeneratorParams& gen = generators_[static_cast<std::size_t>(out.routed_task)];
  const Mat venc = encode_image(backbone_, sample.visual);
  const Mat w = project(projector_, venc);
  const std::vector<int> text = censored_text(sample);
  const Mat u_full = embed_text(backbone_, text);
  const Mat prompt = generate_prompt(gen, w, u_full, sample.instr_valid);

  Mat prefix(prompt.rows() + w.rows() + sample.instr_len, backbone_.cfg.d_model);
  prefix.topRows(prompt.rows()) = prompt;
  prefix.middleRows(prompt.rows(), w.rows()) = w;
  prefix.bottomRows(sample.instr_len) = u_full.topRows(sample.instr_len);

  out.tokens = greedy_decode(backbone_, prefix, static_cast<int>(sample.answer.size()),
                             sample.instr_len);
  return out;
}

Mat ContinualTrainer::cross_attention_probe(const Sample& sample, int generator_id) const {
  if (generator_id < 0 || generator_id >= tasks_done())
    throw BoundsError("cross_attention_probe: generator id out of range");
  const GeneratorParams& gen = generators_[static_cast<std::size_t>(generator_id)];
  ad::Tape tape;
  const Mat w = project(projector_, encode_image(backbone_, sample.visual));
  const Mat u = embed_text(backbone_, censored_text(sample));
  BoundGenerator bg = bind_generator(tape, gen, /*trainable=*/false);
  return generate(tape, bg, gen.cfg, tape.constant(w), tape.constant(u), sample.instr_valid,
                  /*train_mode=*/false, nullptr)
      .cross_attn;
}

std::vector<Scalar> ContinualTrainer::evaluate_stage(
    const TaskStream& stream, std::vector<std::pair<int, int>>* route_log,
    std::vector<std::pair<int, int>>* used_log) const {
  const int done = tasks_done();
  if (done == 0) throw SequencingError("evaluate_stage: no trained tasks");
  const int threads = evaluation_threads();

  std::vector<Scalar> row;
  for (int s = 0; s < done; ++s) {
    const Task& task = stream.tasks[static_cast<std::size_t>(s)];
    const int n = static_cast<int>(task.test.size());
    if (n == 0) throw DegenerateInputError("evaluate_stage: task has no test samples");
    std::vector<int> match(static_cast<std::size_t>(n), 0);
    std::vector<int> learned(static_cast<std::size_t>(n), -1);
    std::vector<int> used(static_cast<std::size_t>(n), -1);
    parallel_for(n, threads, [&](int i) {
      const Sample& sample = task.test[static_cast<std::size_t>(i)];
      const InferResult res = infer(sample, cfg_.router.mode, s);
      match[static_cast<std::size_t>(i)] = exact_match(res.tokens, sample.answer);
      learned[static_cast<std::size_t>(i)] = res.learned_route;
      used[static_cast<std::size_t>(i)] = res.routed_task;
    });
    long long hits = 0;
    for (int i = 0; i < n; ++i) {
      hits += match[static_cast<std::size_t>(i)];
      if (route_log) route_log->emplace_back(s, learned[static_cast<std::size_t>(i)]);
      if (used_log) used_log->emplace_back(s, used[static_cast<std::size_t>(i)]);
    }
    row.push_back(100.0 * static_cast<Scalar>(hits) / static_cast<Scalar>(n));
  }
  return row;
}

void ContinualTrainer::restore_state(std::vector<GeneratorParams> gens, ProjectorParams proj,
                                     PrototypeRouter router, std::vector<MomentStats> moments,
                                     std::vector<ProjectionMatrix> projections) {
  generators_ = std::move(gens);
  projector_ = std::move(proj);
  router_ = std::move(router);
  moments_ = std::move(moments);
  projections_ = std::move(projections);
}

RunOutputs run_experiment(const RunConfig& cfg, ContinualTrainer* trainer_out,
                          const TaskStream* stream_override) {
  cfg.validate();
  const TaskStream stream = stream_override ? *stream_override : generate_stream(cfg.stream_config());
  ContinualTrainer local(cfg);
  ContinualTrainer& trainer = trainer_out ? *trainer_out : local;

  RunOutputs out;
  out.accuracy = AccuracyMatrix(cfg.stream.n_tasks);
  std::vector<std::pair<int, int>> final_routes;
  for (int t = 0; t < cfg.stream.n_tasks; ++t) {
    trainer.train_task(stream.tasks[static_cast<std::size_t>(t)]);
    std::vector<std::pair<int, int>> routes, used;
    out.accuracy.push_stage(trainer.evaluate_stage(stream, &routes, &used));
    for (std::size_t i = 0; i < routes.size(); ++i)
      out.route_log.push_back(
          {t, routes[i].first, routes[i].second, used[i].second});
    if (t == cfg.stream.n_tasks - 1) final_routes = std::move(routes);
  }

  const StageMetricSummary metrics = stage_metrics(out.accuracy);
  out.summary.final_average = metrics.final_avg;
  out.summary.bwt_mean = metrics.bwt_mean;
  out.summary.ma_mean = metrics.mean_acc_mean;

  long long correct = 0;
  for (const auto& [true_task, routed] : final_routes)
    if (true_task == routed) ++correct;
  out.summary.routing_accuracy =
      100.0 * static_cast<Scalar>(correct) / static_cast<Scalar>(final_routes.size());
  out.confusion = routing_confusion(final_routes, cfg.stream.n_tasks);

  out.loss_log = trainer.loss_log();
  out.spectrum_log = trainer.spectrum_log();
  return out;
}

}  // namespace drape

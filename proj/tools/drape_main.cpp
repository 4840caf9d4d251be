// drape: desk-scale continual instruction tuning with instance-specific
// cross-modal prompt generation, null-space projector preservation and
// prototype routing.
//
// Subcommands: run, gradcheck, metrics, routeprobe.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "drape/gradcheck.hpp"
#include "drape/metrics.hpp"
#include "drape/report.hpp"
#include "drape/trainer.hpp"

namespace {

using namespace drape;

struct Overrides {
  std::string config_path;
  std::string out_dir = "run_out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string router_mode, generator_mode;
  bool no_nullspace = false, no_crossattn = false;
  double eps = 0, tau = 0;
  bool eps_set = false, tau_set = false;
  int lp = 0, hidden = 0;
  bool export_attention = false;
};

RunConfig effective_config(const Overrides& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_run_config(o.config_path);
  if (o.seed_set) cfg.seed = o.seed;
  if (!o.router_mode.empty()) cfg.router.mode = router_mode_from_string(o.router_mode);
  if (!o.generator_mode.empty()) cfg.generator.mode = prompt_mode_from_string(o.generator_mode);
  if (o.no_nullspace) cfg.trainer.nullspace = false;
  if (o.no_crossattn) cfg.trainer.cross_attention = false;
  if (o.eps_set) cfg.trainer.eps = o.eps;
  if (o.tau_set) cfg.router.tau = o.tau;
  if (o.lp > 0) cfg.generator.prompt_len = o.lp;
  if (o.hidden > 0) cfg.generator.hidden = o.hidden;
  cfg.validate();
  return cfg;
}

int cmd_run(const Overrides& o) {
  const RunConfig cfg = effective_config(o);
  const std::filesystem::path out_dir(o.out_dir);
  std::filesystem::create_directories(out_dir / "checkpoints");
  std::filesystem::create_directories(out_dir / "logs");

  const TaskStream stream = generate_stream(cfg.stream_config());
  ContinualTrainer trainer(cfg);
  RunOutputs outputs;
  outputs.accuracy = AccuracyMatrix(cfg.stream.n_tasks);

  std::ofstream log(out_dir / "logs" / "run.log");
  std::vector<std::pair<int, int>> final_routes;
  for (int t = 0; t < cfg.stream.n_tasks; ++t) {
    trainer.train_task(stream.tasks[static_cast<std::size_t>(t)]);
    save_checkpoint(out_dir / "checkpoints" / ("task_" + std::to_string(t + 1)), trainer);
    std::vector<std::pair<int, int>> routes, used;
    const std::vector<Scalar> row = trainer.evaluate_stage(stream, &routes, &used);
    outputs.accuracy.push_stage(row);
    for (std::size_t i = 0; i < routes.size(); ++i)
      outputs.route_log.push_back({t, routes[i].first, routes[i].second, used[i].second});
    log << "stage " << (t + 1) << " accuracies:";
    for (const Scalar a : row) log << " " << round_report(a);
    log << "\n";
    if (t == cfg.stream.n_tasks - 1) final_routes = std::move(routes);
  }

  const StageMetricSummary metrics = stage_metrics(outputs.accuracy);
  outputs.summary.final_average = metrics.final_avg;
  outputs.summary.bwt_mean = metrics.bwt_mean;
  outputs.summary.ma_mean = metrics.mean_acc_mean;
  long long correct = 0;
  for (const auto& [true_task, routed] : final_routes)
    if (true_task == routed) ++correct;
  outputs.summary.routing_accuracy =
      100.0 * static_cast<Scalar>(correct) / static_cast<Scalar>(final_routes.size());
  outputs.confusion = routing_confusion(final_routes, cfg.stream.n_tasks);
  outputs.loss_log = trainer.loss_log();
  outputs.spectrum_log = trainer.spectrum_log();

  write_run_reports(out_dir, cfg, outputs);

  if (o.export_attention && cfg.trainer.cross_attention &&
      cfg.generator.mode != PromptMode::Static) {
    std::ofstream csv(out_dir / "reports" / "cross_attention.csv");
    csv << "task,sample,used_generator,prompt_row,visual_col,weight\n";
    csv << std::setprecision(9);
    for (int t = 0; t < cfg.stream.n_tasks; ++t) {
      const Task& task = stream.tasks[static_cast<std::size_t>(t)];
      for (std::size_t i = 0; i < task.test.size(); ++i) {
        const InferResult res = trainer.infer(task.test[i], cfg.router.mode, t);
        const Mat attn = trainer.cross_attention_probe(task.test[i], res.routed_task);
        for (Index r = 0; r < attn.rows(); ++r)
          for (Index c = 0; c < attn.cols(); ++c)
            csv << (t + 1) << "," << i << "," << (res.routed_task + 1) << "," << (r + 1) << ","
                << (c + 1) << "," << attn(r, c) << "\n";
      }
    }
  }

  std::cout << summary_json(cfg, outputs);
  return 0;
}

int cmd_gradcheck() {
  // small double-precision instance covering generator, projector and loss
  const GradcheckSuiteReport report = run_gradcheck_suite(20);
  for (const auto& [name, rel] : report.per_module)
    std::cout << std::left << std::setw(28) << name << " max rel err " << std::scientific
              << std::setprecision(3) << rel << "\n";
  std::cout << "overall max rel err " << std::scientific << std::setprecision(3)
            << report.max_rel_err << (report.passed ? "  [ok]" : "  [FAIL]") << "\n";
  return report.passed ? 0 : 1;
}

int cmd_metrics(const std::string& matrix_path) {
  std::ifstream in(matrix_path, std::ios::binary);
  if (!in) {
    std::cerr << "metrics: cannot open " << matrix_path << "\n";
    return 2;
  }
  const AccuracyMatrix a = AccuracyMatrix::from_csv(in);
  const StageMetricSummary s = stage_metrics(a);
  std::cout << std::fixed << std::setprecision(2);
  std::cout << "Average " << round_report(s.final_avg) << "\n";
  for (std::size_t i = 0; i < s.bwt.size(); ++i) {
    const int t = static_cast<int>(i) + 2;
    std::cout << "B_" << t << " " << round_report(s.bwt[i]) << "  M_" << t << " "
              << round_report(s.mean_acc[i]) << "\n";
  }
  if (!s.bwt.empty())
    std::cout << "B_mean " << round_report(s.bwt_mean) << "\nM_mean "
              << round_report(s.mean_acc_mean) << "\n";
  return 0;
}

int cmd_routeprobe(const std::string& checkpoint_dir) {
  ContinualTrainer trainer = load_checkpoint(checkpoint_dir);
  if (trainer.tasks_done() == 0) {
    std::cerr << "routeprobe: checkpoint has no trained tasks\n";
    return 2;
  }
  const TaskStream stream = generate_stream(trainer.config().stream_config());
  std::vector<std::pair<int, int>> routes;
  for (int s = 0; s < trainer.tasks_done(); ++s) {
    const Task& task = stream.tasks[static_cast<std::size_t>(s)];
    long long hit = 0;
    for (const Sample& sample : task.test) {
      const int routed = trainer.router().route_sample(sample);
      routes.emplace_back(s, routed);
      if (routed == s) ++hit;
    }
    std::cout << "task " << (s + 1) << " routing accuracy "
              << std::fixed << std::setprecision(2)
              << 100.0 * static_cast<Scalar>(hit) / static_cast<Scalar>(task.test.size())
              << "\n";
  }
  const ConfusionMatrix cm = routing_confusion(routes, trainer.tasks_done());
  write_confusion_csv(std::cout, cm);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale continual instruction tuning simulator"};
  app.require_subcommand(1);

  Overrides o;
  CLI::App* run = app.add_subcommand("run", "train a full task stream and emit reports");
  run->add_option("--config", o.config_path, "config file (flat key=value with sections)");
  run->add_option("--seed", o.seed, "run seed")->each([&](const std::string&) { o.seed_set = true; });
  run->add_option("--out", o.out_dir, "run directory");
  run->add_option("--router-mode", o.router_mode, "learned|oracle|none");
  run->add_option("--generator-mode", o.generator_mode, "segment|mean|static|learnable");
  run->add_flag("--no-nullspace", o.no_nullspace, "disable null-space gradient projection");
  run->add_flag("--no-crossattn", o.no_crossattn, "disable the vision cross-attention stage");
  run->add_option("--eps", o.eps, "energy-retention threshold")
      ->each([&](const std::string&) { o.eps_set = true; });
  run->add_option("--lp", o.lp, "prompt length");
  run->add_option("--hidden", o.hidden, "generator hidden width");
  run->add_option("--tau", o.tau, "router temperature")
      ->each([&](const std::string&) { o.tau_set = true; });
  run->add_flag("--export-attention", o.export_attention,
                "write per-sample prompt-to-visual attention weights to CSV");

  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference verification of all gradients");

  std::string matrix_path;
  CLI::App* metrics_cmd =
      app.add_subcommand("metrics", "recompute stage metrics from an accuracy-matrix CSV");
  metrics_cmd->add_option("--matrix", matrix_path, "accuracy matrix CSV")->required();

  std::string checkpoint_dir;
  CLI::App* routeprobe_cmd =
      app.add_subcommand("routeprobe", "report routing accuracy for a checkpoint");
  routeprobe_cmd->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return cmd_run(o);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck();
    if (metrics_cmd->parsed()) return cmd_metrics(matrix_path);
    if (routeprobe_cmd->parsed()) return cmd_routeprobe(checkpoint_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

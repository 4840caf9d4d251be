#include "drape/report.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "drape/checkpoint.hpp"

namespace drape {
namespace {

std::string two_dp(Scalar v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << round_report(v);
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << body;
}

void add_linear(CheckpointWriter& w, const std::string& prefix, const LinearParams& p) {
  w.add_array(prefix + ".w", p.w);
  w.add_array(prefix + ".b", p.b);
}

void add_mha(CheckpointWriter& w, const std::string& prefix, const MhaParams& p) {
  add_linear(w, prefix + ".q", p.q);
  add_linear(w, prefix + ".k", p.k);
  add_linear(w, prefix + ".v", p.v);
  add_linear(w, prefix + ".o", p.o);
}

LinearParams read_linear(const CheckpointReader& r, const std::string& prefix) {
  return {r.array(prefix + ".w"), r.array(prefix + ".b")};
}

MhaParams read_mha(const CheckpointReader& r, const std::string& prefix, int heads) {
  MhaParams p;
  p.q = read_linear(r, prefix + ".q");
  p.k = read_linear(r, prefix + ".k");
  p.v = read_linear(r, prefix + ".v");
  p.o = read_linear(r, prefix + ".o");
  p.heads = heads;
  return p;
}

Mat scalar_mat(Scalar v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return m;
}

}  // namespace

std::string summary_json(const RunConfig& cfg, const RunOutputs& out) {
  std::ostringstream js;
  js << "{\n";
  js << "  \"final_average\": " << two_dp(out.summary.final_average) << ",\n";
  js << "  \"bwt_mean\": " << two_dp(out.summary.bwt_mean) << ",\n";
  js << "  \"ma_mean\": " << two_dp(out.summary.ma_mean) << ",\n";
  js << "  \"routing_accuracy\": " << two_dp(out.summary.routing_accuracy) << ",\n";
  js << "  \"config\": {\n";
  js << "    \"seed\": " << cfg.seed << ",\n";
  js << "    \"n_tasks\": " << cfg.stream.n_tasks << ",\n";
  js << "    \"samples_per_task\": " << cfg.stream.samples_per_task << ",\n";
  js << "    \"separation\": " << cfg.stream.separation << ",\n";
  js << "    \"router_mode\": \"" << to_string(cfg.router.mode) << "\",\n";
  js << "    \"generator_mode\": \"" << to_string(cfg.generator.mode) << "\",\n";
  js << "    \"prompt_len\": " << cfg.generator.prompt_len << ",\n";
  js << "    \"hidden\": " << cfg.generator.hidden << ",\n";
  js << "    \"tau\": " << cfg.router.tau << ",\n";
  js << "    \"eps\": " << cfg.trainer.eps << ",\n";
  js << "    \"epochs\": " << cfg.trainer.epochs << ",\n";
  js << "    \"batch_size\": " << cfg.trainer.batch_size << ",\n";
  js << "    \"lr_generator\": " << cfg.trainer.lr_generator << ",\n";
  js << "    \"lr_projector\": " << cfg.trainer.lr_projector << ",\n";
  js << "    \"nullspace\": " << (cfg.trainer.nullspace ? "true" : "false") << ",\n";
  js << "    \"cross_attention\": " << (cfg.trainer.cross_attention ? "true" : "false") << "\n";
  js << "  }\n";
  js << "}\n";
  return js.str();
}

void write_confusion_csv(std::ostream& os, const ConfusionMatrix& cm) {
  os << "true_task";
  for (Index c = 0; c < cm.rows.cols(); ++c) os << ",routed_" << (c + 1);
  os << "\n";
  for (Index r = 0; r < cm.rows.rows(); ++r) {
    os << (r + 1);
    for (Index c = 0; c < cm.rows.cols(); ++c)
      os << "," << std::fixed << std::setprecision(2) << round_report(cm.rows(r, c));
    os << "\n";
  }
}

void write_run_reports(const std::filesystem::path& out_dir, const RunConfig& cfg,
                       const RunOutputs& out) {
  std::filesystem::create_directories(out_dir / "reports");
  write_file(out_dir / "config.txt", serialize_run_config(cfg));
  write_file(out_dir / "summary.json", summary_json(cfg, out));

  {
    std::ostringstream csv;
    out.accuracy.to_csv(csv);
    write_file(out_dir / "reports" / "accuracy_matrix.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "stage,bwt,mean_acc\n";
    for (int t = 1; t <= out.accuracy.stages_done(); ++t) {
      csv << t << ",";
      if (t >= 2) csv << two_dp(backward_transfer(out.accuracy, t));
      csv << "," << two_dp(mean_accuracy(out.accuracy, t)) << "\n";
    }
    write_file(out_dir / "reports" / "stage_metrics.csv", csv.str());
  }
  {
    std::ostringstream csv;
    write_confusion_csv(csv, out.confusion);
    write_file(out_dir / "reports" / "confusion.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "task,step,loss,lr_generator,lr_projector\n";
    csv << std::setprecision(9);
    for (const StepRecord& r : out.loss_log)
      csv << (r.task + 1) << "," << r.step << "," << r.loss << "," << r.lr_generator << ","
          << r.lr_projector << "\n";
    write_file(out_dir / "reports" / "loss_curve.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "task,layer,rank,index,sigma\n";
    csv << std::setprecision(9);
    for (const SpectrumRecord& r : out.spectrum_log)
      for (Index i = 0; i < r.spectrum.size(); ++i)
        csv << (r.task + 1) << "," << r.layer << "," << r.rank << "," << (i + 1) << ","
            << r.spectrum(i) << "\n";
    write_file(out_dir / "reports" / "spectra.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "stage,true_task,learned_route,used_generator\n";
    for (const auto& e : out.route_log)
      csv << (e[0] + 1) << "," << (e[1] + 1) << "," << (e[2] + 1) << "," << (e[3] + 1) << "\n";
    write_file(out_dir / "reports" / "routing_log.csv", csv.str());
  }
}

void save_checkpoint(const std::filesystem::path& dir, const ContinualTrainer& trainer) {
  CheckpointWriter w;
  w.set_meta("format", "1");
  w.set_meta("tasks_done", std::to_string(trainer.tasks_done()));
  w.set_meta("seed", std::to_string(trainer.config().seed));
  w.set_config(serialize_run_config(trainer.config()));

  const BackboneParams& bb = trainer.backbone();
  w.add_array("backbone.phi", bb.phi);
  w.add_array("backbone.token_tab", bb.token_tab);
  w.add_array("backbone.pos_tab", bb.pos_tab);
  add_mha(w, "backbone.attn", bb.attn);
  add_linear(w, "backbone.readout", bb.readout);

  const ProjectorParams& proj = trainer.projector();
  add_linear(w, "proj.l1", proj.l1);
  add_linear(w, "proj.l2", proj.l2);

  for (std::size_t k = 0; k < trainer.generators().size(); ++k) {
    const GeneratorParams& g = trainer.generators()[k];
    const std::string p = "gen" + std::to_string(k);
    add_linear(w, p + ".f_u", g.f_u);
    add_linear(w, p + ".f_v", g.f_v);
    add_mha(w, p + ".query_mha", g.query_mha);
    add_mha(w, p + ".cross_mha", g.cross_mha);
    w.add_array(p + ".ln_q.gain", g.ln_q.gain);
    w.add_array(p + ".ln_q.shift", g.ln_q.shift);
    w.add_array(p + ".ln_r.gain", g.ln_r.gain);
    w.add_array(p + ".ln_r.shift", g.ln_r.shift);
    add_linear(w, p + ".head1", g.head1);
    add_linear(w, p + ".head2", g.head2);
    w.add_array(p + ".static_prompt", g.static_prompt);
    w.add_array(p + ".queries", g.queries);
  }

  const std::vector<TaskPrototype>& protos = trainer.router().prototypes();
  Mat proto_mat(static_cast<Index>(protos.size()),
                protos.empty() ? 2 * trainer.config().router.embed_dim : protos.front().c.size());
  for (std::size_t i = 0; i < protos.size(); ++i)
    proto_mat.row(static_cast<Index>(i)) = protos[i].c.transpose();
  w.add_array("router.prototypes", proto_mat);

  w.add_array("moments.l1.m", trainer.moments()[0].m);
  w.add_array("moments.l1.n", scalar_mat(static_cast<Scalar>(trainer.moments()[0].n)));
  w.add_array("moments.l2.m", trainer.moments()[1].m);
  w.add_array("moments.l2.n", scalar_mat(static_cast<Scalar>(trainer.moments()[1].n)));

  w.write(dir);
}

ContinualTrainer load_checkpoint(const std::filesystem::path& dir) {
  CheckpointReader r(dir);
  const RunConfig cfg = parse_run_config(r.config());
  ContinualTrainer trainer(cfg);

  const int tasks_done = std::stoi(r.meta("tasks_done"));
  std::vector<GeneratorParams> gens;
  const GeneratorConfig gen_cfg = cfg.generator_config();
  for (int k = 0; k < tasks_done; ++k) {
    const std::string p = "gen" + std::to_string(k);
    GeneratorParams g;
    g.cfg = gen_cfg;
    g.f_u = read_linear(r, p + ".f_u");
    g.f_v = read_linear(r, p + ".f_v");
    g.query_mha = read_mha(r, p + ".query_mha", gen_cfg.heads);
    g.cross_mha = read_mha(r, p + ".cross_mha", gen_cfg.heads);
    g.ln_q = {r.array(p + ".ln_q.gain"), r.array(p + ".ln_q.shift")};
    g.ln_r = {r.array(p + ".ln_r.gain"), r.array(p + ".ln_r.shift")};
    g.head1 = read_linear(r, p + ".head1");
    g.head2 = read_linear(r, p + ".head2");
    g.static_prompt = r.array(p + ".static_prompt");
    g.queries = r.array(p + ".queries");
    g.frozen = true;
    gens.push_back(std::move(g));
  }

  ProjectorParams proj;
  proj.l1 = read_linear(r, "proj.l1");
  proj.l2 = read_linear(r, "proj.l2");
  proj.tap1.reset(proj.d_in());
  proj.tap2.reset(proj.d_hidden());

  PrototypeRouter router(cfg.router_config(),
                         RouterEncoders::init(cfg.stream.vocab, cfg.stream.d_v,
                                              cfg.router.embed_dim, substream(cfg.seed, 0xc11b)));
  const Mat proto_mat = r.array("router.prototypes");
  for (Index i = 0; i < proto_mat.rows(); ++i)
    router.prototypes_mutable().push_back({proto_mat.row(i).transpose(), static_cast<int>(i)});

  std::vector<MomentStats> moments;
  moments.push_back({r.array("moments.l1.m"),
                     static_cast<long long>(r.array("moments.l1.n")(0, 0))});
  moments.push_back({r.array("moments.l2.m"),
                     static_cast<long long>(r.array("moments.l2.n")(0, 0))});

  std::vector<ProjectionMatrix> projections;
  if (tasks_done > 0) {
    projections.push_back(compute_projection(moments[0].m, cfg.trainer.eps));
    projections.push_back(compute_projection(moments[1].m, cfg.trainer.eps));
  }

  trainer.restore_state(std::move(gens), std::move(proj), std::move(router), std::move(moments),
                        std::move(projections));
  return trainer;
}

}  // namespace drape

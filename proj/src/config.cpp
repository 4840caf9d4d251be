#include "drape/config.hpp"

#include <fstream>
#include <sstream>

#include "drape/errors.hpp"
#include "drape/rng.hpp"

namespace drape {

RouterMode router_mode_from_string(const std::string& s) {
  if (s == "learned") return RouterMode::Learned;
  if (s == "oracle") return RouterMode::Oracle;
  if (s == "none") return RouterMode::None;
  throw ConfigError("unknown router mode: " + s);
}

std::string to_string(RouterMode m) {
  switch (m) {
    case RouterMode::Learned: return "learned";
    case RouterMode::Oracle: return "oracle";
    case RouterMode::None: return "none";
  }
  return "learned";
}

void RunConfig::validate() const {
  stream.validate();
  generator_config().validate();
  if (backbone.enc_dim < 1 || backbone.model_dim < 1)
    throw ConfigError("config: backbone dimensions must be positive");
  if (backbone.model_dim % backbone.heads != 0)
    throw ConfigError("config: model_dim must be divisible by backbone heads");
  if (!(trainer.eps > 0 && trainer.eps <= 1))
    throw ConfigError("config: eps must lie in (0, 1]");
  if (trainer.epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (trainer.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (!(trainer.lr_generator > 0) || !(trainer.lr_projector > 0))
    throw ConfigError("config: learning rates must be positive");
  if (!(trainer.warmup_ratio >= 0 && trainer.warmup_ratio < 1))
    throw ConfigError("config: warmup_ratio must lie in [0, 1)");
  if (router.embed_dim < 1) throw ConfigError("config: router embed_dim must be >= 1");
  if (!(router.tau > 0)) throw ConfigError("config: router tau must be positive");
  if (router.refine_steps < 0) throw ConfigError("config: refine_steps must be >= 0");
  if (!(router.refine_lr >= 0)) throw ConfigError("config: refine_lr must be >= 0");
}

StreamConfig RunConfig::stream_config() const {
  StreamConfig s = stream;
  s.seed = substream(seed, 0x57e4);
  return s;
}

GeneratorConfig RunConfig::generator_config() const {
  GeneratorConfig g;
  g.d_model = backbone.model_dim;
  g.hidden = generator.hidden;
  g.prompt_len = generator.prompt_len;
  g.heads = generator.heads;
  g.dropout = generator.dropout;
  g.mode = generator.mode;
  g.cross_attention = trainer.cross_attention;
  return g;
}

RouterConfig RunConfig::router_config() const {
  RouterConfig r;
  r.embed_dim = router.embed_dim;
  r.tau = router.tau;
  r.refine_lr = router.refine_lr;
  r.refine_steps = router.refine_steps;
  r.seed = seed;
  return r;
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: expected integer for " + key + ", got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const std::uint64_t x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: expected unsigned integer for " + key + ", got '" + v + "'");
  }
}

Scalar to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const Scalar x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: expected number for " + key + ", got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("config: expected boolean for " + key + ", got '" + v + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "stream.n_tasks") cfg.stream.n_tasks = static_cast<int>(to_int(key, val));
    else if (key == "stream.samples_per_task")
      cfg.stream.samples_per_task = static_cast<int>(to_int(key, val));
    else if (key == "stream.m") cfg.stream.m = to_int(key, val);
    else if (key == "stream.d_v") cfg.stream.d_v = to_int(key, val);
    else if (key == "stream.s_max") cfg.stream.s_max = to_int(key, val);
    else if (key == "stream.vocab") cfg.stream.vocab = static_cast<int>(to_int(key, val));
    else if (key == "stream.subspace_dim") cfg.stream.subspace_dim = to_int(key, val);
    else if (key == "stream.separation") cfg.stream.separation = to_real(key, val);
    else if (key == "backbone.enc_dim") cfg.backbone.enc_dim = to_int(key, val);
    else if (key == "backbone.model_dim") cfg.backbone.model_dim = to_int(key, val);
    else if (key == "backbone.heads") cfg.backbone.heads = static_cast<int>(to_int(key, val));
    else if (key == "generator.prompt_len") cfg.generator.prompt_len = to_int(key, val);
    else if (key == "generator.hidden") cfg.generator.hidden = to_int(key, val);
    else if (key == "generator.heads") cfg.generator.heads = static_cast<int>(to_int(key, val));
    else if (key == "generator.dropout") cfg.generator.dropout = to_real(key, val);
    else if (key == "generator.mode") cfg.generator.mode = prompt_mode_from_string(val);
    else if (key == "projector.hidden") cfg.projector.hidden = to_int(key, val);
    else if (key == "router.embed_dim") cfg.router.embed_dim = to_int(key, val);
    else if (key == "router.tau") cfg.router.tau = to_real(key, val);
    else if (key == "router.refine_lr") cfg.router.refine_lr = to_real(key, val);
    else if (key == "router.refine_steps")
      cfg.router.refine_steps = static_cast<int>(to_int(key, val));
    else if (key == "router.mode") cfg.router.mode = router_mode_from_string(val);
    else if (key == "trainer.epochs") cfg.trainer.epochs = static_cast<int>(to_int(key, val));
    else if (key == "trainer.batch_size")
      cfg.trainer.batch_size = static_cast<int>(to_int(key, val));
    else if (key == "trainer.lr_generator") cfg.trainer.lr_generator = to_real(key, val);
    else if (key == "trainer.lr_projector") cfg.trainer.lr_projector = to_real(key, val);
    else if (key == "trainer.warmup_ratio") cfg.trainer.warmup_ratio = to_real(key, val);
    else if (key == "trainer.eps") cfg.trainer.eps = to_real(key, val);
    else if (key == "trainer.nullspace") cfg.trainer.nullspace = to_bool(key, val);
    else if (key == "trainer.cross_attention")
      cfg.trainer.cross_attention = to_bool(key, val);
    else if (key == "trainer.project_biases")
      cfg.trainer.project_biases = to_bool(key, val);
    else if (key == "run.seed") cfg.seed = to_u64(key, val);
    else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key " + key);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "[stream]\n";
  out << "n_tasks = " << cfg.stream.n_tasks << "\n";
  out << "samples_per_task = " << cfg.stream.samples_per_task << "\n";
  out << "m = " << cfg.stream.m << "\n";
  out << "d_v = " << cfg.stream.d_v << "\n";
  out << "s_max = " << cfg.stream.s_max << "\n";
  out << "vocab = " << cfg.stream.vocab << "\n";
  out << "subspace_dim = " << cfg.stream.subspace_dim << "\n";
  out << "separation = " << cfg.stream.separation << "\n";
  out << "\n[backbone]\n";
  out << "enc_dim = " << cfg.backbone.enc_dim << "\n";
  out << "model_dim = " << cfg.backbone.model_dim << "\n";
  out << "heads = " << cfg.backbone.heads << "\n";
  out << "\n[generator]\n";
  out << "prompt_len = " << cfg.generator.prompt_len << "\n";
  out << "hidden = " << cfg.generator.hidden << "\n";
  out << "heads = " << cfg.generator.heads << "\n";
  out << "dropout = " << cfg.generator.dropout << "\n";
  out << "mode = " << to_string(cfg.generator.mode) << "\n";
  out << "\n[projector]\n";
  out << "hidden = " << cfg.projector.hidden << "\n";
  out << "\n[router]\n";
  out << "embed_dim = " << cfg.router.embed_dim << "\n";
  out << "tau = " << cfg.router.tau << "\n";
  out << "refine_lr = " << cfg.router.refine_lr << "\n";
  out << "refine_steps = " << cfg.router.refine_steps << "\n";
  out << "mode = " << to_string(cfg.router.mode) << "\n";
  out << "\n[trainer]\n";
  out << "epochs = " << cfg.trainer.epochs << "\n";
  out << "batch_size = " << cfg.trainer.batch_size << "\n";
  out << "lr_generator = " << cfg.trainer.lr_generator << "\n";
  out << "lr_projector = " << cfg.trainer.lr_projector << "\n";
  out << "warmup_ratio = " << cfg.trainer.warmup_ratio << "\n";
  out << "eps = " << cfg.trainer.eps << "\n";
  out << "nullspace = " << (cfg.trainer.nullspace ? "true" : "false") << "\n";
  out << "cross_attention = " << (cfg.trainer.cross_attention ? "true" : "false") << "\n";
  out << "project_biases = " << (cfg.trainer.project_biases ? "true" : "false") << "\n";
  out << "\n[run]\n";
  out << "seed = " << cfg.seed << "\n";
  return out.str();
}

}  // namespace drape

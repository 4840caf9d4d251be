#include "drape/stream.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>

#include "drape/errors.hpp"
#include "drape/rng.hpp"

namespace drape {

void StreamConfig::validate() const {
  if (n_tasks < 1) throw ConfigError("stream: n_tasks must be >= 1");
  if (samples_per_task < 2) throw ConfigError("stream: samples_per_task must be >= 2");
  if (m < 1) throw ConfigError("stream: m must be >= 1");
  if (d_v < 1) throw ConfigError("stream: d_v must be >= 1");
  if (vocab < 2) throw ConfigError("stream: vocab must be >= 2");
  if (subspace_dim < 1 || subspace_dim > d_v)
    throw ConfigError("stream: subspace_dim must lie in [1, d_v]");
  if (static_cast<Index>(n_tasks) * subspace_dim > d_v)
    throw ConfigError("stream: n_tasks * subspace_dim must not exceed d_v");
  if (s_max < 1 + kAnswerLen + 1)
    throw ConfigError("stream: s_max too small for instruction + answer");
  if (!(separation >= 0)) throw ConfigError("stream: separation must be >= 0");
}

namespace {

constexpr Scalar kNoiseFraction = 0.05;  // of per-row signal norm
constexpr Scalar kCoeffStd = 3.0;        // within-subspace coefficient spread

struct TokenLayout {
  int n_intents = 0;
  int filler_base = 0;
  int filler_range = 0;  // per task; 0 means fall back to intent tokens

  static TokenLayout make(const StreamConfig& cfg) {
    TokenLayout lay;
    lay.n_intents = std::clamp(cfg.vocab / 4, 1, 4);
    lay.filler_base = 1 + lay.n_intents;
    const int avail = cfg.vocab - lay.filler_base;
    lay.filler_range = avail > 0 ? std::max(1, avail / cfg.n_tasks) : 0;
    return lay;
  }

  int intent_token(int intent) const { return 1 + intent; }

  int filler_token(int task, Rng& rng, int vocab) const {
    const int avail = vocab - filler_base;
    if (avail <= 0) return 1 + rng.below(n_intents);
    return filler_base + (task * filler_range + rng.below(filler_range)) % avail;
  }
};

// Fixed per-task labeling rule: answer = argmax over vocab of
// R * [sqrt(m) * (basis^T v_mean - separation * e1); one-hot(intent)].
// Centering keeps the visual contribution zero-mean so answers vary within
// the task; ties break toward the smallest token id.
int rule_answer(const Mat& readout, const Mat& basis, const Mat& visual, Scalar separation,
                int intent, int n_intents, Index m) {
  const Vec mean = visual.colwise().mean().transpose();
  Vec coeff = basis.transpose() * mean;
  coeff(0) -= separation;
  Vec feat(coeff.size() + n_intents);
  feat.head(coeff.size()) = std::sqrt(static_cast<Scalar>(m)) / kCoeffStd * coeff;
  feat.tail(n_intents).setZero();
  feat(coeff.size() + intent) = 1.0;
  const Vec logits = readout * feat;
  Index best = 0;
  logits.maxCoeff(&best);
  for (Index i = 0; i < best; ++i)
    if (logits(i) == logits(best)) {
      best = i;
      break;
    }
  return static_cast<int>(best);
}

Sample make_sample(const StreamConfig& cfg, const TokenLayout& lay, const Mat& basis,
                   const Mat& readout, int task_id, Rng& rng) {
  Sample s;
  // visual rows: separation offset + in-subspace coefficients + isotropic noise
  s.visual.resize(cfg.m, cfg.d_v);
  for (Index r = 0; r < cfg.m; ++r) {
    Vec coeff = randn(rng, cfg.subspace_dim, 1, kCoeffStd);
    coeff(0) += cfg.separation;
    const Vec signal = basis * coeff;
    const Scalar noise_std =
        kNoiseFraction * signal.norm() / std::sqrt(static_cast<Scalar>(cfg.d_v));
    s.visual.row(r) = (signal + randn(rng, cfg.d_v, 1, noise_std)).transpose();
  }

  const int intent = rng.below(lay.n_intents);
  const int max_instr = static_cast<int>(cfg.s_max) - kAnswerLen;
  const int lo = std::min(2, max_instr);
  s.instr_len = lo + (max_instr > lo ? rng.below(max_instr - lo + 1) : 0);

  // fillers first, the designated intent token last, where the decoder
  // conditions for the first answer step
  s.text.assign(static_cast<std::size_t>(cfg.s_max), kPadToken);
  s.instr_valid.assign(static_cast<std::size_t>(cfg.s_max), 0);
  for (int p = 0; p + 1 < s.instr_len; ++p) {
    s.text[static_cast<std::size_t>(p)] = lay.filler_token(task_id, rng, cfg.vocab);
    s.instr_valid[static_cast<std::size_t>(p)] = 1;
  }
  s.text[static_cast<std::size_t>(s.instr_len - 1)] = lay.intent_token(intent);
  s.instr_valid[static_cast<std::size_t>(s.instr_len - 1)] = 1;

  const int answer =
      rule_answer(readout, basis, s.visual, cfg.separation, intent, lay.n_intents, cfg.m);
  s.answer.assign(1, answer);
  s.text[static_cast<std::size_t>(s.instr_len)] = answer;
  return s;
}

}  // namespace

TaskStream generate_stream(const StreamConfig& cfg) {
  cfg.validate();
  TaskStream stream;
  stream.cfg = cfg;

  // One shared random orthogonal frame; tasks take disjoint column blocks so
  // their subspaces are exactly orthogonal.
  Rng frame_rng(substream(cfg.seed, 0xba515));
  const Mat frame = Eigen::HouseholderQR<Mat>(randn(frame_rng, cfg.d_v, cfg.d_v, 1.0))
                        .householderQ() *
                    Mat::Identity(cfg.d_v, cfg.d_v);

  const TokenLayout lay = TokenLayout::make(cfg);
  stream.tasks.reserve(static_cast<std::size_t>(cfg.n_tasks));
  for (int k = 0; k < cfg.n_tasks; ++k) {
    Task task;
    task.id = k;
    task.basis = frame.middleCols(static_cast<Index>(k) * cfg.subspace_dim, cfg.subspace_dim);

    Rng rule_rng(substream(cfg.seed, 0x1000 + static_cast<std::uint64_t>(k)));
    const Mat readout =
        randn(rule_rng, cfg.vocab, cfg.subspace_dim + static_cast<Index>(lay.n_intents), 1.0);

    const int n = cfg.samples_per_task;
    const int n_train = (n * 4) / 5;  // 80/20 by index
    Rng sample_rng(substream(cfg.seed, 0x2000 + static_cast<std::uint64_t>(k)));
    for (int i = 0; i < n; ++i) {
      Sample s = make_sample(cfg, lay, task.basis, readout, k, sample_rng);
      if (i < n_train)
        task.train.push_back(std::move(s));
      else
        task.test.push_back(std::move(s));
    }
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

std::vector<Sample> sample_batch(const Task& task, Split split, std::span<const int> indices) {
  const std::vector<Sample>& pool = split == Split::Train ? task.train : task.test;
  std::vector<Sample> batch;
  batch.reserve(indices.size());
  for (const int idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= pool.size())
      throw BoundsError("sample_batch: index out of range");
    batch.push_back(pool[static_cast<std::size_t>(idx)]);
  }
  return batch;
}

}  // namespace drape

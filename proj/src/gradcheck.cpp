#include "drape/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "drape/rng.hpp"

namespace drape {
namespace {

Scalar eval_loss(const LossBuilder& build, const ParamRegistry& reg) {
  ad::Tape tape;
  TapeBinding binding(tape, reg);
  return build(tape, binding).val()(0, 0);
}

}  // namespace

GradCheckReport gradcheck(const LossBuilder& build, ParamRegistry& reg,
                          const GradCheckOptions& opt) {
  Gradients analytic;
  {
    ad::Tape tape;
    TapeBinding binding(tape, reg);
    ad::Value loss = build(tape, binding);
    tape.backward(loss);
    analytic = binding.grads();
  }

  GradCheckReport report;
  Rng pick(substream(opt.subsample_seed, 0x67c6));
  for (const ParamEntry& e : reg.entries()) {
    if (e.is_frozen()) continue;
    Mat& p = *e.value;
    const Mat& g = analytic.at(e.name);
    const Index total = p.size();
    std::vector<Index> flat;
    if (opt.entries_per_param > 0 && total > opt.entries_per_param) {
      for (int k = 0; k < opt.entries_per_param; ++k)
        flat.push_back(pick.below(static_cast<int>(total)));
    } else {
      flat.resize(static_cast<std::size_t>(total));
      for (Index i = 0; i < total; ++i) flat[static_cast<std::size_t>(i)] = i;
    }
    for (const Index idx : flat) {
      const Index r = idx % p.rows();
      const Index c = idx / p.rows();
      const Scalar saved = p(r, c);
      const Scalar h = opt.step_scale * std::max<Scalar>(1.0, std::abs(saved));
      // fourth-order central difference
      p(r, c) = saved + h;
      const Scalar p1 = eval_loss(build, reg);
      p(r, c) = saved - h;
      const Scalar m1 = eval_loss(build, reg);
      p(r, c) = saved + 2.0 * h;
      const Scalar p2 = eval_loss(build, reg);
      p(r, c) = saved - 2.0 * h;
      const Scalar m2 = eval_loss(build, reg);
      p(r, c) = saved;
      const Scalar fd = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
      const Scalar ad = g(r, c);
      const Scalar denom = std::max({std::abs(fd), std::abs(ad), Scalar(1e-4)});
      const Scalar rel = std::abs(fd - ad) / denom;
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = e.name;
        report.worst_row = r;
        report.worst_col = c;
      }
    }
  }
  return report;
}

}  // namespace drape

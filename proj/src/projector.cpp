#include "drape/projector.hpp"

#include "drape/rng.hpp"

namespace drape {

ProjectorParams ProjectorParams::init(Index d_in, Index d_hidden, Index d_out,
                                      std::uint64_t seed) {
  Rng rng(substream(seed, 0x9a07));
  ProjectorParams p;
  p.l1 = LinearParams::init(d_hidden, d_in, rng);
  p.l2 = LinearParams::init(d_out, d_hidden, rng);
  p.tap1.reset(d_in);
  p.tap2.reset(d_hidden);
  return p;
}

void ProjectorParams::register_params(ParamRegistry& reg, const std::string& prefix) {
  reg.add(prefix + ".l1", l1, ParamGroup::Projector);
  reg.add(prefix + ".l2", l2, ParamGroup::Projector);
}

BoundProjector bound_projector(const TapeBinding& binding, const std::string& prefix) {
  return {binding.linear(prefix + ".l1"), binding.linear(prefix + ".l2")};
}

ad::Value project(ad::Tape& t, const BoundProjector& bound, ProjectorParams& p, ad::Value x,
                  bool collect) {
  require_shape(x.val().cols() == p.d_in(), "project: input feature dim mismatch");
  if (collect) p.tap1.observe(x.val());
  ad::Value hidden = ad::gelu(linear(t, bound.l1, x));
  if (collect) p.tap2.observe(hidden.val());
  return linear(t, bound.l2, hidden);
}

Mat project(const ProjectorParams& p, const Eigen::Ref<const Mat>& x) {
  require_shape(x.cols() == p.d_in(), "project: input feature dim mismatch");
  ad::Tape t;
  BoundProjector bound{bind(t, p.l1, false), bind(t, p.l2, false)};
  return linear(t, bound.l2, ad::gelu(linear(t, bound.l1, t.constant(x)))).val();
}

TapDrain drain_taps(ProjectorParams& p) {
  TapDrain d{p.tap1.gram, p.tap2.gram, p.tap1.count, p.tap2.count};
  p.tap1.reset(p.d_in());
  p.tap2.reset(p.d_hidden());
  return d;
}

}  // namespace drape

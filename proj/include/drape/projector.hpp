#pragma once

#include <cstdint>

#include "drape/nn.hpp"
#include "drape/optimizer.hpp"
#include "drape/types.hpp"

namespace drape {

// Streaming second-moment accumulator for one linear layer's inputs. Only
// the Gram sum and the row count are kept, never the features themselves.
struct LayerTap {
  Mat gram;  // [d_in x d_in]
  long long count = 0;

  void reset(Index d) {
    gram = Mat::Zero(d, d);
    count = 0;
  }
  void observe(const Eigen::Ref<const Mat>& rows) {
    gram.noalias() += rows.transpose() * rows;
    count += rows.rows();
  }
};

// Trainable two-layer GELU MLP mapping encoder features to decoder width.
// project() with collect=true mutates the taps; training-time calls must be
// serialized by the caller. collect=false is pure.
struct ProjectorParams {
  LinearParams l1;  // [d_hidden x d_in]
  LinearParams l2;  // [d_out x d_hidden]
  LayerTap tap1, tap2;

  Index d_in() const { return l1.w.cols(); }
  Index d_hidden() const { return l1.w.rows(); }
  Index d_out() const { return l2.w.rows(); }

  static ProjectorParams init(Index d_in, Index d_hidden, Index d_out, std::uint64_t seed);
  void register_params(ParamRegistry& reg, const std::string& prefix = "proj");
};

struct BoundProjector {
  BoundLinear l1, l2;
};

BoundProjector bound_projector(const TapeBinding& binding, const std::string& prefix = "proj");

// Forward pass on the tape; when collect is set, each linear layer's input
// rows are folded into its tap.
ad::Value project(ad::Tape& t, const BoundProjector& bound, ProjectorParams& p, ad::Value x,
                  bool collect);

// Inference-path forward (no collection, no gradients).
Mat project(const ProjectorParams& p, const Eigen::Ref<const Mat>& x);

struct TapDrain {
  Mat gram1, gram2;
  long long count1 = 0, count2 = 0;
};

// Returns the accumulated per-layer Gram sums and counts, resetting taps.
TapDrain drain_taps(ProjectorParams& p);

}  // namespace drape

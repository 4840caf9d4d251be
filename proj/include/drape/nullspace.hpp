#pragma once

#include "drape/errors.hpp"
#include "drape/types.hpp"

namespace drape {

// Cumulative second-moment statistics for one linear layer's input features:
// running mean of outer products and the number of observed feature vectors.
struct MomentStats {
  Mat m;          // [d_in x d_in], symmetric PSD
  long long n = 0;

  static MomentStats zero(Index d) { return {Mat::Zero(d, d), 0}; }
};

// Merges a drained Gram sum (sum of outer products over n_new rows) into the
// running mean: M' = (n_prev * M_prev + gram_sum) / (n_prev + n_new).
MomentStats update_moment(const MomentStats& prev, const Eigen::Ref<const Mat>& gram_sum,
                          long long n_new);

struct ProjectionMatrix {
  Mat pi;        // [d x d] projector onto the complement of the retained subspace
  Index rank = 0;  // retained rank r
  Mat v_par;     // [d x r] retained principal directions
  Mat v_perp;    // [d x (d - r)] complementary directions
  Vec spectrum;  // descending
  bool degenerate = false;  // M was zero: pi = I, nothing retained
};

// Eigendecomposes the symmetric PSD moment matrix, picks the smallest rank r
// whose leading spectral mass reaches eps (floored at 1, clamped to d - 1),
// and builds pi = V_perp V_perp^T. A zero moment yields pi = I with a
// degenerate flag instead of an error.
ProjectionMatrix compute_projection(const Eigen::Ref<const Mat>& m, Scalar eps);

// grad is [d_out x d_in]; returns grad * pi. Biases are not routed through
// this function (the projection acts on the input-feature side only).
Mat project_gradient(const Eigen::Ref<const Mat>& grad, const ProjectionMatrix& proj);

struct InterferenceBound {
  Scalar lhs = 0;  // || eta * (grad pi) v_old ||_2
  Scalar rhs = 0;  // eta * sigma_max(grad) * || V_perp^T v_old ||_2
};

InterferenceBound interference_bound(const Eigen::Ref<const Mat>& grad,
                                     const ProjectionMatrix& proj,
                                     const Eigen::Ref<const Vec>& v_old, Scalar eta);

}  // namespace drape

#include "drape/nullspace.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "drape/errors.hpp"

namespace drape {

MomentStats update_moment(const MomentStats& prev, const Eigen::Ref<const Mat>& gram_sum,
                          long long n_new) {
  if (n_new < 1) throw EmptyStatisticsError("update_moment: no new observations");
  require_shape(gram_sum.rows() == gram_sum.cols(), "update_moment: gram sum must be square");
  if (prev.n > 0)
    require_shape(prev.m.rows() == gram_sum.rows(), "update_moment: dimension changed");
  const Scalar n_total = static_cast<Scalar>(prev.n + n_new);
  MomentStats next;
  if (prev.n == 0)
    next.m = gram_sum / n_total;
  else
    next.m = (static_cast<Scalar>(prev.n) * prev.m + gram_sum) / n_total;
  next.n = prev.n + n_new;
  return next;
}

namespace {

// Canonical sign: first non-negligible component of each column positive.
void fix_column_signs(Mat& v) {
  for (Index c = 0; c < v.cols(); ++c) {
    for (Index r = 0; r < v.rows(); ++r) {
      if (std::abs(v(r, c)) > 1e-12) {
        if (v(r, c) < 0) v.col(c) = -v.col(c);
        break;
      }
    }
  }
}

}  // namespace

ProjectionMatrix compute_projection(const Eigen::Ref<const Mat>& m, Scalar eps) {
  require_shape(m.rows() == m.cols(), "compute_projection: moment must be square");
  if (!(eps > 0.0 && eps <= 1.0))
    throw ConfigError("compute_projection: eps must lie in (0, 1]");
  const Index d = m.rows();

  ProjectionMatrix out;
  if (m.norm() == 0.0) {
    out.pi = Mat::Identity(d, d);
    out.rank = 0;
    out.v_par = Mat(d, 0);
    out.v_perp = Mat::Identity(d, d);
    out.spectrum = Vec::Zero(d);
    out.degenerate = true;
    return out;
  }

  // M is symmetric PSD, so its eigendecomposition is its SVD.
  const Mat sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  if (eig.info() != Eigen::Success)
    throw ShapeError("compute_projection: eigendecomposition failed");

  // ascending -> descending, negatives (numerical noise) clamped
  Mat v(d, d);
  Vec sigma(d);
  for (Index i = 0; i < d; ++i) {
    sigma(i) = std::max<Scalar>(eig.eigenvalues()(d - 1 - i), 0.0);
    v.col(i) = eig.eigenvectors().col(d - 1 - i);
  }
  fix_column_signs(v);

  const Scalar total = sigma.sum();
  Index r = d;
  Scalar cum = 0;
  for (Index i = 0; i < d; ++i) {
    cum += sigma(i);
    if (cum / total >= eps) {
      r = i + 1;
      break;
    }
  }
  r = std::max<Index>(r, 1);
  r = std::min<Index>(r, d - 1);

  out.rank = r;
  out.v_par = v.leftCols(r);
  out.v_perp = v.rightCols(d - r);
  out.pi = out.v_perp * out.v_perp.transpose();
  out.spectrum = sigma;
  return out;
}

Mat project_gradient(const Eigen::Ref<const Mat>& grad, const ProjectionMatrix& proj) {
  require_shape(grad.cols() == proj.pi.rows(),
                "project_gradient: gradient column count != projector dimension");
  return grad * proj.pi;
}

InterferenceBound interference_bound(const Eigen::Ref<const Mat>& grad,
                                     const ProjectionMatrix& proj,
                                     const Eigen::Ref<const Vec>& v_old, Scalar eta) {
  require_shape(grad.cols() == proj.pi.rows(), "interference_bound: gradient shape mismatch");
  require_shape(v_old.size() == proj.pi.rows(), "interference_bound: feature shape mismatch");
  if (!(eta > 0)) throw ConfigError("interference_bound: eta must be positive");
  InterferenceBound b;
  b.lhs = (eta * (grad * proj.pi * v_old)).norm();
  const Vec singular = Eigen::JacobiSVD<Mat>(grad).singularValues();
  const Scalar sigma_max = singular.size() > 0 ? singular(0) : 0.0;
  b.rhs = eta * sigma_max * (proj.v_perp.transpose() * v_old).norm();
  return b;
}

}  // namespace drape

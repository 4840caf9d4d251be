#include "drape/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace drape::ad {
namespace {

Tape& tape_of(Value a) {
  if (!a.valid()) throw ShapeError("autodiff: use of an empty Value");
  return *a.tape;
}

void require_same_tape(Value a, Value b) {
  if (a.tape != b.tape) throw ShapeError("autodiff: values from different tapes");
}

}  // namespace

const Mat& Value::val() const { return tape_of(*this).val(id); }

Value Tape::leaf(Mat v, bool needs_grad) {
  return Value{this, push(std::move(v), needs_grad)};
}

Value Tape::constant_scalar(Scalar v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

int Tape::push(Mat val, bool needs) {
  Node n;
  n.val = std::move(val);
  n.needs = needs;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::set_backward(int id, std::function<void(Tape&)> fn) {
  nodes_[static_cast<std::size_t>(id)].back = std::move(fn);
}

void Tape::accumulate(int id, const Mat& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs) return;
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  n.grad += g;
}

Mat Tape::grad(Value v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.size() == 0) return Mat::Zero(n.val.rows(), n.val.cols());
  return n.grad;
}

void Tape::backward(Value loss) {
  if (backward_done_) throw ShapeError("autodiff: backward called twice on one tape");
  backward_done_ = true;
  Node& top = nodes_[static_cast<std::size_t>(loss.id)];
  require_shape(top.val.rows() == 1 && top.val.cols() == 1, "backward: loss must be 1x1");
  if (!top.needs) return;  // loss does not depend on any trainable leaf
  top.grad = Mat::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back && n.needs && n.grad.size() != 0) n.back(*this);
  }
}

// -- ops ----------------------------------------------------------------------

Value add(Value a, Value b) {
  require_same_tape(a, b);
  Tape& t = tape_of(a);
  const Mat& av = t.val(a.id);
  const Mat& bv = t.val(b.id);
  require_shape(av.rows() == bv.rows() && av.cols() == bv.cols(), "add: shape mismatch");
  const bool needs = t.needs(a.id) || t.needs(b.id);
  const int out = t.push(av + bv, needs);
  if (needs)
    t.set_backward(out, [ai = a.id, bi = b.id, out](Tape& t) {
      const Mat& g = t.adjoint(out);
      t.accumulate(ai, g);
      t.accumulate(bi, g);
    });
  return {&t, out};
}

Value scale(Value a, Scalar c) {
  Tape& t = tape_of(a);
  const bool needs = t.needs(a.id);
  const int out = t.push(t.val(a.id) * c, needs);
  if (needs)
    t.set_backward(out, [ai = a.id, c, out](Tape& t) { t.accumulate(ai, t.adjoint(out) * c); });
  return {&t, out};
}

Value matmul(Value a, Value b) {
  require_same_tape(a, b);
  Tape& t = tape_of(a);
  const Mat& av = t.val(a.id);
  const Mat& bv = t.val(b.id);
  require_shape(av.cols() == bv.rows(), "matmul: inner dimension mismatch");
  const bool needs = t.needs(a.id) || t.needs(b.id);
  const int out = t.push(av * bv, needs);
  if (needs)
    t.set_backward(out, [ai = a.id, bi = b.id, out](Tape& t) {
      const Mat& g = t.adjoint(out);
      t.accumulate(ai, g * t.val(bi).transpose());
      t.accumulate(bi, t.val(ai).transpose() * g);
    });
  return {&t, out};
}

Value matmul_nt(Value a, Value b) {
  require_same_tape(a, b);
  Tape& t = tape_of(a);
  const Mat& av = t.val(a.id);
  const Mat& bv = t.val(b.id);
  require_shape(av.cols() == bv.cols(), "matmul_nt: inner dimension mismatch");
  const bool needs = t.needs(a.id) || t.needs(b.id);
  const int out = t.push(av * bv.transpose(), needs);
  if (needs)
    t.set_backward(out, [ai = a.id, bi = b.id, out](Tape& t) {
      const Mat& g = t.adjoint(out);
      t.accumulate(ai, g * t.val(bi));
      t.accumulate(bi, g.transpose() * t.val(ai));
    });
  return {&t, out};
}

Value linear(Value x, Value w, Value b) {
  require_same_tape(x, w);
  require_same_tape(x, b);
  Tape& t = tape_of(x);
  const Mat& xv = t.val(x.id);
  const Mat& wv = t.val(w.id);
  const Mat& bv = t.val(b.id);
  require_shape(xv.cols() == wv.cols(), "linear: input width != fan-in");
  require_shape(bv.rows() == 1 && bv.cols() == wv.rows(), "linear: bias must be 1 x fan-out");
  Mat y = xv * wv.transpose();
  y.rowwise() += bv.row(0);
  const bool needs = t.needs(x.id) || t.needs(w.id) || t.needs(b.id);
  const int out = t.push(std::move(y), needs);
  if (needs)
    t.set_backward(out, [xi = x.id, wi = w.id, bi = b.id, out](Tape& t) {
      const Mat& g = t.adjoint(out);
      t.accumulate(xi, g * t.val(wi));
      t.accumulate(wi, g.transpose() * t.val(xi));
      t.accumulate(bi, g.colwise().sum());
    });
  return {&t, out};
}

namespace {
constexpr Scalar kInvSqrt2 = 0.7071067811865475244;
constexpr Scalar kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Value gelu(Value x) {
  Tape& t = tape_of(x);
  const Mat& xv = t.val(x.id);
  Mat y = xv.unaryExpr([](Scalar v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
  const bool needs = t.needs(x.id);
  const int out = t.push(std::move(y), needs);
  if (needs)
    t.set_backward(out, [xi = x.id, out](Tape& t) {
      const Mat& xv = t.val(xi);
      Mat d = xv.unaryExpr([](Scalar v) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
      t.accumulate(xi, t.adjoint(out).cwiseProduct(d));
    });
  return {&t, out};
}

Value layer_norm(Value x, Value gain, Value shift, Scalar eps) {
  require_same_tape(x, gain);
  require_same_tape(x, shift);
  Tape& t = tape_of(x);
  const Mat& xv = t.val(x.id);
  const Mat& gv = t.val(gain.id);
  const Mat& sv = t.val(shift.id);
  require_shape(gv.rows() == 1 && gv.cols() == xv.cols(), "layer_norm: gain must be 1 x n");
  require_shape(sv.rows() == 1 && sv.cols() == xv.cols(), "layer_norm: shift must be 1 x n");
  const Index n = xv.cols();
  Mat xhat(xv.rows(), n);
  Vec inv(xv.rows());
  for (Index r = 0; r < xv.rows(); ++r) {
    const Scalar mu = xv.row(r).mean();
    const Scalar var = (xv.row(r).array() - mu).square().sum() / static_cast<Scalar>(n);
    inv(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv(r);
  }
  Mat y = (xhat.array().rowwise() * gv.row(0).array()).matrix();
  y.rowwise() += sv.row(0);
  const bool needs = t.needs(x.id) || t.needs(gain.id) || t.needs(shift.id);
  const int out = t.push(std::move(y), needs);
  if (needs)
    t.set_backward(out, [xi = x.id, gi = gain.id, si = shift.id, out, xhat, inv](Tape& t) {
      const Mat& g = t.adjoint(out);
      const Mat& gv = t.val(gi);
      const Index n = g.cols();
      t.accumulate(si, g.colwise().sum());
      t.accumulate(gi, g.cwiseProduct(xhat).colwise().sum());
      Mat dx(g.rows(), n);
      for (Index r = 0; r < g.rows(); ++r) {
        const RowVec dxhat = g.row(r).cwiseProduct(gv.row(0));
        const Scalar m1 = dxhat.mean();
        const Scalar m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
        dx.row(r) = (inv(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2)).matrix();
      }
      t.accumulate(xi, dx);
    });
  return {&t, out};
}

Value masked_softmax(Value scores, const BoolArray& allowed) {
  Tape& t = tape_of(scores);
  const Mat& sv = t.val(scores.id);
  require_shape(sv.rows() == allowed.rows() && sv.cols() == allowed.cols(),
                "masked_softmax: mask shape mismatch");
  Mat w = Mat::Zero(sv.rows(), sv.cols());
  for (Index r = 0; r < sv.rows(); ++r) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Index c = 0; c < sv.cols(); ++c)
      if (allowed(r, c)) mx = std::max(mx, sv(r, c));
    if (!std::isfinite(mx))
      throw DegenerateInputError("masked_softmax: row with no allowed entries");
    Scalar z = 0;
    for (Index c = 0; c < sv.cols(); ++c)
      if (allowed(r, c)) {
        w(r, c) = std::exp(sv(r, c) - mx);
        z += w(r, c);
      }
    w.row(r) /= z;
  }
  const bool needs = t.needs(scores.id);
  const int out = t.push(std::move(w), needs);
  if (needs)
    t.set_backward(out, [si = scores.id, out](Tape& t) {
      const Mat& g = t.adjoint(out);
      const Mat& w = t.val(out);
      Mat ds(g.rows(), g.cols());
      for (Index r = 0; r < g.rows(); ++r) {
        const Scalar dot = g.row(r).cwiseProduct(w.row(r)).sum();
        ds.row(r) = (w.row(r).array() * (g.row(r).array() - dot)).matrix();
      }
      t.accumulate(si, ds);
    });
  return {&t, out};
}

Value dropout(Value x, const Mat& keep_mask, Scalar keep_prob) {
  Tape& t = tape_of(x);
  const Mat& xv = t.val(x.id);
  require_shape(xv.rows() == keep_mask.rows() && xv.cols() == keep_mask.cols(),
                "dropout: mask shape mismatch");
  const Scalar inv = 1.0 / keep_prob;
  const bool needs = t.needs(x.id);
  const int out = t.push(xv.cwiseProduct(keep_mask) * inv, needs);
  if (needs)
    t.set_backward(out, [xi = x.id, out, keep_mask, inv](Tape& t) {
      t.accumulate(xi, t.adjoint(out).cwiseProduct(keep_mask) * inv);
    });
  return {&t, out};
}

Value concat_rows(const std::vector<Value>& parts) {
  require_shape(!parts.empty(), "concat_rows: no parts");
  Tape& t = tape_of(parts.front());
  Index rows = 0;
  const Index cols = t.val(parts.front().id).cols();
  bool needs = false;
  for (const Value& p : parts) {
    require_same_tape(parts.front(), p);
    require_shape(t.val(p.id).cols() == cols, "concat_rows: column mismatch");
    rows += t.val(p.id).rows();
    needs = needs || t.needs(p.id);
  }
  Mat v(rows, cols);
  std::vector<std::pair<int, Index>> layout;  // (parent id, row offset)
  Index at = 0;
  for (const Value& p : parts) {
    const Mat& pv = t.val(p.id);
    v.middleRows(at, pv.rows()) = pv;
    layout.emplace_back(p.id, at);
    at += pv.rows();
  }
  const int out = t.push(std::move(v), needs);
  if (needs)
    t.set_backward(out, [layout, out](Tape& t) {
      const Mat& g = t.adjoint(out);
      for (const auto& [pid, offset] : layout)
        t.accumulate(pid, g.middleRows(offset, t.val(pid).rows()));
    });
  return {&t, out};
}

Value concat_cols(const std::vector<Value>& parts) {
  require_shape(!parts.empty(), "concat_cols: no parts");
  Tape& t = tape_of(parts.front());
  Index cols = 0;
  const Index rows = t.val(parts.front().id).rows();
  bool needs = false;
  for (const Value& p : parts) {
    require_same_tape(parts.front(), p);
    require_shape(t.val(p.id).rows() == rows, "concat_cols: row mismatch");
    cols += t.val(p.id).cols();
    needs = needs || t.needs(p.id);
  }
  Mat v(rows, cols);
  std::vector<std::pair<int, Index>> layout;
  Index at = 0;
  for (const Value& p : parts) {
    const Mat& pv = t.val(p.id);
    v.middleCols(at, pv.cols()) = pv;
    layout.emplace_back(p.id, at);
    at += pv.cols();
  }
  const int out = t.push(std::move(v), needs);
  if (needs)
    t.set_backward(out, [layout, out](Tape& t) {
      const Mat& g = t.adjoint(out);
      for (const auto& [pid, offset] : layout)
        t.accumulate(pid, g.middleCols(offset, t.val(pid).cols()));
    });
  return {&t, out};
}

Value slice_cols(Value a, Index first, Index count) {
  Tape& t = tape_of(a);
  const Mat& av = t.val(a.id);
  require_shape(first >= 0 && count >= 1 && first + count <= av.cols(),
                "slice_cols: out of range");
  const bool needs = t.needs(a.id);
  const int out = t.push(av.middleCols(first, count), needs);
  if (needs)
    t.set_backward(out, [ai = a.id, first, count, out](Tape& t) {
      const Mat& av = t.val(ai);
      Mat g = Mat::Zero(av.rows(), av.cols());
      g.middleCols(first, count) = t.adjoint(out);
      t.accumulate(ai, g);
    });
  return {&t, out};
}

Value replicate_row(Value a, Index times) {
  Tape& t = tape_of(a);
  const Mat& av = t.val(a.id);
  require_shape(av.rows() == 1, "replicate_row: input must be a single row");
  const bool needs = t.needs(a.id);
  const int out = t.push(av.replicate(times, 1), needs);
  if (needs)
    t.set_backward(out, [ai = a.id, out](Tape& t) {
      t.accumulate(ai, t.adjoint(out).colwise().sum());
    });
  return {&t, out};
}

Value segment_masked_mean(Value x, const std::vector<std::pair<Index, Index>>& segments,
                          const std::vector<char>& valid) {
  Tape& t = tape_of(x);
  const Mat& xv = t.val(x.id);
  require_shape(static_cast<Index>(valid.size()) == xv.rows(),
                "segment_masked_mean: mask length mismatch");
  Mat pooled = Mat::Zero(static_cast<Index>(segments.size()), xv.cols());
  std::vector<Scalar> denom(segments.size());
  for (std::size_t p = 0; p < segments.size(); ++p) {
    const auto [begin, end] = segments[p];
    require_shape(begin >= 0 && end >= begin && end <= xv.rows(),
                  "segment_masked_mean: segment out of range");
    Index count = 0;
    for (Index j = begin; j < end; ++j)
      if (valid[static_cast<std::size_t>(j)]) {
        pooled.row(static_cast<Index>(p)) += xv.row(j);
        ++count;
      }
    denom[p] = static_cast<Scalar>(std::max<Index>(count, 1));
    pooled.row(static_cast<Index>(p)) /= denom[p];
  }
  const bool needs = t.needs(x.id);
  const int out = t.push(std::move(pooled), needs);
  if (needs)
    t.set_backward(out, [xi = x.id, segments, valid, denom, out](Tape& t) {
      const Mat& g = t.adjoint(out);
      const Mat& xv = t.val(xi);
      Mat dx = Mat::Zero(xv.rows(), xv.cols());
      for (std::size_t p = 0; p < segments.size(); ++p) {
        const auto [begin, end] = segments[p];
        for (Index j = begin; j < end; ++j)
          if (valid[static_cast<std::size_t>(j)])
            dx.row(j) += g.row(static_cast<Index>(p)) / denom[p];
      }
      t.accumulate(xi, dx);
    });
  return {&t, out};
}

Value sum(Value a) {
  Tape& t = tape_of(a);
  Mat v(1, 1);
  v(0, 0) = t.val(a.id).sum();
  const bool needs = t.needs(a.id);
  const int out = t.push(std::move(v), needs);
  if (needs)
    t.set_backward(out, [ai = a.id, out](Tape& t) {
      const Mat& av = t.val(ai);
      t.accumulate(ai, Mat::Constant(av.rows(), av.cols(), t.adjoint(out)(0, 0)));
    });
  return {&t, out};
}

Value sum_squares(Value a) {
  Tape& t = tape_of(a);
  Mat v(1, 1);
  v(0, 0) = t.val(a.id).squaredNorm();
  const bool needs = t.needs(a.id);
  const int out = t.push(std::move(v), needs);
  if (needs)
    t.set_backward(out, [ai = a.id, out](Tape& t) {
      t.accumulate(ai, 2.0 * t.adjoint(out)(0, 0) * t.val(ai));
    });
  return {&t, out};
}

NllResult nll_from_logits(Value logits, const std::vector<Index>& rows,
                          const std::vector<int>& targets) {
  require_shape(!rows.empty() && rows.size() == targets.size(),
                "nll_from_logits: rows/targets mismatch");
  Tape& t = tape_of(logits);
  const Mat& lv = t.val(logits.id);
  std::vector<Scalar> terms(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const Index r = rows[j];
    require_shape(r >= 0 && r < lv.rows(), "nll_from_logits: row out of range");
    const int y = targets[j];
    require_shape(y >= 0 && y < lv.cols(), "nll_from_logits: target out of range");
    const Scalar mx = lv.row(r).maxCoeff();
    const Scalar lse = mx + std::log((lv.row(r).array() - mx).exp().sum());
    terms[j] = lse - lv(r, y);
  }
  Mat v(1, 1);
  v(0, 0) = 0;
  for (const Scalar term : terms) v(0, 0) += term;
  v(0, 0) /= static_cast<Scalar>(terms.size());
  const bool needs = t.needs(logits.id);
  const int out = t.push(std::move(v), needs);
  if (needs)
    t.set_backward(out, [li = logits.id, rows, targets, out](Tape& t) {
      const Mat& lv = t.val(li);
      const Scalar g = t.adjoint(out)(0, 0) / static_cast<Scalar>(rows.size());
      Mat dl = Mat::Zero(lv.rows(), lv.cols());
      for (std::size_t j = 0; j < rows.size(); ++j) {
        const Index r = rows[j];
        const Scalar mx = lv.row(r).maxCoeff();
        RowVec p = (lv.row(r).array() - mx).exp().matrix();
        p /= p.sum();
        p(targets[j]) -= 1.0;
        dl.row(r) += g * p;
      }
      t.accumulate(li, dl);
    });
  return {Value{&t, out}, std::move(terms)};
}

}  // namespace drape::ad

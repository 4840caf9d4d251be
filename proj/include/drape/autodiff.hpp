#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "drape/errors.hpp"
#include "drape/types.hpp"

namespace drape::ad {

class Tape;

// Lightweight handle into a Tape. Values are created eagerly: every op
// computes its result immediately and records a closure that scatters the
// incoming adjoint to its parents.
struct Value {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& val() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
 public:
  Value leaf(Mat v, bool needs_grad);
  Value constant(Mat v) { return leaf(std::move(v), false); }
  Value constant_scalar(Scalar v);

  const Mat& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
  bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].needs; }

  // Adjoint of a node after backward(); zero matrix if the node never
  // received gradient.
  Mat grad(Value v) const;

  // Reverse sweep from a 1x1 loss node. May be called once per tape.
  void backward(Value loss);

  std::size_t size() const { return nodes_.size(); }

  // -- op plumbing ---------------------------------------------------------
  int push(Mat val, bool needs);
  void set_backward(int id, std::function<void(Tape&)> fn);
  const Mat& adjoint(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  void accumulate(int id, const Mat& g);

 private:
  struct Node {
    Mat val;
    Mat grad;
    bool needs = false;
    std::function<void(Tape&)> back;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// -- differentiable ops ------------------------------------------------------

Value add(Value a, Value b);
Value scale(Value a, Scalar c);
// A * B
Value matmul(Value a, Value b);
// A * B^T
Value matmul_nt(Value a, Value b);
// x * w^T + broadcast rows of b;  w is [out x in], b is [1 x out]
Value linear(Value x, Value w, Value b);
// exact erf formulation
Value gelu(Value x);
// row-wise layer norm with learnable gain/shift ([1 x n] each)
Value layer_norm(Value x, Value gain, Value shift, Scalar eps);
// row-wise softmax restricted to allowed entries; disallowed weights are
// exactly zero. Throws DegenerateInputError if a row has no allowed entry.
Value masked_softmax(Value scores, const BoolArray& allowed);
// inverted dropout with a caller-supplied 0/1 keep mask
Value dropout(Value x, const Mat& keep_mask, Scalar keep_prob);
Value concat_rows(const std::vector<Value>& parts);
Value concat_cols(const std::vector<Value>& parts);
Value slice_cols(Value a, Index first, Index count);
Value replicate_row(Value a, Index times);
// per-segment mean over valid rows; denominator is max(valid count, 1)
Value segment_masked_mean(Value x, const std::vector<std::pair<Index, Index>>& segments,
                          const std::vector<char>& valid);
Value sum(Value a);
Value sum_squares(Value a);

struct NllResult {
  Value loss;                      // 1x1, mean over targets
  std::vector<Scalar> per_token;   // individual -log p terms
};
// Mean negative log-likelihood of targets[j] under a softmax over
// logits.row(rows[j]).
NllResult nll_from_logits(Value logits, const std::vector<Index>& rows,
                          const std::vector<int>& targets);

}  // namespace drape::ad

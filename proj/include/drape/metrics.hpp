#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "drape/errors.hpp"
#include "drape/types.hpp"

namespace drape {

// Lower-triangular accuracy matrix: entry (s, t) with 1 <= s <= t <= T is
// the accuracy (percentage) on task s measured after training stage t.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(int n_tasks) : n_tasks_(n_tasks) {}

  int n_tasks() const { return n_tasks_; }
  int stages_done() const { return static_cast<int>(rows_.size()); }
  bool complete() const { return stages_done() == n_tasks_; }

  // appends the evaluation row after stage t = stages_done() + 1; the row
  // must contain exactly t entries in [0, 100]
  void push_stage(std::vector<Scalar> row);

  Scalar at(int s, int t) const;  // 1-based

  // CSV: header "stage,task_1,..."; row t lists A_{1,t}..A_{t,t} with empty
  // trailing cells.
  static AccuracyMatrix from_csv(std::istream& in);
  void to_csv(std::ostream& out) const;

 private:
  int n_tasks_ = 0;
  std::vector<std::vector<Scalar>> rows_;
};

// mean of the final column: (1/T) sum_s A_{s,T}; requires a complete matrix
Scalar final_average(const AccuracyMatrix& a);

// B_t = (1/(t-1)) sum_{s<t} (A_{s,s} - A_{s,t}); defined for t >= 2
Scalar backward_transfer(const AccuracyMatrix& a, int t);

// M_t = (1/t) sum_{s<=t} A_{s,t}
Scalar mean_accuracy(const AccuracyMatrix& a, int t);

struct StageMetricSummary {
  std::vector<Scalar> bwt;       // B_2..B_T
  std::vector<Scalar> mean_acc;  // M_2..M_T
  Scalar bwt_mean = 0;           // average over t = 2..T
  Scalar mean_acc_mean = 0;
  Scalar final_avg = 0;
};

StageMetricSummary stage_metrics(const AccuracyMatrix& a);

// Row-normalized percentages; rows = true task, cols = routed task.
struct ConfusionMatrix {
  Mat rows;  // [T x T], each row sums to 100
};

// log entries are (true task, routed task), zero-based
ConfusionMatrix routing_confusion(const std::vector<std::pair<int, int>>& log, int n_tasks);

// report rounding: half away from zero, two decimals
Scalar round_report(Scalar x);

}  // namespace drape

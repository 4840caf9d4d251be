#include "drape/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "drape/errors.hpp"

namespace drape {

void AccuracyMatrix::push_stage(std::vector<Scalar> row) {
  const int t = stages_done() + 1;
  if (t > n_tasks_) throw BoundsError("accuracy matrix: more stages than tasks");
  if (static_cast<int>(row.size()) != t)
    throw ShapeError("accuracy matrix: stage row must have one entry per seen task");
  for (const Scalar v : row)
    if (!(v >= 0 && v <= 100)) throw BoundsError("accuracy matrix: entry outside [0, 100]");
  rows_.push_back(std::move(row));
}

Scalar AccuracyMatrix::at(int s, int t) const {
  if (t < 1 || t > stages_done() || s < 1 || s > t)
    throw BoundsError("accuracy matrix: index out of triangle");
  return rows_[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(s - 1)];
}

AccuracyMatrix AccuracyMatrix::from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("accuracy csv: empty input");
  std::vector<std::vector<Scalar>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<Scalar> row;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      if (first) {  // stage index column
        first = false;
        continue;
      }
      if (cell.empty()) continue;
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("accuracy csv: malformed cell '" + cell + "'");
      }
    }
    if (first) throw IoError("accuracy csv: missing stage column");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("accuracy csv: no data rows");
  AccuracyMatrix a(static_cast<int>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != t + 1)
      throw IoError("accuracy csv: row " + std::to_string(t + 1) + " must have " +
                    std::to_string(t + 1) + " entries");
    a.push_stage(std::move(rows[t]));
  }
  return a;
}

void AccuracyMatrix::to_csv(std::ostream& out) const {
  out << "stage";
  for (int s = 1; s <= n_tasks_; ++s) out << ",task_" << s;
  out << "\n";
  for (int t = 1; t <= stages_done(); ++t) {
    out << t;
    for (int s = 1; s <= n_tasks_; ++s) {
      out << ",";
      if (s <= t) out << std::fixed << std::setprecision(2) << round_report(at(s, t));
    }
    out << "\n";
  }
}

Scalar final_average(const AccuracyMatrix& a) {
  if (!a.complete()) throw UndefinedStageError("final_average: matrix incomplete");
  const int T = a.n_tasks();
  Scalar sum = 0;
  for (int s = 1; s <= T; ++s) sum += a.at(s, T);
  return sum / static_cast<Scalar>(T);
}

Scalar backward_transfer(const AccuracyMatrix& a, int t) {
  if (t < 2) throw UndefinedStageError("backward_transfer: undefined for t < 2");
  if (t > a.stages_done()) throw UndefinedStageError("backward_transfer: stage not evaluated");
  Scalar sum = 0;
  for (int s = 1; s < t; ++s) sum += a.at(s, s) - a.at(s, t);
  return sum / static_cast<Scalar>(t - 1);
}

Scalar mean_accuracy(const AccuracyMatrix& a, int t) {
  if (t < 1 || t > a.stages_done())
    throw UndefinedStageError("mean_accuracy: stage not evaluated");
  Scalar sum = 0;
  for (int s = 1; s <= t; ++s) sum += a.at(s, t);
  return sum / static_cast<Scalar>(t);
}

StageMetricSummary stage_metrics(const AccuracyMatrix& a) {
  if (!a.complete()) throw UndefinedStageError("stage_metrics: matrix incomplete");
  StageMetricSummary s;
  s.final_avg = final_average(a);
  const int T = a.n_tasks();
  for (int t = 2; t <= T; ++t) {
    s.bwt.push_back(backward_transfer(a, t));
    s.mean_acc.push_back(mean_accuracy(a, t));
  }
  if (!s.bwt.empty()) {
    for (const Scalar v : s.bwt) s.bwt_mean += v;
    s.bwt_mean /= static_cast<Scalar>(s.bwt.size());
    for (const Scalar v : s.mean_acc) s.mean_acc_mean += v;
    s.mean_acc_mean /= static_cast<Scalar>(s.mean_acc.size());
  } else {
    s.mean_acc_mean = mean_accuracy(a, 1);
  }
  return s;
}

ConfusionMatrix routing_confusion(const std::vector<std::pair<int, int>>& log, int n_tasks) {
  if (log.empty()) throw DegenerateInputError("routing_confusion: empty log");
  Mat counts = Mat::Zero(n_tasks, n_tasks);
  for (const auto& [true_task, routed] : log) {
    if (true_task < 0 || true_task >= n_tasks || routed < 0 || routed >= n_tasks)
      throw BoundsError("routing_confusion: task id out of range");
    counts(true_task, routed) += 1.0;
  }
  ConfusionMatrix cm;
  cm.rows = Mat::Zero(n_tasks, n_tasks);
  for (Index r = 0; r < counts.rows(); ++r) {
    const Scalar total = counts.row(r).sum();
    if (total == 0)
      throw DegenerateInputError("routing_confusion: task " + std::to_string(r) +
                                 " has no samples in the log");
    cm.rows.row(r) = counts.row(r) * (100.0 / total);
  }
  return cm;
}

Scalar round_report(Scalar x) {
  const Scalar scaled = std::floor(std::abs(x) * 100.0 + 0.5) / 100.0;
  return x < 0 ? -scaled : scaled;
}

}  // namespace drape

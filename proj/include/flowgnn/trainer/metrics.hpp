#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace flowgnn::trainer {

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Total convention: every 0/0 is defined as 0, so degenerate classes
// never poison a report.
Prf precision_recall_f1(std::size_t tp, std::size_t fp, std::size_t fn);

struct EvalReport {
  std::size_t num_classes = 0;
  std::size_t total = 0;
  std::size_t correct = 0;
  std::vector<std::size_t> confusion;  // C x C row-major; rows = true class
  std::vector<std::size_t> support;    // row sums
  std::vector<Prf> per_class;
  double accuracy = 0.0;
  double weighted_f1 = 0.0;

  std::size_t at(std::size_t truth, std::size_t pred) const {
    return confusion[truth * num_classes + pred];
  }
};

// Confusion counts and derived metrics from parallel truth/prediction
// arrays; labels outside [0, num_classes) are a usage error.
EvalReport make_report(const std::vector<int>& truth,
                       const std::vector<int>& predicted,
                       std::size_t num_classes);

// Support-weighted mean of per-class F1, recomputed from the report.
// UsageError when the report is empty.
double weighted_f1(const EvalReport& report);

// Stable text format: scalar lines, a per-class metric table, then the
// confusion matrix as a CSV block. Doubles print with 17 significant
// digits so identical reports are byte-identical.
void write_report(std::ostream& out, const EvalReport& report,
                  const std::vector<std::string>& class_names);

}  // namespace flowgnn::trainer

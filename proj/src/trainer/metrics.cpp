#include "flowgnn/trainer/metrics.hpp"

#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "flowgnn/errors.hpp"

namespace flowgnn::trainer {

Prf precision_recall_f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  Prf out;
  const double tp_d = static_cast<double>(tp);
  if (tp + fp > 0) out.precision = tp_d / static_cast<double>(tp + fp);
  if (tp + fn > 0) out.recall = tp_d / static_cast<double>(tp + fn);
  if (out.precision + out.recall > 0.0) {
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  }
  return out;
}

EvalReport make_report(const std::vector<int>& truth,
                       const std::vector<int>& predicted,
                       std::size_t num_classes) {
  if (num_classes == 0) throw UsageError("report needs at least one class");
  if (truth.size() != predicted.size()) {
    throw UsageError("truth and prediction arrays differ in length");
  }
  EvalReport r;
  r.num_classes = num_classes;
  r.total = truth.size();
  r.confusion.assign(num_classes * num_classes, 0);
  r.support.assign(num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = predicted[i];
    if (t < 0 || static_cast<std::size_t>(t) >= num_classes ||
        p < 0 || static_cast<std::size_t>(p) >= num_classes) {
      throw UsageError("label outside [0, num_classes) at row " +
                       std::to_string(i));
    }
    r.confusion[static_cast<std::size_t>(t) * num_classes +
                static_cast<std::size_t>(p)] += 1;
    r.support[static_cast<std::size_t>(t)] += 1;
    if (t == p) r.correct += 1;
  }
  r.per_class.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t tp = r.at(c, c);
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (std::size_t o = 0; o < num_classes; ++o) {
      if (o == c) continue;
      fp += r.at(o, c);
      fn += r.at(c, o);
    }
    r.per_class[c] = precision_recall_f1(tp, fp, fn);
  }
  if (r.total > 0) {
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    double acc = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      acc += static_cast<double>(r.support[c]) * r.per_class[c].f1;
    }
    r.weighted_f1 = acc / static_cast<double>(r.total);
  }
  return r;
}

double weighted_f1(const EvalReport& report) {
  if (report.total == 0) throw UsageError("weighted F1 of an empty report");
  double acc = 0.0;
  for (std::size_t c = 0; c < report.num_classes; ++c) {
    acc += static_cast<double>(report.support[c]) * report.per_class[c].f1;
  }
  return acc / static_cast<double>(report.total);
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_report(std::ostream& out, const EvalReport& report,
                  const std::vector<std::string>& class_names) {
  if (!class_names.empty() && class_names.size() != report.num_classes) {
    throw UsageError("class name list does not match class count");
  }
  auto name_of = [&](std::size_t c) {
    return class_names.empty() ? "class_" + std::to_string(c) : class_names[c];
  };
  out << "total " << report.total << "\n";
  out << "correct " << report.correct << "\n";
  out << "accuracy " << fmt(report.accuracy) << "\n";
  out << "weighted_f1 " << fmt(report.weighted_f1) << "\n";
  if (report.num_classes == 2) {
    out << "binary_f1 " << fmt(report.per_class[1].f1) << "\n";
  }
  out << "\nclass,support,precision,recall,f1\n";
  for (std::size_t c = 0; c < report.num_classes; ++c) {
    out << name_of(c) << ',' << report.support[c] << ','
        << fmt(report.per_class[c].precision) << ','
        << fmt(report.per_class[c].recall) << ','
        << fmt(report.per_class[c].f1) << "\n";
  }
  out << "\nconfusion";
  for (std::size_t c = 0; c < report.num_classes; ++c) out << ',' << name_of(c);
  out << "\n";
  for (std::size_t t = 0; t < report.num_classes; ++t) {
    out << name_of(t);
    for (std::size_t p = 0; p < report.num_classes; ++p) {
      out << ',' << report.at(t, p);
    }
    out << "\n";
  }
}

}  // namespace flowgnn::trainer

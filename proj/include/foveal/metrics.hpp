#pragma once

#include <algorithm>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "foveal/tensor.hpp"

namespace foveal {

struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<std::size_t> class_counts;
  std::vector<double> per_class_accuracy;  // 0 for classes with no examples
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  double mA = 0.0;
  double plain_accuracy = 0.0;
  std::size_t n_evaluated = 0;
  std::string config_echo;
};

// Unweighted mean of per-class accuracies over classes that have examples.
inline EvalReport mean_accuracy(std::span<const int> predictions, std::span<const int> labels, std::size_t K) {
  if (predictions.size() != labels.size())
    throw Error("mean_accuracy got " + std::to_string(predictions.size()) + " predictions for " +
                std::to_string(labels.size()) + " labels");
  EvalReport r;
  r.class_counts.assign(K, 0);
  r.per_class_accuracy.assign(K, 0.0);
  r.confusion.assign(K, std::vector<std::size_t>(K, 0));
  std::vector<std::size_t> correct(K, 0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = predictions[i];
    if (y < 0 || static_cast<std::size_t>(y) >= K) throw Error("label " + std::to_string(y) + " outside [0," + std::to_string(K) + ")");
    if (p < 0 || static_cast<std::size_t>(p) >= K)
      throw Error("prediction " + std::to_string(p) + " outside [0," + std::to_string(K) + ")");
    ++r.class_counts[y];
    ++r.confusion[y][p];
    if (y == p) ++correct[y], ++hits;
  }
  std::vector<double> present;
  for (std::size_t k = 0; k < K; ++k) {
    if (!r.class_counts[k]) continue;
    r.per_class_accuracy[k] = static_cast<double>(correct[k]) / static_cast<double>(r.class_counts[k]);
    present.push_back(r.per_class_accuracy[k]);
  }
  // Summed in sorted order so relabelling classes cannot change a bit.
  std::sort(present.begin(), present.end());
  for (double a : present) r.mA += a;
  if (!present.empty()) r.mA /= static_cast<double>(present.size());
  r.n_evaluated = labels.size();
  if (!labels.empty()) r.plain_accuracy = static_cast<double>(hits) / static_cast<double>(labels.size());
  return r;
}

// `class_name,count,accuracy` per class, then `mA,<value>`.
inline void write_report(std::ostream& os, const EvalReport& r) {
  const auto old = os.precision(17);
  for (std::size_t k = 0; k < r.class_counts.size(); ++k) {
    const std::string name = k < r.class_names.size() ? r.class_names[k] : std::to_string(k);
    os << name << ',' << r.class_counts[k] << ',' << r.per_class_accuracy[k] << '\n';
  }
  os << "mA," << r.mA << '\n';
  os.precision(old);
}

}  // namespace foveal

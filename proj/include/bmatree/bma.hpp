#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "bmatree/dataset.hpp"
#include "bmatree/error.hpp"
#include "bmatree/sampler.hpp"
#include "bmatree/tree.hpp"

namespace bmatree {

// Model-averaged class distribution: the uniform 1/N mean of every tree's
// smoothed terminal distribution. Trees are summed in ensemble order.
template <typename Row>
std::vector<double> bma_predict(const Ensemble& ensemble, const Row& x, double alpha) {
  if (ensemble.empty()) throw EvaluationError("empty ensemble");
  std::vector<double> mean(ensemble.trees.front().class_count(), 0.0);
  for (const auto& tree : ensemble.trees) {
    const auto p = predict_distribution(tree, x, alpha);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p.probabilities[c];
  }
  const double n = static_cast<double>(ensemble.size());
  for (double& v : mean) v /= n;
  return mean;
}

// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax_lowest(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < p.size(); ++c)
    if (p[c] > p[best]) best = c;
  return best;
}

template <typename Row>
std::size_t classify(const Ensemble& ensemble, const Row& x, double alpha) {
  return argmax_lowest(bma_predict(ensemble, x, alpha));
}

// Shannon entropy in bits.
inline double entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log2(v);
  return h;
}

struct Evaluation {
  double accuracy_percent = 0.0;  // P
  double entropy_bits = 0.0;      // E, summed over test samples
};

namespace detail {

inline void check_compatible(const Ensemble& ensemble, const Dataset& test) {
  if (ensemble.empty()) throw EvaluationError("empty ensemble");
  if (test.size() == 0) throw EvaluationError("empty test set");
  if (ensemble.attribute_count() != 0 && ensemble.attribute_count() != test.attribute_count())
    throw EvaluationError("ensemble expects " + std::to_string(ensemble.attribute_count()) +
                          " attributes, test data has " + std::to_string(test.attribute_count()));
  if (ensemble.trees.front().class_count() != test.class_count())
    throw EvaluationError("ensemble expects " +
                          std::to_string(ensemble.trees.front().class_count()) +
                          " classes, test data has " + std::to_string(test.class_count()));
}

}  // namespace detail

inline Evaluation evaluate(const Ensemble& ensemble, const Dataset& test, double alpha) {
  detail::check_compatible(ensemble, test);
  std::size_t correct = 0;
  double entropy = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto p = bma_predict(ensemble, test.row(i), alpha);
    if (argmax_lowest(p) == static_cast<std::size_t>(test.label(i))) ++correct;
    entropy += entropy_bits(p);
  }
  return {100.0 * static_cast<double>(correct) / static_cast<double>(test.size()), entropy};
}

// Accuracy of each tree used alone, in ensemble order.
inline std::vector<double> per_tree_performance(const Ensemble& ensemble, const Dataset& test,
                                                double alpha) {
  detail::check_compatible(ensemble, test);
  std::vector<double> out;
  out.reserve(ensemble.size());
  for (const auto& tree : ensemble.trees) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto p = predict_distribution(tree, test.row(i), alpha);
      if (argmax_lowest(p.probabilities) == static_cast<std::size_t>(test.label(i))) ++correct;
    }
    out.push_back(100.0 * static_cast<double>(correct) / static_cast<double>(test.size()));
  }
  return out;
}

}  // namespace bmatree

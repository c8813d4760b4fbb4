#pragma once

#include <cmath>
#include <numeric>
#include <variant>

#include "bmatree/dataset.hpp"
#include "bmatree/error.hpp"
#include "bmatree/tree.hpp"

namespace bmatree {

struct LikelihoodParams {
  double alpha = 1.0;  // symmetric Dirichlet concentration, > 0
};

// std::lgamma writes the global signgam on glibc; lgamma_r keeps concurrent
// chains free of that shared state.
inline double log_gamma(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

// Dirichlet-multinomial marginal likelihood of one terminal's counts.
inline double log_terminal_likelihood(const TerminalNode& terminal, double alpha) {
  const double c = static_cast<double>(terminal.counts.size());
  const double total = static_cast<double>(terminal.total());
  double value = log_gamma(c * alpha) - log_gamma(total + c * alpha);
  const double log_gamma_alpha = log_gamma(alpha);
  for (auto n : terminal.counts) value += log_gamma(static_cast<double>(n) + alpha) - log_gamma_alpha;
  return value;
}

// Log marginal likelihood of the labels given the tree, with every
// terminal's class probabilities integrated out against Dirichlet(alpha).
// The tree must carry counts from a recount against `data`.
inline double log_marginal_likelihood(const DecisionTree& tree, const Dataset& data,
                                      const LikelihoodParams& params = {}) {
  if (!(params.alpha > 0.0)) throw ParameterError("alpha must be positive");
  if (!tree.counts_fresh()) throw StalenessError("tree was edited and not recounted");
  if (tree.class_count() != data.class_count())
    throw StalenessError("tree class count differs from the data");
  double value = 0.0;
  std::size_t seen = 0;
  for (const auto& node : tree.nodes()) {
    if (const auto* t = std::get_if<TerminalNode>(&node)) {
      value += log_terminal_likelihood(*t, params.alpha);
      seen += t->total();
    }
  }
  if (seen != data.size()) throw StalenessError("tree counts were taken on different data");
  return value;
}

}  // namespace bmatree

#include <gtest/gtest.h>

#include <cmath>

#include "bmatree/likelihood.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace bmatree {
namespace {

Dataset labels_only(const std::vector<std::size_t>& counts) {
  std::vector<std::string> y;
  for (std::size_t c = 0; c < counts.size(); ++c) y.insert(y.end(), counts[c], std::to_string(c));
  // Keep every class present so C matches counts.size().
  return make_dataset(std::vector<double>(y.size(), 0.0), y, {"a"});
}

double single_terminal(const std::vector<std::size_t>& counts) {
  return log_terminal_likelihood(TerminalNode{counts}, 1.0);
}

TEST(LogMarginalLikelihood, WorkedExamples) {
  const double cases[][3] = {{3, 1, -2.9957}, {2, 2, -3.4012}, {1, 0, -0.6931}};
  for (const auto& c : cases) {
    const std::vector<std::size_t> counts{static_cast<std::size_t>(c[0]), static_cast<std::size_t>(c[1])};
    const double value = single_terminal(counts);
    EXPECT_NEAR(value, oracle::hand_log_likelihood(counts), 1e-9);
    EXPECT_NEAR(value, c[2], 5e-5);
  }
  EXPECT_NEAR(single_terminal({3, 1}), std::log(0.05), 1e-12);
  EXPECT_NEAR(single_terminal({2, 2}), std::log(1.0 / 30.0), 1e-12);
  EXPECT_NEAR(single_terminal({1, 0}), std::log(0.5), 1e-12);
}

TEST(LogMarginalLikelihood, ThroughTheTreeApi) {
  const Dataset d = labels_only({3, 1});
  const auto [tree, valid] = recount(DecisionTree(2), d, 1);
  EXPECT_NEAR(log_marginal_likelihood(tree, d), std::log(0.05), 1e-12);
}

TEST(LogMarginalLikelihood, Staleness) {
  const Dataset d = labels_only({3, 1});
  const DecisionTree stale = split_terminal(DecisionTree(2), 0, {0, 0, 0.5});
  EXPECT_THROW(log_marginal_likelihood(stale, d), StalenessError);
  const auto [fresh, valid] = recount(DecisionTree(2), labels_only({2, 2}), 1);
  EXPECT_THROW(log_marginal_likelihood(fresh, labels_only({5, 3})), StalenessError);
  EXPECT_THROW(log_marginal_likelihood(fresh, labels_only({2, 2}), {0.0}), ParameterError);
}

TEST(LogMarginalLikelihood, AgreesWithSequentialPredictive) {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t classes = 2 + rng.uniform_index(3);
    const Dataset d = testing::random_dataset(5 + rng.uniform_index(20), 2, classes, rng);
    const RuleCatalog cat = build_rule_catalog(d);
    const double alpha = trial % 2 == 0 ? 1.0 : 0.3 + rng.uniform();
    const auto [tree, valid] = recount(testing::random_tree(cat, classes, rng.uniform_index(4), rng), d, 0);
    EXPECT_NEAR(log_marginal_likelihood(tree, d, {alpha}), oracle::sequential_predictive(tree, d, alpha), 1e-9);
  }
}

TEST(LogMarginalLikelihood, PurityPreference) {
  // Every split of (2,2) into two non-empty leaves, against the pure split.
  auto two_leaves = [](std::vector<std::size_t> a, std::vector<std::size_t> b) {
    return log_terminal_likelihood(TerminalNode{a}, 1.0) + log_terminal_likelihood(TerminalNode{b}, 1.0);
  };
  const double pure = two_leaves({2, 0}, {0, 2});
  const double unsplit = single_terminal({2, 2});
  EXPECT_GE(pure, unsplit);
  for (std::size_t a = 0; a <= 2; ++a)
    for (std::size_t b = 0; b <= 2; ++b) {
      if (a + b == 0 || a + b == 4) continue;
      EXPECT_GE(pure, two_leaves({a, b}, {2 - a, 2 - b}) - 1e-12) << a << "," << b;
    }
}

TEST(LogMarginalLikelihood, PermutationSymmetry) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> counts(2 + rng.uniform_index(4));
    for (auto& c : counts) c = rng.uniform_index(12);
    const double base = log_terminal_likelihood(TerminalNode{counts}, 0.7);
    rng.shuffle(counts.begin(), counts.end());
    EXPECT_NEAR(log_terminal_likelihood(TerminalNode{counts}, 0.7), base, 1e-12);
  }
}

TEST(LogMarginalLikelihood, AdditiveOverTerminals) {
  Rng rng(19);
  const Dataset d = testing::random_dataset(60, 3, 3, rng);
  const RuleCatalog cat = build_rule_catalog(d);
  const auto [tree, valid] = recount(testing::random_tree(cat, 3, 6, rng), d, 0);
  double sum = 0.0;
  for (std::size_t t : tree.terminal_indices()) sum += log_terminal_likelihood(tree.terminal(t), 1.0);
  EXPECT_NEAR(log_marginal_likelihood(tree, d), sum, 1e-12);
}

}  // namespace
}  // namespace bmatree

#include <gtest/gtest.h>

#include <cmath>

#include "bmatree/sampler.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace bmatree {
namespace {

Dataset tiny_binary() { return oracle::enumerable_dataset(); }

double total_variation(const Dataset& d, const ChainConfig& config, std::size_t iterations) {
  const auto cmp = oracle::compare_visits(d, config, iterations);
  EXPECT_EQ(cmp.outside_support, 0u);
  return cmp.total_variation;
}

TEST(ExactPosterior, BinaryAttributes) {
  const Dataset d = tiny_binary();
  EXPECT_EQ(oracle::enumerate_posterior(d, build_rule_catalog(d), 1).size(), 7u);
  EXPECT_LT(total_variation(d, oracle::enumerable_config(1), 400000), 0.05);
}

TEST(ExactPosterior, UnequalRuleCountsAndMoveProbabilities) {
  // Attribute 0 has three values (two rules), attribute 1 is binary, so the
  // prior's 1 / L_j factor and the Change-rule kernel both matter.
  const Dataset d = make_dataset({0, 0, 0, 1, 1, 0, 1, 1, 2, 0, 2, 1, 0, 1, 2, 0, 1, 1},
                                 {"1", "1", "2", "1", "2", "2", "2", "1", "1"}, {"x0", "x1"});
  ChainConfig config = oracle::enumerable_config(5);
  config.move_probs = {0.3, 0.1, 0.2, 0.4};
  config.proposal_variance = 2.0;
  EXPECT_LT(total_variation(d, config, 400000), 0.05);
}

TEST(Propose, DeathOnSingleTerminalIsInapplicable) {
  const Dataset d = tiny_binary();
  const RuleCatalog cat = build_rule_catalog(d);
  Rng rng(1);
  const Proposal p = propose_move(MoveKind::kDeath, DecisionTree(2), cat, ChainConfig{}, rng);
  EXPECT_FALSE(p.candidate.has_value());
}

TEST(Propose, BirthOnSingleTerminalMakesStump) {
  const Dataset d = tiny_binary();
  const RuleCatalog cat = build_rule_catalog(d);
  Rng rng(1);
  const Proposal p = propose_move(MoveKind::kBirth, DecisionTree(2), cat, ChainConfig{}, rng);
  ASSERT_TRUE(p.candidate.has_value());
  EXPECT_EQ(p.candidate->split_count(), 1u);
  EXPECT_EQ(p.candidate->terminal_count(), 2u);
  EXPECT_EQ(p.context.terminals, 1u);
  EXPECT_EQ(p.context.prunable, 1u);
  // log(p_death / p_birth) + log(1 / 1) with the default 0.15 / 0.15.
  EXPECT_NEAR(p.log_proposal_ratio, 0.0, 1e-15);
}

TEST(Propose, ChangeRuleWithSingleRuleIsAlwaysRejected) {
  const Dataset d = tiny_binary();
  const RuleCatalog cat = build_rule_catalog(d);
  const DecisionTree stump = split_terminal(DecisionTree(2), 0, catalog_rule(cat, 0, 0));
  Rng rng(3);
  for (int i = 0; i < 200; ++i)
    EXPECT_FALSE(propose_move(MoveKind::kChangeRule, stump, cat, ChainConfig{}, rng).candidate);
}

TEST(Propose, ChangeRuleStaysOnAttribute) {
  Rng data_rng(2);
  const Dataset d = testing::random_dataset(60, 3, 2, data_rng);
  const RuleCatalog cat = build_rule_catalog(d);
  const DecisionTree tree = testing::random_tree(cat, 2, 4, data_rng);
  Rng rng(9);
  int moved = 0;
  for (int i = 0; i < 500; ++i) {
    const auto p = propose_move(MoveKind::kChangeRule, tree, cat, ChainConfig{}, rng);
    if (!p.candidate) continue;
    ++moved;
    EXPECT_EQ(p.candidate->split_count(), tree.split_count());
    for (std::size_t s : tree.split_indices()) {
      EXPECT_EQ(p.candidate->split(s).rule.attribute, tree.split(s).rule.attribute);
      EXPECT_EQ(p.candidate->split(s).rule.threshold,
                cat.threshold(tree.split(s).rule.attribute, p.candidate->split(s).rule.rule));
    }
    EXPECT_EQ(p.log_proposal_ratio, 0.0);
  }
  EXPECT_GT(moved, 100);
}

TEST(Accept, RatiosCancel) {
  ChainConfig config;
  EXPECT_EQ(acceptance_probability(-10.0, -10.0, MoveKind::kBirth, {3, 3}, config), 1.0);
  EXPECT_EQ(acceptance_probability(-10.0, -10.0, MoveKind::kDeath, {3, 3}, config), 1.0);
  EXPECT_NEAR(acceptance_probability(-10.0, -10.0 - std::log(2.0), MoveKind::kChangeSplit, {}, config),
              0.5, 1e-15);
  EXPECT_NEAR(acceptance_probability(-10.0, -10.0 - std::log(2.0), MoveKind::kChangeRule, {}, config),
              0.5, 1e-15);
}

TEST(Accept, BirthAndDeathAreReciprocal) {
  ChainConfig config;
  config.move_probs = {0.2, 0.1, 0.1, 0.6};
  const MoveContext ctx{4, 2};
  const double birth = log_move_ratio(MoveKind::kBirth, ctx, config.move_probs);
  EXPECT_NEAR(birth, std::log(0.1 / 0.2) + std::log(4.0 / 2.0), 1e-15);
  EXPECT_NEAR(log_move_ratio(MoveKind::kDeath, ctx, config.move_probs), -birth, 1e-15);
}

TEST(Accept, EmpiricalRate) {
  ChainConfig config;
  Rng rng(77);
  int accepted = 0;
  const int trials = 200000;
  for (int i = 0; i < trials; ++i)
    accepted += accept(0.0, std::log(0.3), MoveKind::kChangeSplit, {}, config, rng) ? 1 : 0;
  const double sigma = std::sqrt(0.3 * 0.7 / trials);
  EXPECT_NEAR(static_cast<double>(accepted) / trials, 0.3, 4 * sigma);
}

Dataset small_synthetic() { return generate_synthetic({120, 5, 3, 2, 1.0, 4}); }

TEST(RunChain, CountingContract) {
  const Dataset d = small_synthetic();
  const RuleCatalog cat = build_rule_catalog(d);
  ChainConfig config;
  config.burn_in = 0;
  config.post_burn_in = 5;
  config.thinning = 1;
  const ChainRun run = run_chain(d, cat, config);
  EXPECT_EQ(run.ensemble.size(), 5u);
  EXPECT_EQ(run.ensemble.log_liks.size(), 5u);
  EXPECT_EQ(run.diagnostics.iterations, 5u);
}

TEST(RunChain, DeterministicGivenSeed) {
  const Dataset d = small_synthetic();
  const RuleCatalog cat = build_rule_catalog(d);
  ChainConfig config;
  config.burn_in = 500;
  config.post_burn_in = 50;
  config.seed = 42;
  const ChainRun a = run_chain(d, cat, config);
  const ChainRun b = run_chain(d, cat, config);
  ASSERT_EQ(a.ensemble.size(), b.ensemble.size());
  for (std::size_t i = 0; i < a.ensemble.size(); ++i) {
    EXPECT_EQ(a.ensemble.trees[i], b.ensemble.trees[i]);
    EXPECT_EQ(a.ensemble.log_liks[i], b.ensemble.log_liks[i]);
  }
  config.seed = 43;
  const ChainRun c = run_chain(d, cat, config);
  bool differs = false;
  for (std::size_t i = 0; i < a.ensemble.size(); ++i) differs = differs || !(a.ensemble.trees[i] == c.ensemble.trees[i]);
  EXPECT_TRUE(differs);
}

TEST(RunChain, ThinningValidityAndBookkeeping) {
  const Dataset d = small_synthetic();
  const RuleCatalog cat = build_rule_catalog(d);
  ChainConfig config;
  config.burn_in = 300;
  config.post_burn_in = 40;
  config.thinning = 7;
  config.min_node_size = 4;
  config.trace_stride = 10;
  config.seed = 8;
  const ChainRun run = run_chain(d, cat, config);
  const auto& diag = run.diagnostics;
  ASSERT_EQ(diag.retained_iterations.size(), 40u);
  for (std::size_t k = 0; k < 40; ++k) EXPECT_EQ(diag.retained_iterations[k], 300 + 7 * (k + 1));
  for (std::size_t i = 0; i < run.ensemble.size(); ++i) {
    const auto& tree = run.ensemble.trees[i];
    EXPECT_TRUE(tree.meets_min_node_size(4));
    EXPECT_LE(tree.split_count(), d.size() - 1);
    std::size_t total = 0;
    for (std::size_t t : tree.terminal_indices()) total += tree.terminal(t).total();
    EXPECT_EQ(total, d.size());
    EXPECT_NEAR(run.ensemble.log_liks[i], log_marginal_likelihood(tree, d), 1e-9);
  }
  const auto birth = diag.stats.accepted[static_cast<std::size_t>(MoveKind::kBirth)];
  const auto death = diag.stats.accepted[static_cast<std::size_t>(MoveKind::kDeath)];
  EXPECT_EQ(static_cast<long long>(birth) - static_cast<long long>(death),
            static_cast<long long>(diag.final_splits) - static_cast<long long>(diag.initial_splits));
  for (std::size_t m = 0; m < 4; ++m) EXPECT_LE(diag.stats.accepted[m], diag.stats.proposed[m]);
  EXPECT_EQ(diag.stats.total_proposed(), diag.iterations);
  EXPECT_EQ(diag.size_trace.size(), diag.iterations / 10);
  EXPECT_GT(diag.acceptance_fraction(), 0.0);
  EXPECT_EQ(run.ensemble.provenance.config_digest, config.digest());
  EXPECT_EQ(run.ensemble.provenance.dataset_digest, dataset_digest(d));
}

TEST(RunChain, EntryChecks) {
  const Dataset d = small_synthetic();
  const RuleCatalog cat = build_rule_catalog(d);
  ChainConfig config;
  config.min_node_size = 61;
  EXPECT_THROW(run_chain(d, cat, config), DegenerateDataError);

  const Dataset constant = make_dataset(std::vector<double>(20, 1.0), {"1", "2", "1", "2", "1", "2", "1", "2", "1", "2",
                                                                       "1", "2", "1", "2", "1", "2", "1", "2", "1", "2"},
                                        {"a"});
  EXPECT_THROW(run_chain(constant, build_rule_catalog(constant), ChainConfig{}), DegenerateDataError);

  ChainConfig bad;
  bad.move_probs = {0.2, 0.2, 0.2, 0.2};
  EXPECT_THROW(run_chain(d, cat, bad), ParameterError);
  bad.move_probs = {0.5, 0.5, 0.0, 0.0};
  EXPECT_THROW(run_chain(d, cat, bad), ParameterError);
}

TEST(RunChain, InitializationError) {
  // Only one candidate rule and it isolates a single sample.
  std::vector<double> x(12, 0.0);
  x[11] = 1.0;
  std::vector<std::string> y;
  for (int i = 0; i < 12; ++i) y.push_back(std::to_string(i % 2));
  const Dataset d = make_dataset(x, y, {"a"});
  ChainConfig config;
  config.min_node_size = 6;
  EXPECT_THROW(run_chain(d, build_rule_catalog(d), config), InitializationError);
}

TEST(Stationarity, Summary) {
  Diagnostics constant;
  constant.burn_in = 100;
  for (std::size_t i = 1; i <= 20; ++i) constant.size_trace.push_back({i * 10, 7});
  EXPECT_EQ(stationarity_summary(constant).drift_ratio, 0.0);

  Diagnostics ramp;
  ramp.burn_in = 4;
  ramp.size_trace = {{1, 10}, {2, 20}, {3, 30}, {4, 30}, {5, 30}, {6, 30}};
  const auto s = stationarity_summary(ramp);
  EXPECT_EQ(s.mean_last_burn_in_quartile, 30.0);
  EXPECT_EQ(s.mean_post_burn_in, 30.0);
  EXPECT_EQ(s.drift_ratio, 0.0);

  Diagnostics drift;
  drift.burn_in = 4;
  drift.size_trace = {{1, 2}, {2, 2}, {3, 2}, {4, 4}, {5, 5}, {6, 7}};
  EXPECT_NEAR(stationarity_summary(drift).drift_ratio, 2.0 / 4.0, 1e-15);

  EXPECT_THROW(stationarity_summary(Diagnostics{}), DiagnosticsError);
}

}  // namespace
}  // namespace bmatree

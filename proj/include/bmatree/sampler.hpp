#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bmatree/dataset.hpp"
#include "bmatree/error.hpp"
#include "bmatree/likelihood.hpp"
#include "bmatree/rng.hpp"
#include "bmatree/tree.hpp"

namespace bmatree {

enum class MoveKind : std::size_t { kBirth = 0, kDeath = 1, kChangeSplit = 2, kChangeRule = 3 };

inline constexpr std::array<MoveKind, 4> kAllMoves = {MoveKind::kBirth, MoveKind::kDeath,
                                                      MoveKind::kChangeSplit,
                                                      MoveKind::kChangeRule};

inline const char* move_name(MoveKind move) {
  switch (move) {
    case MoveKind::kBirth: return "birth";
    case MoveKind::kDeath: return "death";
    case MoveKind::kChangeSplit: return "change_split";
    case MoveKind::kChangeRule: return "change_rule";
  }
  return "?";
}

struct MoveProbabilities {
  double birth = 0.15;
  double death = 0.15;
  double change_split = 0.1;
  double change_rule = 0.6;

  double of(MoveKind move) const {
    switch (move) {
      case MoveKind::kBirth: return birth;
      case MoveKind::kDeath: return death;
      case MoveKind::kChangeSplit: return change_split;
      case MoveKind::kChangeRule: return change_rule;
    }
    return 0.0;
  }
};

struct ChainConfig {
  std::size_t burn_in = 200000;
  std::size_t post_burn_in = 10000;  // retained trees
  std::size_t thinning = 7;
  std::size_t min_node_size = 6;
  MoveProbabilities move_probs;
  double proposal_variance = 1.0;  // variance of the Change-rule rank offset
  double alpha = 1.0;
  std::uint64_t seed = 0;
  std::size_t trace_stride = 100;
  // Cap on splitting nodes. 0 means the derived s_max = n - 1. Not exposed
  // through config files; exists so tiny instances can be enumerated.
  std::size_t max_splits = 0;

  void validate() const {
    const double probs[] = {move_probs.birth, move_probs.death, move_probs.change_split,
                            move_probs.change_rule};
    double sum = 0.0;
    for (double p : probs) {
      if (!(p > 0.0)) throw ParameterError("move probabilities must be positive");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ParameterError("move probabilities must sum to 1");
    if (thinning == 0) throw ParameterError("thinning must be at least 1");
    if (post_burn_in == 0) throw ParameterError("post_burn_in must be at least 1");
    if (min_node_size == 0) throw ParameterError("min_node_size must be at least 1");
    if (trace_stride == 0) throw ParameterError("trace_stride must be at least 1");
    if (!(proposal_variance > 0.0)) throw ParameterError("proposal_variance must be positive");
    if (!(alpha > 0.0)) throw ParameterError("alpha must be positive");
  }

  // Canonical key = value rendering; also the input of the config digest.
  std::string echo() const {
    std::string out;
    auto line = [&](const char* key, const std::string& value) {
      out += key;
      out += " = ";
      out += value;
      out += '\n';
    };
    line("burn_in", std::to_string(burn_in));
    line("post_burn_in", std::to_string(post_burn_in));
    line("thinning", std::to_string(thinning));
    line("min_node_size", std::to_string(min_node_size));
    line("p_birth", detail::format_double(move_probs.birth));
    line("p_death", detail::format_double(move_probs.death));
    line("p_change_split", detail::format_double(move_probs.change_split));
    line("p_change_rule", detail::format_double(move_probs.change_rule));
    line("proposal_variance", detail::format_double(proposal_variance));
    line("alpha", detail::format_double(alpha));
    line("seed", std::to_string(seed));
    line("trace_stride", std::to_string(trace_stride));
    if (max_splits != 0) line("max_splits", std::to_string(max_splits));
    return out;
  }

  std::string digest() const { return hex_digest(echo()); }
};

struct RefinementInfo {
  double threshold = 0.0;
  std::size_t n_weak = 0;
  std::vector<std::string> weak_attributes;
  std::size_t retained = 0;
  std::size_t total = 0;
};

struct EnsembleProvenance {
  std::string config_digest;
  std::string config_echo;
  std::string dataset_digest;
  int fold = -1;  // -1 when not trained inside cross-validation
  double alpha = 1.0;
  std::vector<std::string> attribute_names;
  std::vector<std::string> class_names;
  // Original column of each attribute when trained on a projection; empty
  // means the identity.
  std::vector<std::size_t> attribute_map;
  std::optional<RefinementInfo> refinement;
};

struct Ensemble {
  std::vector<DecisionTree> trees;
  std::vector<double> log_liks;
  EnsembleProvenance provenance;

  std::size_t size() const noexcept { return trees.size(); }
  bool empty() const noexcept { return trees.empty(); }
  std::size_t attribute_count() const noexcept { return provenance.attribute_names.size(); }
  std::size_t class_count() const noexcept { return provenance.class_names.size(); }
};

struct MoveStats {
  std::array<std::size_t, 4> proposed{};
  std::array<std::size_t, 4> accepted{};

  double rate(MoveKind move) const {
    const auto i = static_cast<std::size_t>(move);
    return proposed[i] == 0 ? 0.0
                            : static_cast<double>(accepted[i]) / static_cast<double>(proposed[i]);
  }
  std::size_t total_proposed() const { return proposed[0] + proposed[1] + proposed[2] + proposed[3]; }
  std::size_t total_accepted() const { return accepted[0] + accepted[1] + accepted[2] + accepted[3]; }
};

struct TracePoint {
  std::size_t iteration = 0;
  std::size_t splits = 0;
};

struct ChainState {
  DecisionTree current;
  double current_log_lik = 0.0;
  std::size_t iteration = 0;
  MoveStats stats;
  std::vector<TracePoint> size_trace;
};

struct Diagnostics {
  MoveStats stats;
  std::size_t burn_in = 0;
  std::size_t iterations = 0;
  std::size_t initial_splits = 0;
  std::size_t final_splits = 0;
  std::vector<TracePoint> size_trace;
  std::vector<std::size_t> retained_iterations;

  double acceptance_fraction() const {
    const auto p = stats.total_proposed();
    return p == 0 ? 0.0 : static_cast<double>(stats.total_accepted()) / static_cast<double>(p);
  }
};

// Sizes entering the Birth/Death dimension-matching term, always taken as
// (terminals of the smaller tree, prunable splits of the larger tree).
struct MoveContext {
  std::size_t terminals = 0;
  std::size_t prunable = 0;
};

struct Proposal {
  MoveKind move = MoveKind::kBirth;
  std::optional<DecisionTree> candidate;  // empty: move inapplicable
  MoveContext context;
  double log_proposal_ratio = 0.0;
};

// Log of the proposal-and-prior part of the Metropolis-Hastings ratio. The
// tree prior is the product of the uniform attribute and rule draws of its
// splits, which cancels Birth's draw densities and leaves
// log(p_death / p_birth) + log(k_T / D') for Birth, its reciprocal for Death
// and zero for the two change moves.
inline double log_move_ratio(MoveKind move, const MoveContext& context,
                             const MoveProbabilities& probs) {
  const double dimension =
      std::log(static_cast<double>(context.terminals) / static_cast<double>(context.prunable));
  switch (move) {
    case MoveKind::kBirth: return std::log(probs.death / probs.birth) + dimension;
    case MoveKind::kDeath: return std::log(probs.birth / probs.death) - dimension;
    default: return 0.0;
  }
}

inline double acceptance_probability(double current_log_lik, double candidate_log_lik,
                                     MoveKind move, const MoveContext& context,
                                     const ChainConfig& config) {
  const double delta =
      candidate_log_lik - current_log_lik + log_move_ratio(move, context, config.move_probs);
  return delta >= 0.0 ? 1.0 : std::exp(delta);
}

inline bool accept(double current_log_lik, double candidate_log_lik, MoveKind move,
                   const MoveContext& context, const ChainConfig& config, Rng& rng) {
  const double p =
      acceptance_probability(current_log_lik, candidate_log_lik, move, context, config);
  return rng.uniform() < p;
}

inline MoveKind draw_move(const MoveProbabilities& probs, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (MoveKind move : kAllMoves) {
    cumulative += probs.of(move);
    if (u < cumulative) return move;
  }
  return MoveKind::kChangeRule;
}

// Builds a candidate for `move` from `current`. Inapplicable moves (nothing
// to prune, no alternative rule, a rank offset of zero or out of range)
// return a proposal without a candidate.
inline Proposal propose_move(MoveKind move, const DecisionTree& current,
                             const RuleCatalog& catalog, const ChainConfig& config, Rng& rng) {
  Proposal p;
  p.move = move;
  const auto& splittable = catalog.splittable();
  switch (move) {
    case MoveKind::kBirth: {
      if (splittable.empty()) return p;
      const auto terminals = current.terminal_indices();
      const std::size_t target = terminals[rng.uniform_index(terminals.size())];
      const std::size_t attribute = splittable[rng.uniform_index(splittable.size())];
      const std::size_t rule = rng.uniform_index(catalog.rule_count(attribute));
      DecisionTree candidate = split_terminal(current, target, catalog_rule(catalog, attribute, rule));
      p.context = {terminals.size(), candidate.prunable_splits().size()};
      p.candidate = std::move(candidate);
      break;
    }
    case MoveKind::kDeath: {
      const auto prunable = current.prunable_splits();
      if (prunable.empty()) return p;
      const std::size_t target = prunable[rng.uniform_index(prunable.size())];
      DecisionTree candidate = prune_split(current, target);
      p.context = {candidate.terminal_count(), prunable.size()};
      p.candidate = std::move(candidate);
      break;
    }
    case MoveKind::kChangeSplit: {
      const auto splits = current.split_indices();
      if (splits.empty() || splittable.empty()) return p;
      const std::size_t target = splits[rng.uniform_index(splits.size())];
      const std::size_t attribute = splittable[rng.uniform_index(splittable.size())];
      const std::size_t rule = rng.uniform_index(catalog.rule_count(attribute));
      p.candidate = set_split(current, target, catalog_rule(catalog, attribute, rule));
      break;
    }
    case MoveKind::kChangeRule: {
      const auto splits = current.split_indices();
      if (splits.empty()) return p;
      const std::size_t target = splits[rng.uniform_index(splits.size())];
      const SplitRule old = current.split(target).rule;
      const double step = std::sqrt(config.proposal_variance) * rng.normal();
      const long long offset = std::llround(step);
      const long long moved = static_cast<long long>(old.rule) + offset;
      if (offset == 0 || moved < 0 ||
          moved >= static_cast<long long>(catalog.rule_count(old.attribute)))
        return p;
      p.candidate = set_split(current, target,
                              catalog_rule(catalog, old.attribute, static_cast<std::size_t>(moved)));
      break;
    }
  }
  p.log_proposal_ratio = log_move_ratio(move, p.context, config.move_probs);
  return p;
}

inline Proposal propose(const ChainState& state, const RuleCatalog& catalog,
                        const ChainConfig& config, Rng& rng) {
  const MoveKind move = draw_move(config.move_probs, rng);
  return propose_move(move, state.current, catalog, config, rng);
}

struct StepOutcome {
  MoveKind move = MoveKind::kBirth;
  bool applicable = false;
  bool accepted = false;
};

// One Reversible-Jump chain over trees for a fixed dataset. Strictly
// sequential; independent chains share nothing mutable.
class Chain {
 public:
  Chain(const Dataset& data, const RuleCatalog& catalog, const ChainConfig& config)
      : data_(data), catalog_(catalog), config_(config), rng_(config.seed) {
    config_.validate();
    if (catalog_.attribute_count() != data_.attribute_count())
      throw ParameterError("rule catalog does not match the dataset");
    if (data_.size() < 2 * config_.min_node_size)
      throw DegenerateDataError("n = " + std::to_string(data_.size()) +
                                " is below 2 * min_node_size");
    if (catalog_.splittable().empty())
      throw DegenerateDataError("every attribute is constant; no split is possible");
    max_splits_ = data_.size() - 1;
    if (config_.max_splits != 0) max_splits_ = std::min(max_splits_, config_.max_splits);
    initialize();
  }

  const ChainState& state() const noexcept { return state_; }
  std::size_t max_splits() const noexcept { return max_splits_; }

  StepOutcome step() {
    ++state_.iteration;
    StepOutcome outcome;
    Proposal p = propose(state_, catalog_, config_, rng_);
    outcome.move = p.move;
    const auto slot = static_cast<std::size_t>(p.move);
    ++state_.stats.proposed[slot];
    if (p.candidate && p.candidate->split_count() <= max_splits_ &&
        p.candidate->recount_in_place(data_, config_.min_node_size)) {
      outcome.applicable = true;
      const double candidate_log_lik = log_marginal_likelihood(*p.candidate, data_, {config_.alpha});
      if (accept(state_.current_log_lik, candidate_log_lik, p.move, p.context, config_, rng_)) {
        state_.current = std::move(*p.candidate);
        state_.current_log_lik = candidate_log_lik;
        ++state_.stats.accepted[slot];
        outcome.accepted = true;
      }
    }
    if (state_.iteration % config_.trace_stride == 0)
      state_.size_trace.push_back({state_.iteration, state_.current.split_count()});
    return outcome;
  }

 private:
  // Starts from one uniformly drawn valid split, trying up to s_max times.
  void initialize() {
    const auto& splittable = catalog_.splittable();
    const std::size_t attempts = std::max<std::size_t>(data_.size() - 1, 1);
    for (std::size_t a = 0; a < attempts; ++a) {
      const std::size_t attribute = splittable[rng_.uniform_index(splittable.size())];
      const std::size_t rule = rng_.uniform_index(catalog_.rule_count(attribute));
      DecisionTree tree = split_terminal(DecisionTree(data_.class_count()), 0,
                                         catalog_rule(catalog_, attribute, rule));
      if (tree.recount_in_place(data_, config_.min_node_size)) {
        state_.current_log_lik = log_marginal_likelihood(tree, data_, {config_.alpha});
        state_.current = std::move(tree);
        return;
      }
    }
    throw InitializationError("no valid single split found after " + std::to_string(attempts) +
                              " attempts");
  }

  const Dataset& data_;
  const RuleCatalog& catalog_;
  ChainConfig config_;
  Rng rng_;
  std::size_t max_splits_ = 0;
  ChainState state_;
};

struct ChainRun {
  Ensemble ensemble;
  Diagnostics diagnostics;
};

// Burn-in then thinned collection: after burn_in discarded iterations, the
// state at every thinning-th iteration is kept until post_burn_in trees.
inline ChainRun run_chain(const Dataset& data, const RuleCatalog& catalog,
                          const ChainConfig& config, int fold = -1) {
  Chain chain(data, catalog, config);
  ChainRun run;
  run.diagnostics.burn_in = config.burn_in;
  run.diagnostics.initial_splits = chain.state().current.split_count();
  for (std::size_t i = 0; i < config.burn_in; ++i) chain.step();
  run.ensemble.trees.reserve(config.post_burn_in);
  run.ensemble.log_liks.reserve(config.post_burn_in);
  for (std::size_t kept = 0; kept < config.post_burn_in; ++kept) {
    for (std::size_t t = 0; t < config.thinning; ++t) chain.step();
    run.ensemble.trees.push_back(chain.state().current);
    run.ensemble.log_liks.push_back(chain.state().current_log_lik);
    run.diagnostics.retained_iterations.push_back(chain.state().iteration);
  }
  const auto& state = chain.state();
  run.diagnostics.stats = state.stats;
  run.diagnostics.iterations = state.iteration;
  run.diagnostics.final_splits = state.current.split_count();
  run.diagnostics.size_trace = state.size_trace;

  auto& prov = run.ensemble.provenance;
  prov.config_echo = config.echo();
  prov.config_digest = config.digest();
  prov.dataset_digest = dataset_digest(data);
  prov.fold = fold;
  prov.alpha = config.alpha;
  prov.attribute_names = data.attribute_names();
  prov.class_names = data.class_names();
  return run;
}

struct StationaritySummary {
  double mean_last_burn_in_quartile = 0.0;
  double mean_post_burn_in = 0.0;
  double drift_ratio = 0.0;
};

// Compares the mean tree size over the last quarter of the burn-in trace
// points with the mean over the post-burn-in points.
inline StationaritySummary stationarity_summary(const Diagnostics& diag) {
  std::vector<double> burn, post;
  for (const auto& point : diag.size_trace)
    (point.iteration <= diag.burn_in ? burn : post).push_back(static_cast<double>(point.splits));
  if (burn.empty() || post.empty())
    throw DiagnosticsError("size trace needs points in both burn-in and post burn-in");
  const std::size_t quartile = std::max<std::size_t>(1, burn.size() / 4);
  StationaritySummary s;
  double sum = 0.0;
  for (std::size_t i = burn.size() - quartile; i < burn.size(); ++i) sum += burn[i];
  s.mean_last_burn_in_quartile = sum / static_cast<double>(quartile);
  sum = 0.0;
  for (double v : post) sum += v;
  s.mean_post_burn_in = sum / static_cast<double>(post.size());
  s.drift_ratio = std::abs(s.mean_post_burn_in - s.mean_last_burn_in_quartile) /
                  std::max(1.0, s.mean_last_burn_in_quartile);
  return s;
}

}  // namespace bmatree

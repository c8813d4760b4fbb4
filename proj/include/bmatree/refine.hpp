#pragma once

#include <algorithm>
#include <limits>
#include <set>
#include <vector>

#include "bmatree/dataset.hpp"
#include "bmatree/error.hpp"
#include "bmatree/sampler.hpp"

namespace bmatree {

// Posterior usage probability of each attribute: its share of all splitting
// nodes across the ensemble.
struct ImportanceProfile {
  std::vector<double> usage;
  std::vector<std::size_t> split_counts;
  std::size_t total_splits = 0;
};

inline ImportanceProfile usage_profile(const Ensemble& ensemble) {
  if (ensemble.empty()) throw EvaluationError("cannot profile an empty ensemble");
  ImportanceProfile profile;
  profile.split_counts.assign(ensemble.attribute_count(), 0);
  for (const auto& tree : ensemble.trees) {
    for (const auto& node : tree.nodes()) {
      if (const auto* s = std::get_if<SplitNode>(&node)) {
        const std::size_t j = s->rule.attribute;
        if (j >= profile.split_counts.size()) profile.split_counts.resize(j + 1, 0);
        ++profile.split_counts[j];
        ++profile.total_splits;
      }
    }
  }
  if (profile.total_splits == 0)
    throw DegenerateDataError("every tree is a single terminal; usage is undefined");
  profile.usage.reserve(profile.split_counts.size());
  for (auto count : profile.split_counts)
    profile.usage.push_back(static_cast<double>(count) / static_cast<double>(profile.total_splits));
  return profile;
}

struct WeakSet {
  double threshold = 0.0;
  std::set<std::size_t> attributes;  // { j : usage[j] < threshold }
  std::vector<double> usage;         // the profile the set was cut from

  std::size_t n_weak() const noexcept { return attributes.size(); }
};

inline WeakSet weak_attributes(const ImportanceProfile& profile, double threshold) {
  if (!(threshold >= 0.0)) throw ParameterError("threshold must be non-negative");
  WeakSet weak{threshold, {}, profile.usage};
  for (std::size_t j = 0; j < profile.usage.size(); ++j)
    if (profile.usage[j] < threshold) weak.attributes.insert(j);
  return weak;
}

inline bool uses_any(const DecisionTree& tree, const std::set<std::size_t>& attributes) {
  for (const auto& node : tree.nodes())
    if (const auto* s = std::get_if<SplitNode>(&node))
      if (attributes.count(s->rule.attribute) != 0) return true;
  return false;
}

// Drops every tree that splits on a weak attribute. Survivors keep their
// order and log-likelihoods.
inline Ensemble refine_ensemble(const Ensemble& ensemble, const WeakSet& weak) {
  if (ensemble.empty()) throw EvaluationError("cannot refine an empty ensemble");
  Ensemble out;
  out.provenance = ensemble.provenance;
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    if (uses_any(ensemble.trees[i], weak.attributes)) continue;
    out.trees.push_back(ensemble.trees[i]);
    out.log_liks.push_back(ensemble.log_liks[i]);
  }
  if (out.empty()) {
    // A tree survives T' exactly when T' <= the lowest usage among its
    // attributes, so the best T' is the largest such minimum.
    double best = 0.0;
    for (const auto& tree : ensemble.trees) {
      double lowest = std::numeric_limits<double>::infinity();
      for (std::size_t j : tree.attributes_used())
        lowest = std::min(lowest, j < weak.usage.size() ? weak.usage[j] : 0.0);
      best = std::max(best, lowest);
    }
    throw RefinementExhaustedError(weak.threshold, best);
  }
  RefinementInfo info;
  info.threshold = weak.threshold;
  info.n_weak = weak.n_weak();
  for (std::size_t j : weak.attributes)
    info.weak_attributes.push_back(j < ensemble.provenance.attribute_names.size()
                                       ? ensemble.provenance.attribute_names[j]
                                       : std::to_string(j));
  info.retained = out.size();
  info.total = ensemble.size();
  out.provenance.refinement = std::move(info);
  return out;
}

// Attributes kept when the weak ones are removed, increasing.
inline std::vector<std::size_t> surviving_columns(std::size_t attribute_count,
                                                  const WeakSet& weak) {
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < attribute_count; ++j)
    if (weak.attributes.count(j) == 0) keep.push_back(j);
  return keep;
}

// The comparison technique: delete the weak columns, rebuild the catalog and
// resample with the same configuration and seed.
inline ChainRun reduce_and_rerun(const Dataset& data, const WeakSet& weak,
                                 const ChainConfig& config, int fold = -1) {
  const auto keep = surviving_columns(data.attribute_count(), weak);
  if (keep.empty()) throw ParameterError("every attribute is weak; nothing left to resample");
  const Dataset reduced = select_columns(data, keep);
  const RuleCatalog catalog = build_rule_catalog(reduced);
  ChainRun run = run_chain(reduced, catalog, config, fold);
  if (keep.size() != data.attribute_count()) run.ensemble.provenance.attribute_map = keep;
  return run;
}

}  // namespace bmatree

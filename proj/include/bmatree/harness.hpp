#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bmatree/bma.hpp"
#include "bmatree/dataset.hpp"
#include "bmatree/ensemble_io.hpp"
#include "bmatree/error.hpp"
#include "bmatree/parallel.hpp"
#include "bmatree/refine.hpp"
#include "bmatree/rng.hpp"
#include "bmatree/sampler.hpp"

namespace bmatree {

enum class Techniques { kRefine, kRerun, kBoth };

inline bool runs_refine(Techniques t) { return t != Techniques::kRerun; }
inline bool runs_rerun(Techniques t) { return t != Techniques::kRefine; }

inline const char* techniques_name(Techniques t) {
  switch (t) {
    case Techniques::kRefine: return "refine";
    case Techniques::kRerun: return "rerun";
    case Techniques::kBoth: return "both";
  }
  return "?";
}

struct ExperimentSpec {
  std::optional<std::string> data_path;  // CSV input; synthetic when empty
  SyntheticSpec synthetic;
  std::optional<std::uint64_t> data_seed;  // synthetic seed; defaults to master_seed
  bool shuffle_labels = false;
  std::size_t k_folds = 3;
  ChainConfig chain;  // chain.seed is ignored; chains are seeded per fold
  std::vector<double> thresholds{0.001, 0.002, 0.003, 0.004, 0.005};
  Techniques techniques = Techniques::kBoth;
  std::string out_dir = "out";
  std::uint64_t master_seed = 7;
  std::size_t workers = 1;
  std::size_t repeats = 1;  // chains per fold; spread is taken over folds x repeats
  std::size_t histogram_bins = 50;
  bool persist_ensembles = true;

  void validate() const {
    chain.validate();
    if (k_folds < 2) throw ParameterError("k_folds must be at least 2");
    if (repeats < 1) throw ParameterError("repeats must be at least 1");
    if (workers < 1) throw ParameterError("workers must be at least 1");
    if (histogram_bins < 1) throw ParameterError("histogram_bins must be at least 1");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (!(thresholds[i] >= 0.0)) throw ParameterError("thresholds must be non-negative");
      if (i > 0 && !(thresholds[i] > thresholds[i - 1]))
        throw ParameterError("thresholds must be strictly increasing");
    }
  }

  std::uint64_t synthetic_seed() const { return data_seed.value_or(master_seed); }

  // Every setting as "key = value" lines, in the config file vocabulary.
  std::string echo() const {
    std::ostringstream out;
    if (data_path) {
      out << "data = " << *data_path << '\n';
    } else {
      out << "n = " << synthetic.n << "\nm = " << synthetic.m << "\nclasses = " << synthetic.classes
          << "\ninformative = " << synthetic.informative
          << "\neffect = " << detail::format_double(synthetic.effect)
          << "\ndata_seed = " << synthetic_seed() << '\n';
    }
    out << "shuffle_labels = " << (shuffle_labels ? "true" : "false") << '\n';
    out << "seed = " << master_seed << '\n';
    out << "k_folds = " << k_folds << '\n';
    out << "repeats = " << repeats << '\n';
    out << "techniques = " << techniques_name(techniques) << '\n';
    out << "thresholds = ";
    for (std::size_t i = 0; i < thresholds.size(); ++i)
      out << (i ? "," : "") << detail::format_double(thresholds[i]);
    out << '\n';
    out << "histogram_bins = " << histogram_bins << '\n';
    std::istringstream chain_echo(chain.echo());
    std::string line;
    while (std::getline(chain_echo, line))
      if (line.rfind("seed = ", 0) != 0) out << line << '\n';
    return out.str();
  }
};

namespace detail {

inline std::string trim_copy(std::string_view s) { return std::string(trim(s)); }

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty())
    throw ParameterError("'" + key + "' expects a non-negative integer, got '" + value + "'");
  return v;
}

inline double parse_real(const std::string& key, const std::string& value) {
  double v = 0.0;
  if (!parse_finite(value, v)) throw ParameterError("'" + key + "' expects a number, got '" + value + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ParameterError("'" + key + "' expects true or false, got '" + value + "'");
}

}  // namespace detail

// Applies one config setting. Unknown keys are errors.
inline void apply_setting(ExperimentSpec& spec, const std::string& key, const std::string& value) {
  using namespace detail;
  auto size = [&] { return static_cast<std::size_t>(parse_u64(key, value)); };
  auto real = [&] { return parse_real(key, value); };
  auto& c = spec.chain;
  if (key == "data") spec.data_path = value;
  else if (key == "n") spec.synthetic.n = size();
  else if (key == "m") spec.synthetic.m = size();
  else if (key == "classes") spec.synthetic.classes = size();
  else if (key == "informative") spec.synthetic.informative = size();
  else if (key == "effect") spec.synthetic.effect = real();
  else if (key == "seed") spec.master_seed = parse_u64(key, value);
  else if (key == "data_seed") spec.data_seed = parse_u64(key, value);
  else if (key == "shuffle_labels") spec.shuffle_labels = parse_bool(key, value);
  else if (key == "k_folds") spec.k_folds = size();
  else if (key == "repeats") spec.repeats = size();
  else if (key == "workers") spec.workers = size();
  else if (key == "out") spec.out_dir = value;
  else if (key == "histogram_bins") spec.histogram_bins = size();
  else if (key == "persist_ensembles") spec.persist_ensembles = parse_bool(key, value);
  else if (key == "techniques") {
    if (value == "refine") spec.techniques = Techniques::kRefine;
    else if (value == "rerun") spec.techniques = Techniques::kRerun;
    else if (value == "both") spec.techniques = Techniques::kBoth;
    else throw ParameterError("'techniques' expects refine, rerun or both, got '" + value + "'");
  } else if (key == "thresholds") {
    spec.thresholds.clear();
    if (!value.empty()) {
      for (auto cell : split_commas(value)) spec.thresholds.push_back(parse_real(key, trim_copy(cell)));
    }
  }
  else if (key == "burn_in") c.burn_in = size();
  else if (key == "post_burn_in") c.post_burn_in = size();
  else if (key == "thinning") c.thinning = size();
  else if (key == "min_node_size") c.min_node_size = size();
  else if (key == "p_birth") c.move_probs.birth = real();
  else if (key == "p_death") c.move_probs.death = real();
  else if (key == "p_change_split") c.move_probs.change_split = real();
  else if (key == "p_change_rule") c.move_probs.change_rule = real();
  else if (key == "proposal_variance") c.proposal_variance = real();
  else if (key == "alpha") c.alpha = real();
  else if (key == "trace_stride") c.trace_stride = size();
  else throw ParameterError("unknown config key '" + key + "'");
}

// Flat "key = value" text. '#' starts a comment; blank lines are ignored.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> settings;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ParameterError("config line " + std::to_string(number) + ": expected key = value");
    auto key = detail::trim_copy(body.substr(0, eq));
    auto value = detail::trim_copy(body.substr(eq + 1));
    if (key.empty()) throw ParameterError("config line " + std::to_string(number) + ": empty key");
    settings.emplace_back(std::move(key), std::move(value));
  }
  return settings;
}

inline void apply_config_text(ExperimentSpec& spec, std::string_view text) {
  for (const auto& [key, value] : parse_config_text(text)) apply_setting(spec, key, value);
}

inline Dataset load_experiment_data(const ExperimentSpec& spec) {
  Dataset data;
  if (spec.data_path) {
    data = load_csv(*spec.data_path);
  } else {
    SyntheticSpec s = spec.synthetic;
    s.seed = spec.synthetic_seed();
    data = generate_synthetic(s);
  }
  if (spec.shuffle_labels) data = shuffle_labels(data, derive_seed(spec.master_seed, 0x5EED));
  return data;
}

// Mean and 2 x sample standard deviation.
struct Spread {
  double mean = 0.0;
  double two_sigma = 0.0;
};

inline Spread spread_of(const std::vector<double>& values) {
  Spread s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.two_sigma = 2.0 * std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

struct Aggregate {
  Spread accuracy;
  Spread entropy;
};

inline Aggregate aggregate(const std::vector<Evaluation>& evals) {
  std::vector<double> p, e;
  for (const auto& ev : evals) {
    p.push_back(ev.accuracy_percent);
    e.push_back(ev.entropy_bits);
  }
  return {spread_of(p), spread_of(e)};
}

// One chain of the cross-validation: a (fold, repeat) pair.
struct UnitRun {
  std::size_t fold = 0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  ChainRun run;
  Evaluation evaluation;
  std::vector<double> per_tree_accuracy;
};

struct FoldData {
  Dataset train;
  Dataset test;
};

struct CrossValidation {
  Dataset data;
  FoldPlan plan;
  std::vector<FoldData> folds;
  std::vector<UnitRun> units;
  Aggregate baseline;
};

inline std::uint64_t unit_seed(std::uint64_t master, std::size_t fold, std::size_t repeat) {
  const std::uint64_t fold_seed = derive_seed(master, fold);
  return repeat == 0 ? fold_seed : derive_seed(fold_seed, repeat);
}

// Trains one chain per (fold, repeat) on the out-of-fold rows and scores it
// on the fold.
inline CrossValidation cross_validate(const ExperimentSpec& spec) {
  spec.validate();
  CrossValidation cv;
  cv.data = load_experiment_data(spec);
  cv.plan = make_folds(cv.data, spec.k_folds, mix_seed(spec.master_seed));
  for (std::size_t f = 0; f < spec.k_folds; ++f) {
    const auto train = cv.plan.train_rows(f);
    const auto test = cv.plan.test_rows(f);
    cv.folds.push_back({select_rows(cv.data, train), select_rows(cv.data, test)});
  }
  cv.units.resize(spec.k_folds * spec.repeats);
  parallel_for(cv.units.size(), spec.workers, [&](std::size_t u) {
    UnitRun& unit = cv.units[u];
    unit.fold = u / spec.repeats;
    unit.repeat = u % spec.repeats;
    unit.seed = unit_seed(spec.master_seed, unit.fold, unit.repeat);
    const FoldData& fd = cv.folds[unit.fold];
    ChainConfig config = spec.chain;
    config.seed = unit.seed;
    const RuleCatalog catalog = build_rule_catalog(fd.train);
    unit.run = run_chain(fd.train, catalog, config, static_cast<int>(unit.fold));
    unit.evaluation = evaluate(unit.run.ensemble, fd.test, config.alpha);
    unit.per_tree_accuracy = per_tree_performance(unit.run.ensemble, fd.test, config.alpha);
  });
  std::vector<Evaluation> evals;
  for (const auto& unit : cv.units) evals.push_back(unit.evaluation);
  cv.baseline = aggregate(evals);
  return cv;
}

enum class Technique { kRefine, kRerun };

inline const char* technique_name(Technique t) {
  return t == Technique::kRefine ? "refine" : "rerun";
}

struct PersistedEnsemble {
  std::string name;  // file name under ensembles/
  std::string digest;
  std::string text;  // empty when persistence is off
};

struct SweepCell {
  std::size_t n_weak = 0;
  std::vector<std::string> weak_attributes;
  bool exhausted = false;
  std::string note;  // why the cell is exhausted
  Evaluation evaluation;
  std::size_t retained = 0;
  std::size_t total = 0;
  std::vector<bool> survivors;  // refine only: mask over the baseline ensemble
  std::string ensemble_name;
  std::string ensemble_digest;
  std::optional<Diagnostics> diagnostics;  // rerun only
};

struct SweepRow {
  double threshold = 0.0;
  Technique technique = Technique::kRefine;
  std::vector<SweepCell> cells;  // one per unit
  bool exhausted = false;
  double n_weak_mean = 0.0;
  Aggregate aggregate;
};

// Per-tree accuracies pooled over units, split by refinement outcome.
struct HistogramData {
  double threshold = 0.0;
  std::vector<double> original;
  std::vector<double> refined;
  std::vector<double> discarded;
};

struct InvariantChecks {
  bool soundness = true;            // no survivor splits on a weak attribute
  bool zero_threshold_identity = true;
  bool survivor_monotonicity = true;
  bool profile_consistency = true;  // refined profile is zero on weak attributes

  bool all() const {
    return soundness && zero_threshold_identity && survivor_monotonicity && profile_consistency;
  }
};

struct SweepReport {
  ExperimentSpec spec;
  std::string spec_echo;
  std::string dataset_digest;
  std::vector<std::string> attribute_names;
  std::size_t n = 0;
  std::size_t class_count = 0;
  FoldPlan plan;
  std::vector<UnitRun> units;
  std::vector<std::string> unit_ensemble_names;
  std::vector<std::string> unit_ensemble_digests;
  std::vector<std::string> unit_diagnostics_digests;
  std::vector<ImportanceProfile> profiles;  // baseline, per unit
  Aggregate baseline;
  std::vector<SweepRow> rows;
  std::vector<HistogramData> histograms;
  InvariantChecks invariants;
  std::vector<PersistedEnsemble> ensembles;
};

namespace detail {

inline std::string threshold_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", t);
  return buf;
}

inline std::string unit_label(std::size_t fold, std::size_t repeat, std::size_t repeats) {
  std::string s = "fold" + std::to_string(fold + 1);
  if (repeats > 1) s += "_rep" + std::to_string(repeat + 1);
  return s;
}

inline std::string diagnostics_digest(const Diagnostics& diag) {
  return hex_digest(diagnostics_to_json(diag).dump());
}

}  // namespace detail

// Cross-validates the baseline, then for every threshold cuts the weak set
// from each unit's baseline profile and scores the refined ensemble and/or
// the ensemble resampled on the reduced data.
inline SweepReport threshold_sweep(const ExperimentSpec& spec) {
  CrossValidation cv = cross_validate(spec);
  SweepReport report;
  report.spec = spec;
  report.spec_echo = spec.echo();
  report.dataset_digest = dataset_digest(cv.data);
  report.attribute_names = cv.data.attribute_names();
  report.n = cv.data.size();
  report.class_count = cv.data.class_count();
  report.plan = cv.plan;
  report.baseline = cv.baseline;

  auto persist = [&](std::string name, const Ensemble& e) {
    PersistedEnsemble p;
    p.name = std::move(name);
    const std::string text = ensemble_to_text(e);
    p.digest = hex_digest(text);
    if (spec.persist_ensembles) p.text = text;
    return p;
  };

  const std::size_t units = cv.units.size();
  std::vector<PersistedEnsemble> baseline_files;
  for (const auto& unit : cv.units) {
    const auto label = detail::unit_label(unit.fold, unit.repeat, spec.repeats);
    baseline_files.push_back(persist(label + "_baseline.json", unit.run.ensemble));
    report.unit_ensemble_names.push_back(baseline_files.back().name);
    report.unit_ensemble_digests.push_back(baseline_files.back().digest);
    report.unit_diagnostics_digests.push_back(detail::diagnostics_digest(unit.run.diagnostics));
    report.profiles.push_back(usage_profile(unit.run.ensemble));
  }
  for (auto& f : baseline_files) report.ensembles.push_back(std::move(f));

  const std::size_t grid = spec.thresholds.size();
  std::vector<std::vector<WeakSet>> weak(grid);
  for (std::size_t t = 0; t < grid; ++t)
    for (std::size_t u = 0; u < units; ++u)
      weak[t].push_back(weak_attributes(report.profiles[u], spec.thresholds[t]));

  auto fill_weak = [&](SweepCell& cell, const WeakSet& w, const Dataset& train) {
    cell.n_weak = w.n_weak();
    for (std::size_t j : w.attributes) cell.weak_attributes.push_back(train.attribute_names()[j]);
  };

  std::vector<SweepRow> refine_rows, rerun_rows;
  std::vector<std::vector<PersistedEnsemble>> refine_files(grid), rerun_files(grid);

  if (runs_refine(spec.techniques)) {
    refine_rows.resize(grid);
    for (std::size_t t = 0; t < grid; ++t) {
      SweepRow& row = refine_rows[t];
      row.threshold = spec.thresholds[t];
      row.technique = Technique::kRefine;
      row.cells.resize(units);
      refine_files[t].resize(units);
      HistogramData hist;
      hist.threshold = row.threshold;
      for (std::size_t u = 0; u < units; ++u) {
        const UnitRun& unit = cv.units[u];
        const FoldData& fd = cv.folds[unit.fold];
        SweepCell& cell = row.cells[u];
        fill_weak(cell, weak[t][u], fd.train);
        const Ensemble& base = unit.run.ensemble;
        cell.total = base.size();
        cell.survivors.resize(base.size());
        for (std::size_t i = 0; i < base.size(); ++i) {
          cell.survivors[i] = !uses_any(base.trees[i], weak[t][u].attributes);
          hist.original.push_back(unit.per_tree_accuracy[i]);
          (cell.survivors[i] ? hist.refined : hist.discarded).push_back(unit.per_tree_accuracy[i]);
        }
        std::optional<Ensemble> refined;
        try {
          refined = refine_ensemble(base, weak[t][u]);
        } catch (const RefinementExhaustedError& e) {
          cell.exhausted = true;
          cell.note = e.what();
        }
        if (refined) {
          cell.retained = refined->size();
          cell.evaluation = evaluate(*refined, fd.test, spec.chain.alpha);
          auto file = persist(detail::unit_label(unit.fold, unit.repeat, spec.repeats) +
                                  "_refine_T" + detail::threshold_label(row.threshold) + ".json",
                              *refined);
          cell.ensemble_name = file.name;
          cell.ensemble_digest = file.digest;
          refine_files[t][u] = std::move(file);
          // The profile is undefined when only single-terminal trees survive.
          const bool has_splits = std::any_of(refined->trees.begin(), refined->trees.end(),
                                              [](const DecisionTree& d) { return d.split_count() > 0; });
          if (has_splits) {
            const auto profile = usage_profile(*refined);
            for (std::size_t j : weak[t][u].attributes)
              if (j < profile.usage.size() && profile.usage[j] != 0.0)
                report.invariants.profile_consistency = false;
          }
        }
        if (refined)
          for (const auto& tree : refined->trees)
            if (uses_any(tree, weak[t][u].attributes)) report.invariants.soundness = false;
        if (row.threshold == 0.0 && (cell.exhausted || cell.retained != base.size()))
          report.invariants.zero_threshold_identity = false;
      }
      report.histograms.push_back(std::move(hist));
    }
    for (std::size_t u = 0; u < units; ++u)
      for (std::size_t t = 1; t < grid; ++t)
        if (refine_rows[t].cells[u].retained > refine_rows[t - 1].cells[u].retained)
          report.invariants.survivor_monotonicity = false;
  }

  if (runs_rerun(spec.techniques)) {
    rerun_rows.resize(grid);
    for (std::size_t t = 0; t < grid; ++t) {
      rerun_rows[t].threshold = spec.thresholds[t];
      rerun_rows[t].technique = Technique::kRerun;
      rerun_rows[t].cells.resize(units);
      rerun_files[t].resize(units);
    }
    parallel_for(grid * units, spec.workers, [&](std::size_t item) {
      const std::size_t t = item / units;
      const std::size_t u = item % units;
      const UnitRun& unit = cv.units[u];
      const FoldData& fd = cv.folds[unit.fold];
      SweepCell& cell = rerun_rows[t].cells[u];
      fill_weak(cell, weak[t][u], fd.train);
      ChainConfig config = spec.chain;
      config.seed = unit.seed;
      try {
        ChainRun run = reduce_and_rerun(fd.train, weak[t][u], config, static_cast<int>(unit.fold));
        const auto keep = surviving_columns(fd.test.attribute_count(), weak[t][u]);
        const Dataset test = select_columns(fd.test, keep);
        cell.evaluation = evaluate(run.ensemble, test, config.alpha);
        cell.retained = cell.total = run.ensemble.size();
        auto file = persist(detail::unit_label(unit.fold, unit.repeat, spec.repeats) + "_rerun_T" +
                                detail::threshold_label(rerun_rows[t].threshold) + ".json",
                            run.ensemble);
        cell.ensemble_name = file.name;
        cell.ensemble_digest = file.digest;
        rerun_files[t][u] = std::move(file);
        cell.diagnostics = std::move(run.diagnostics);
      } catch (const ParameterError& e) {
        cell.exhausted = true;
        cell.note = e.what();
      } catch (const DegenerateDataError& e) {
        cell.exhausted = true;
        cell.note = e.what();
      }
    });
  }

  auto finish = [&](SweepRow& row) {
    std::vector<Evaluation> evals;
    double n_weak = 0.0;
    for (const auto& cell : row.cells) {
      n_weak += static_cast<double>(cell.n_weak);
      if (cell.exhausted) row.exhausted = true;
      else evals.push_back(cell.evaluation);
    }
    row.n_weak_mean = n_weak / static_cast<double>(row.cells.size());
    if (!row.exhausted) row.aggregate = aggregate(evals);
  };
  for (std::size_t t = 0; t < grid; ++t) {
    if (!refine_rows.empty()) {
      finish(refine_rows[t]);
      report.rows.push_back(std::move(refine_rows[t]));
    }
    if (!rerun_rows.empty()) {
      finish(rerun_rows[t]);
      report.rows.push_back(std::move(rerun_rows[t]));
    }
  }
  for (std::size_t t = 0; t < grid; ++t) {
    for (auto& f : refine_files[t])
      if (!f.name.empty()) report.ensembles.push_back(std::move(f));
    for (auto& f : rerun_files[t])
      if (!f.name.empty()) report.ensembles.push_back(std::move(f));
  }
  report.units = std::move(cv.units);
  return report;
}

// Fixed decimal rendering with four significant digits (27.45, 478.3, 0.1234).
inline std::string format_sig4(double v) {
  if (!std::isfinite(v)) return "NA";
  int decimals = 3;
  if (v != 0.0) {
    const int magnitude = static_cast<int>(std::floor(std::log10(std::abs(v))));
    decimals = std::max(0, 3 - magnitude);
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  // Rounding can carry into a new digit (9.9996 -> 10.000); re-render.
  std::string s = buf;
  if (v != 0.0) {
    const double rounded = std::strtod(buf, nullptr);
    const int magnitude = static_cast<int>(std::floor(std::log10(std::abs(rounded))));
    const int fixed = std::max(0, 3 - magnitude);
    if (fixed != decimals) {
      std::snprintf(buf, sizeof buf, "%.*f", fixed, rounded);
      s = buf;
    }
  }
  return s;
}

inline constexpr const char* kTableHeader = "T,n_weak,technique,P_mean,P_2sigma,E_mean,E_2sigma";

// Long-form table: one row per (T, technique), baseline first at T = 0.
inline std::string render_table_csv(const SweepReport& report) {
  std::string out = std::string(kTableHeader) + "\n";
  auto row_text = [](const std::string& t, const std::string& n_weak, const char* technique,
                     const Aggregate& a, bool exhausted) {
    if (exhausted) return t + "," + n_weak + "," + technique + ",NA,NA,NA,NA\n";
    return t + "," + n_weak + "," + technique + "," + format_sig4(a.accuracy.mean) + "," +
           format_sig4(a.accuracy.two_sigma) + "," + format_sig4(a.entropy.mean) + "," +
           format_sig4(a.entropy.two_sigma) + "\n";
  };
  out += row_text("0", "0.00", "baseline", report.baseline, false);
  for (const auto& row : report.rows) {
    char n_weak[32];
    std::snprintf(n_weak, sizeof n_weak, "%.2f", row.n_weak_mean);
    out += row_text(detail::threshold_label(row.threshold), n_weak, technique_name(row.technique),
                    row.aggregate, row.exhausted);
  }
  return out;
}

// Side-by-side layout: T | k | refine P, E | rerun P, E, each as mean +- 2sigma.
inline std::string render_table_text(const SweepReport& report) {
  auto cell = [](const Aggregate& a, bool p, bool exhausted) {
    if (exhausted) return std::string("exhausted");
    const Spread& s = p ? a.accuracy : a.entropy;
    return format_sig4(s.mean) + " +- " + format_sig4(s.two_sigma);
  };
  std::map<double, std::map<Technique, const SweepRow*>> grid;
  for (const auto& row : report.rows) grid[row.threshold][row.technique] = &row;
  char line[512];
  std::string out;
  std::snprintf(line, sizeof line, "%-8s %-7s | %-18s %-18s | %-18s %-18s\n", "T", "k",
                "refine P,%", "refine E", "rerun P,%", "rerun E");
  out += line;
  std::snprintf(line, sizeof line, "%-8s %-7s | %-18s %-18s | %-18s %-18s\n", "0", "0",
                cell(report.baseline, true, false).c_str(),
                cell(report.baseline, false, false).c_str(),
                cell(report.baseline, true, false).c_str(),
                cell(report.baseline, false, false).c_str());
  out += line;
  for (const auto& [t, by_technique] : grid) {
    const SweepRow* any = by_technique.begin()->second;
    char k[32];
    std::snprintf(k, sizeof k, "%.2f", any->n_weak_mean);
    std::string cols[4] = {"-", "-", "-", "-"};
    for (const auto& [technique, row] : by_technique) {
      const int base = technique == Technique::kRefine ? 0 : 2;
      cols[base] = cell(row->aggregate, true, row->exhausted);
      cols[base + 1] = cell(row->aggregate, false, row->exhausted);
    }
    std::snprintf(line, sizeof line, "%-8s %-7s | %-18s %-18s | %-18s %-18s\n",
                  detail::threshold_label(t).c_str(), k, cols[0].c_str(), cols[1].c_str(),
                  cols[2].c_str(), cols[3].c_str());
    out += line;
  }
  return out;
}

// Fixed-width bins over [0, 100]; the last bin includes 100.
inline std::vector<std::size_t> histogram_counts(const std::vector<double>& values, std::size_t bins) {
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>(std::floor(v / 100.0 * static_cast<double>(bins)));
    ++counts[std::min(b, bins - 1)];
  }
  return counts;
}

inline std::string render_histogram_csv(const HistogramData& h, std::size_t bins) {
  const auto original = histogram_counts(h.original, bins);
  const auto refined = histogram_counts(h.refined, bins);
  std::string out = "bin_lo,bin_hi,original,refined\n";
  const double width = 100.0 / static_cast<double>(bins);
  char line[128];
  for (std::size_t b = 0; b < bins; ++b) {
    std::snprintf(line, sizeof line, "%.4f,%.4f,%zu,%zu\n", width * static_cast<double>(b),
                  width * static_cast<double>(b + 1), original[b], refined[b]);
    out += line;
  }
  return out;
}

inline double mean_or_nan(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline std::string histogram_file_name(double threshold) {
  return "histogram_T" + detail::threshold_label(threshold) + ".csv";
}

inline nlohmann::ordered_json json_number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json aggregate_json(const Aggregate& a) {
  return {{"P_mean", a.accuracy.mean},
          {"P_2sigma", a.accuracy.two_sigma},
          {"E_mean", a.entropy.mean},
          {"E_2sigma", a.entropy.two_sigma}};
}

inline nlohmann::ordered_json report_to_json(const SweepReport& report) {
  nlohmann::ordered_json doc;
  doc["format"] = "bmatree-sweep-report";
  doc["version"] = 1;
  doc["conventions"] = {
      {"accuracy", "percent of test samples whose model-averaged argmax (ties to lowest class) is correct"},
      {"entropy", "Shannon entropy in bits of the model-averaged predictive distribution, summed over test samples"},
      {"spread", "2 x sample standard deviation across folds x repeats"},
      {"usage", "splits on an attribute / all splits in the ensemble"},
      {"weak", "usage strictly below T"}};
  doc["spec"] = echo_to_json(report.spec_echo);
  doc["spec_digest"] = hex_digest(report.spec_echo);
  doc["dataset"] = {{"digest", report.dataset_digest},
                    {"n", report.n},
                    {"m", report.attribute_names.size()},
                    {"classes", report.class_count},
                    {"attribute_names", report.attribute_names}};
  doc["folds"] = {{"k", report.plan.k_folds}, {"assignment", report.plan.assignment}};

  auto& units = doc["units"] = nlohmann::ordered_json::array();
  for (std::size_t u = 0; u < report.units.size(); ++u) {
    const auto& unit = report.units[u];
    nlohmann::ordered_json entry;
    entry["fold"] = unit.fold + 1;
    entry["repeat"] = unit.repeat + 1;
    entry["seed"] = unit.seed;
    entry["P"] = unit.evaluation.accuracy_percent;
    entry["E"] = unit.evaluation.entropy_bits;
    entry["trees"] = unit.run.ensemble.size();
    entry["ensemble"] = {{"file", "ensembles/" + report.unit_ensemble_names[u]},
                         {"digest", report.unit_ensemble_digests[u]}};
    entry["diagnostics_digest"] = report.unit_diagnostics_digests[u];
    entry["acceptance_fraction"] = unit.run.diagnostics.acceptance_fraction();
    try {
      const auto s = stationarity_summary(unit.run.diagnostics);
      entry["stationarity"] = {{"mean_size_last_burn_in_quartile", s.mean_last_burn_in_quartile},
                               {"mean_size_post_burn_in", s.mean_post_burn_in},
                               {"drift_ratio", s.drift_ratio}};
    } catch (const DiagnosticsError&) {
      entry["stationarity"] = nullptr;
    }
    entry["usage"] = report.profiles[u].usage;
    units.push_back(std::move(entry));
  }
  doc["baseline"] = aggregate_json(report.baseline);

  auto& rows = doc["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json r;
    r["T"] = row.threshold;
    r["technique"] = technique_name(row.technique);
    r["status"] = row.exhausted ? "exhausted" : "ok";
    r["n_weak_mean"] = row.n_weak_mean;
    if (row.exhausted) r["aggregate"] = nullptr;
    else r["aggregate"] = aggregate_json(row.aggregate);
    auto& cells = r["units"] = nlohmann::ordered_json::array();
    for (std::size_t u = 0; u < row.cells.size(); ++u) {
      const auto& cell = row.cells[u];
      nlohmann::ordered_json c;
      c["fold"] = report.units[u].fold + 1;
      c["repeat"] = report.units[u].repeat + 1;
      c["n_weak"] = cell.n_weak;
      c["weak_attributes"] = cell.weak_attributes;
      if (cell.exhausted) {
        c["status"] = "exhausted";
        c["note"] = cell.note;
      } else {
        c["status"] = "ok";
        c["P"] = cell.evaluation.accuracy_percent;
        c["E"] = cell.evaluation.entropy_bits;
        c["retained"] = cell.retained;
        c["total"] = cell.total;
        if (!cell.ensemble_name.empty())
          c["ensemble"] = {{"file", "ensembles/" + cell.ensemble_name},
                           {"digest", cell.ensemble_digest}};
        if (cell.diagnostics) {
          c["acceptance_fraction"] = cell.diagnostics->acceptance_fraction();
          c["diagnostics_digest"] = detail::diagnostics_digest(*cell.diagnostics);
        }
      }
      cells.push_back(std::move(c));
    }
    rows.push_back(std::move(r));
  }

  auto& hists = doc["histograms"] = nlohmann::ordered_json::array();
  for (const auto& h : report.histograms)
    hists.push_back({{"T", h.threshold},
                     {"file", histogram_file_name(h.threshold)},
                     {"original_trees", h.original.size()},
                     {"refined_trees", h.refined.size()},
                     {"original_mean_accuracy", json_number_or_null(mean_or_nan(h.original))},
                     {"refined_mean_accuracy", json_number_or_null(mean_or_nan(h.refined))},
                     {"discarded_mean_accuracy", json_number_or_null(mean_or_nan(h.discarded))}});
  doc["invariants"] = {{"soundness", report.invariants.soundness},
                       {"zero_threshold_identity", report.invariants.zero_threshold_identity},
                       {"survivor_monotonicity", report.invariants.survivor_monotonicity},
                       {"profile_consistency", report.invariants.profile_consistency}};
  return doc;
}

inline std::string render_traces_csv(const SweepReport& report) {
  std::string out = "fold,repeat,iteration,splits\n";
  for (const auto& unit : report.units)
    for (const auto& p : unit.run.diagnostics.size_trace)
      out += std::to_string(unit.fold + 1) + "," + std::to_string(unit.repeat + 1) + "," +
             std::to_string(p.iteration) + "," + std::to_string(p.splits) + "\n";
  return out;
}

inline std::string render_acceptance_csv(const SweepReport& report) {
  std::string out = "fold,repeat,move,proposed,accepted,rate\n";
  for (const auto& unit : report.units) {
    const auto& d = unit.run.diagnostics;
    const std::string prefix = std::to_string(unit.fold + 1) + "," + std::to_string(unit.repeat + 1) + ",";
    for (MoveKind m : kAllMoves) {
      const auto i = static_cast<std::size_t>(m);
      out += prefix + move_name(m) + "," + std::to_string(d.stats.proposed[i]) + "," +
             std::to_string(d.stats.accepted[i]) + "," + format_sig4(d.stats.rate(m)) + "\n";
    }
    out += prefix + "all," + std::to_string(d.stats.total_proposed()) + "," +
           std::to_string(d.stats.total_accepted()) + "," + format_sig4(d.acceptance_fraction()) + "\n";
  }
  return out;
}

// Fails with IoError before anything is written if `dir` cannot be created
// or written to.
inline void ensure_writable_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create directory '" + dir.string() + "'");
  const auto probe = dir / ".bmatree-write-probe";
  {
    std::ofstream out(probe, std::ios::binary);
    if (!out || !(out << "probe")) throw IoError("directory '" + dir.string() + "' is not writable");
  }
  std::filesystem::remove(probe, ec);
}

// Writes report.json, table1.csv, table1.txt, one histogram_T*.csv per
// threshold, traces.csv, acceptance.csv and ensembles/*.json. Returns the
// written paths in order.
inline std::vector<std::string> emit_reports(const SweepReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  ensure_writable_directory(root);
  if (report.spec.persist_ensembles) ensure_writable_directory(root / "ensembles");

  std::vector<std::string> written;
  auto write = [&](const fs::path& path, const std::string& text) {
    write_text_file(path.string(), text);
    written.push_back(path.string());
  };
  write(root / "report.json", report_to_json(report).dump(2) + "\n");
  write(root / "table1.csv", render_table_csv(report));
  write(root / "table1.txt", render_table_text(report));
  for (const auto& h : report.histograms)
    write(root / histogram_file_name(h.threshold), render_histogram_csv(h, report.spec.histogram_bins));
  write(root / "traces.csv", render_traces_csv(report));
  write(root / "acceptance.csv", render_acceptance_csv(report));
  if (report.spec.persist_ensembles)
    for (const auto& e : report.ensembles) write(root / "ensembles" / e.name, e.text);
  return written;
}

}  // namespace bmatree

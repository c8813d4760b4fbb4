// bmatree command-line front end.
//
// Every command builds an ExperimentSpec from defaults, then an optional
// --config file, then individual flags. Flags use the config key with '_'
// spelled as '-', so `burn_in = 500` in a file is `--burn-in 500` here.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <numeric>

#include "bmatree/bma.hpp"
#include "bmatree/ensemble_io.hpp"
#include "bmatree/harness.hpp"
#include "bmatree/refine.hpp"

namespace {

using namespace bmatree;

const char* const kSpecKeys[] = {
    "data",        "n",              "m",          "classes",       "informative",    "effect",
    "data_seed",   "shuffle_labels", "k_folds",    "repeats",       "workers",        "histogram_bins",
    "persist_ensembles", "techniques", "thresholds", "burn_in",     "post_burn_in",   "thinning",
    "min_node_size", "p_birth",      "p_death",    "p_change_split", "p_change_rule", "proposal_variance",
    "alpha",       "trace_stride"};

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// Spec flags shared by every command. Values are applied after parsing so a
// --config file can sit underneath them.
struct SpecOptions {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;

  void attach(CLI::App* cmd, const std::string& out_help, const std::string& out_default) {
    out = out_default;
    cmd->add_option("--config", config_path, "key = value settings file");
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--out", out, out_help)->capture_default_str();
    for (const char* key : kSpecKeys) {
      const std::string k = key;
      cmd->add_option_function<std::string>(
             flag_name(k), [this, k](const std::string& v) { overrides.emplace_back(k, v); },
             "config key '" + k + "'")
          ->type_name("VALUE");
    }
  }

  ExperimentSpec build() const {
    ExperimentSpec spec;
    if (!config_path.empty()) apply_config_text(spec, read_text_file(config_path));
    for (const auto& [key, value] : overrides) apply_setting(spec, key, value);
    if (seed) spec.master_seed = *seed;
    spec.validate();
    return spec;
  }
};

void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(parent, ec);
  if (ec) throw IoError("cannot create directory '" + parent.string() + "': " + ec.message());
}

void write_output(const std::string& path, const std::string& text) {
  ensure_parent(path);
  write_text_file(path, text);
}

Dataset load_projected(const ExperimentSpec& spec, const Ensemble& ensemble) {
  Dataset data = load_experiment_data(spec);
  const auto& map = ensemble.provenance.attribute_map;
  if (!map.empty()) {
    for (std::size_t j : map)
      if (j >= data.attribute_count())
        throw EvaluationError("ensemble refers to column " + std::to_string(j) + " but the data has " +
                              std::to_string(data.attribute_count()));
    data = select_columns(data, map);
  }
  return data;
}

int run_gen_data(const SpecOptions& o) {
  const ExperimentSpec spec = o.build();
  const Dataset data = load_experiment_data(spec);
  write_output(o.out, to_csv(data));
  std::cout << "wrote " << data.size() << " x " << data.attribute_count() << " to " << o.out << '\n';
  return 0;
}

int run_sample(const SpecOptions& o) {
  const ExperimentSpec spec = o.build();
  const Dataset data = load_experiment_data(spec);
  ChainConfig config = spec.chain;
  config.seed = spec.master_seed;
  const ChainRun run = run_chain(data, build_rule_catalog(data), config);
  const std::filesystem::path dir(o.out);
  ensure_writable_directory(dir);
  write_ensemble(run.ensemble, (dir / "ensemble.json").string());
  auto diag = diagnostics_to_json(run.diagnostics);
  try {
    const auto s = stationarity_summary(run.diagnostics);
    diag["stationarity"] = {{"mean_last_burn_in_quartile", s.mean_last_burn_in_quartile},
                            {"mean_post_burn_in", s.mean_post_burn_in},
                            {"drift_ratio", s.drift_ratio}};
  } catch (const DiagnosticsError& e) {
    diag["stationarity"] = nullptr;
    std::cerr << "warning: " << e.what() << '\n';
  }
  write_text_file((dir / "diagnostics.json").string(), diag.dump(1) + "\n");
  std::cout << "trees " << run.ensemble.size() << ", acceptance "
            << format_sig4(run.diagnostics.acceptance_fraction()) << ", final splits "
            << run.diagnostics.final_splits << '\n';
  return 0;
}

int run_profile(const SpecOptions& o, const std::string& ensemble_path) {
  const Ensemble e = read_ensemble(ensemble_path);
  const auto profile = usage_profile(e);
  std::vector<std::size_t> order(profile.usage.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return profile.usage[a] > profile.usage[b]; });
  std::string table = "rank,attribute,usage,splits\n";
  for (std::size_t r = 0; r < order.size(); ++r) {
    const std::size_t j = order[r];
    const std::string name = j < e.provenance.attribute_names.size() ? e.provenance.attribute_names[j]
                                                                     : std::to_string(j);
    table += std::to_string(r + 1) + "," + name + "," + detail::format_double(profile.usage[j]) + "," +
             std::to_string(profile.split_counts[j]) + "\n";
  }
  if (o.out.empty()) std::cout << table;
  else write_output(o.out, table);
  return 0;
}

int run_refine(const SpecOptions& o, const std::string& ensemble_path, double threshold) {
  const Ensemble e = read_ensemble(ensemble_path);
  const WeakSet weak = weak_attributes(usage_profile(e), threshold);
  const Ensemble refined = refine_ensemble(e, weak);
  write_output(o.out, ensemble_to_text(refined));
  std::cout << "kept " << refined.size() << " of " << e.size() << " trees, " << weak.n_weak()
            << " weak attributes\n";
  return 0;
}

int run_sweep(const SpecOptions& o) {
  ExperimentSpec spec = o.build();
  spec.out_dir = o.out;
  ensure_writable_directory(spec.out_dir);
  const SweepReport report = threshold_sweep(spec);
  emit_reports(report, spec.out_dir);
  std::cout << render_table_text(report);
  if (!report.invariants.all()) {
    std::cerr << "refinement invariant violated; see report.json\n";
    return static_cast<int>(ErrorKind::kRuntime);
  }
  return 0;
}

int run_evaluate(const SpecOptions& o, const std::string& ensemble_path) {
  const ExperimentSpec spec = o.build();
  const Ensemble e = read_ensemble(ensemble_path);
  const Dataset data = load_projected(spec, e);
  const Evaluation ev = evaluate(e, data, e.provenance.alpha);
  nlohmann::ordered_json doc;
  doc["trees"] = e.size();
  doc["samples"] = data.size();
  doc["P"] = ev.accuracy_percent;
  doc["E"] = ev.entropy_bits;
  std::cout << "P = " << format_sig4(ev.accuracy_percent) << " %, E = " << format_sig4(ev.entropy_bits)
            << " bits\n";
  if (!o.out.empty()) write_output(o.out, doc.dump(1) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian decision-tree ensembles with usage-based refinement"};
  app.require_subcommand(1);

  SpecOptions gen, sample, profile, refine, sweep, eval;
  std::string profile_in, refine_in, eval_in;
  double threshold = 0.0;

  auto* c_gen = app.add_subcommand("gen-data", "write a synthetic dataset as CSV");
  gen.attach(c_gen, "output CSV", "synthetic.csv");

  auto* c_sample = app.add_subcommand("sample", "run one chain on a dataset");
  sample.attach(c_sample, "output directory", "sample");

  auto* c_profile = app.add_subcommand("profile", "attribute usage table of an ensemble");
  profile.attach(c_profile, "output CSV (stdout when empty)", "");
  c_profile->add_option("--ensemble", profile_in, "ensemble file")->required();

  auto* c_refine = app.add_subcommand("refine", "drop trees that use weak attributes");
  refine.attach(c_refine, "output ensemble file", "refined.json");
  c_refine->add_option("--ensemble", refine_in, "ensemble file")->required();
  c_refine->add_option("-T,--threshold", threshold, "usage threshold")->required();

  auto* c_sweep = app.add_subcommand("sweep", "cross-validated threshold sweep with reports");
  sweep.attach(c_sweep, "report directory", "out");

  auto* c_eval = app.add_subcommand("evaluate", "accuracy and entropy of an ensemble on data");
  eval.attach(c_eval, "output JSON (none when empty)", "");
  c_eval->add_option("--ensemble", eval_in, "ensemble file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::kUsage);
  }

  try {
    if (c_gen->parsed()) return run_gen_data(gen);
    if (c_sample->parsed()) return run_sample(sample);
    if (c_profile->parsed()) return run_profile(profile, profile_in);
    if (c_refine->parsed()) return run_refine(refine, refine_in, threshold);
    if (c_sweep->parsed()) return run_sweep(sweep);
    if (c_eval->parsed()) return run_evaluate(eval, eval_in);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kRuntime);
  }
  return static_cast<int>(ErrorKind::kUsage);
}

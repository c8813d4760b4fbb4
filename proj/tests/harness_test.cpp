#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "bmatree/ensemble_io.hpp"
#include "bmatree/harness.hpp"

namespace bmatree {
namespace {

namespace fs = std::filesystem;

ExperimentSpec small_spec() {
  ExperimentSpec spec;
  spec.synthetic = {150, 8, 3, 2, 1.2, 0};
  spec.chain.burn_in = 1500;
  spec.chain.post_burn_in = 60;
  spec.chain.trace_stride = 50;
  spec.thresholds = {0.0, 0.05, 0.1};
  spec.master_seed = 11;
  return spec;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("bmatree_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Config, ParsesCommentsAndRejectsUnknownKeys) {
  ExperimentSpec spec;
  apply_config_text(spec, "# comment\n\nburn_in = 500\nthresholds = 0, 0.01,0.02  # trailing\nseed=9\n"
                          "techniques = rerun\nshuffle_labels = true\n");
  EXPECT_EQ(spec.chain.burn_in, 500u);
  EXPECT_EQ(spec.thresholds, (std::vector<double>{0.0, 0.01, 0.02}));
  EXPECT_EQ(spec.master_seed, 9u);
  EXPECT_EQ(spec.techniques, Techniques::kRerun);
  EXPECT_TRUE(spec.shuffle_labels);
  EXPECT_THROW(apply_config_text(spec, "burn_inn = 5\n"), ParameterError);
  EXPECT_THROW(apply_config_text(spec, "burn_in 5\n"), ParameterError);
  EXPECT_THROW(apply_config_text(spec, "burn_in = -5\n"), ParameterError);
  EXPECT_THROW(apply_config_text(spec, "techniques = all\n"), ParameterError);
}

TEST(Config, EchoRoundTrips) {
  ExperimentSpec spec = small_spec();
  spec.chain.move_probs = {0.2, 0.2, 0.1, 0.5};
  ExperimentSpec copy;
  apply_config_text(copy, spec.echo());
  EXPECT_EQ(copy.echo(), spec.echo());
}

TEST(Config, Validation) {
  ExperimentSpec spec;
  spec.thresholds = {0.002, 0.001};
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.thresholds = {0.001, 0.001};
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.thresholds = {-0.001};
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.thresholds = {};
  EXPECT_NO_THROW(spec.validate());
  spec.k_folds = 1;
  EXPECT_THROW(spec.validate(), ParameterError);
}

TEST(Spread, SampleStandardDeviation) {
  const Spread s = spread_of({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.two_sigma, 2.0);
  EXPECT_EQ(spread_of({4.0}).two_sigma, 0.0);
}

TEST(Seeds, AddingFoldsKeepsEarlierSeeds) {
  EXPECT_EQ(unit_seed(7, 0, 0), derive_seed(7, 0));
  EXPECT_EQ(unit_seed(7, 2, 0), derive_seed(7, 2));
  EXPECT_NE(unit_seed(7, 0, 1), unit_seed(7, 0, 0));
  EXPECT_NE(unit_seed(7, 0, 1), unit_seed(7, 1, 0));
}

TEST(Format, FourSignificantDigits) {
  EXPECT_EQ(format_sig4(27.4), "27.40");
  EXPECT_EQ(format_sig4(478.3), "478.3");
  EXPECT_EQ(format_sig4(0.13), "0.1300");
  EXPECT_EQ(format_sig4(9.99996), "10.00");
  EXPECT_EQ(format_sig4(0.0), "0.000");
  EXPECT_EQ(format_sig4(1234.6), "1235");
  EXPECT_EQ(format_sig4(-2.5), "-2.500");
}

TEST(CrossValidate, CountingContract) {
  ExperimentSpec spec = small_spec();
  spec.repeats = 2;
  const CrossValidation cv = cross_validate(spec);
  EXPECT_EQ(cv.folds.size(), 3u);
  ASSERT_EQ(cv.units.size(), 6u);
  std::size_t test_total = 0;
  for (const auto& fd : cv.folds) test_total += fd.test.size();
  EXPECT_EQ(test_total, 150u);
  for (const auto& unit : cv.units) {
    EXPECT_EQ(unit.run.ensemble.size(), 60u);
    EXPECT_EQ(unit.seed, unit_seed(spec.master_seed, unit.fold, unit.repeat));
    EXPECT_EQ(unit.per_tree_accuracy.size(), 60u);
    EXPECT_EQ(unit.run.ensemble.provenance.fold, static_cast<int>(unit.fold));
  }
}

TEST(Sweep, ZeroThresholdRowsEqualBaseline) {
  ExperimentSpec spec = small_spec();
  spec.thresholds = {0.0};
  const SweepReport report = threshold_sweep(spec);
  ASSERT_EQ(report.rows.size(), 2u);
  for (const auto& row : report.rows) {
    EXPECT_EQ(row.n_weak_mean, 0.0);
    EXPECT_EQ(row.aggregate.accuracy.mean, report.baseline.accuracy.mean);
    EXPECT_EQ(row.aggregate.accuracy.two_sigma, report.baseline.accuracy.two_sigma);
    EXPECT_EQ(row.aggregate.entropy.mean, report.baseline.entropy.mean);
    EXPECT_EQ(row.aggregate.entropy.two_sigma, report.baseline.entropy.two_sigma);
  }
  EXPECT_TRUE(report.invariants.all());
}

TEST(Sweep, RowLayoutAndInvariants) {
  const SweepReport report = threshold_sweep(small_spec());
  ASSERT_EQ(report.rows.size(), 6u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(report.rows[2 * t].technique, Technique::kRefine);
    EXPECT_EQ(report.rows[2 * t + 1].technique, Technique::kRerun);
    EXPECT_EQ(report.rows[2 * t].threshold, report.rows[2 * t + 1].threshold);
    EXPECT_EQ(report.rows[2 * t].n_weak_mean, report.rows[2 * t + 1].n_weak_mean);
  }
  EXPECT_GT(report.rows[4].n_weak_mean, 0.0);
  EXPECT_TRUE(report.invariants.all());
  EXPECT_EQ(report.histograms.size(), 3u);
}

TEST(Sweep, DeterministicAndIndependentOfWorkers) {
  const ExperimentSpec spec = small_spec();
  ExperimentSpec parallel = spec;
  parallel.workers = 3;
  const auto a = threshold_sweep(spec);
  const auto b = threshold_sweep(spec);
  const auto c = threshold_sweep(parallel);
  EXPECT_EQ(render_table_csv(a), render_table_csv(b));
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
  EXPECT_EQ(render_table_csv(a), render_table_csv(c));
  EXPECT_EQ(render_traces_csv(a), render_traces_csv(c));
}

TEST(Sweep, ExhaustedRowsRenderAsNA) {
  ExperimentSpec spec = small_spec();
  spec.thresholds = {0.0, 0.99};
  spec.techniques = Techniques::kRefine;
  const SweepReport report = threshold_sweep(spec);
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_TRUE(report.rows[1].exhausted);
  const std::string csv = render_table_csv(report);
  EXPECT_NE(csv.find("0.99,"), std::string::npos);
  EXPECT_NE(csv.find(",refine,NA,NA,NA,NA"), std::string::npos);
}

TEST(Reports, FilesHeaderAndReEvaluation) {
  const fs::path dir = scratch("emit");
  const SweepReport report = threshold_sweep(small_spec());
  emit_reports(report, dir.string());
  for (const char* f : {"report.json", "table1.csv", "table1.txt", "traces.csv", "acceptance.csv",
                        "histogram_T0.csv", "histogram_T0.05.csv", "histogram_T0.1.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const std::string table = slurp(dir / "table1.csv");
  EXPECT_EQ(table.substr(0, table.find('\n')), kTableHeader);
  EXPECT_EQ(slurp(dir / "histogram_T0.05.csv").substr(0, 30).find("bin_lo,bin_hi,original,refined"), 0u);
  const auto doc = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_TRUE(doc.contains("rows"));

  // Every cited ensemble is on disk with the cited digest and reproduces the
  // cell's P and E exactly.
  const Dataset data = load_experiment_data(report.spec);
  for (const auto& row : report.rows) {
    for (std::size_t u = 0; u < row.cells.size(); ++u) {
      const SweepCell& cell = row.cells[u];
      if (cell.exhausted) continue;
      const std::string text = slurp(dir / "ensembles" / cell.ensemble_name);
      EXPECT_EQ(hex_digest(text), cell.ensemble_digest);
      const Ensemble e = ensemble_from_text(text);
      const auto rows = report.plan.test_rows(report.units[u].fold);
      Dataset test = select_rows(data, rows);
      if (!e.provenance.attribute_map.empty()) test = select_columns(test, e.provenance.attribute_map);
      const Evaluation ev = evaluate(e, test, e.provenance.alpha);
      EXPECT_EQ(ev.accuracy_percent, cell.evaluation.accuracy_percent) << cell.ensemble_name;
      EXPECT_EQ(ev.entropy_bits, cell.evaluation.entropy_bits) << cell.ensemble_name;
    }
  }
  fs::remove_all(dir);
}

TEST(Reports, EmptyGridStillValid) {
  const fs::path dir = scratch("empty");
  ExperimentSpec spec = small_spec();
  spec.thresholds.clear();
  const SweepReport report = threshold_sweep(spec);
  EXPECT_TRUE(report.rows.empty());
  emit_reports(report, dir.string());
  const std::string table = slurp(dir / "table1.csv");
  EXPECT_NE(table.find("baseline"), std::string::npos);
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir / "report.json")).contains("baseline"));
  fs::remove_all(dir);
}

TEST(Reports, UnwritableDirectoryFailsBeforeWriting) {
  const fs::path dir = scratch("blocked");
  fs::create_directories(dir);
  const fs::path file = dir / "plain_file";
  std::ofstream(file) << "x";
  ExperimentSpec spec = small_spec();
  spec.thresholds = {0.0};
  const SweepReport report = threshold_sweep(spec);
  EXPECT_THROW(emit_reports(report, (file / "out").string()), IoError);
  EXPECT_EQ(slurp(file), "x");
  fs::remove_all(dir);
}

#ifdef BMATREE_CLI_PATH
int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + BMATREE_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  const std::string d = dir.string();
  EXPECT_EQ(run_cli("gen-data --n 60 --m 3 --classes 2 --informative 1 --seed 2 --out " + d + "/d.csv"), 0);
  EXPECT_EQ(run_cli("sample --data " + d + "/d.csv --burn-in 300 --post-burn-in 20 --out " + d + "/s"), 0);
  EXPECT_EQ(run_cli("profile --ensemble " + d + "/s/ensemble.json --out " + d + "/p.csv"), 0);
  EXPECT_EQ(run_cli("refine --ensemble " + d + "/s/ensemble.json -T 0 --out " + d + "/r.json"), 0);
  EXPECT_EQ(run_cli("evaluate --ensemble " + d + "/r.json --data " + d + "/d.csv"), 0);
  EXPECT_EQ(run_cli("refine --ensemble " + d + "/s/ensemble.json -T 1.5 --out " + d + "/r2.json"), 3);

  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("sample --no-such-flag 1"), 1);
  EXPECT_EQ(run_cli("sample --burn-in x"), 1);
  std::ofstream(dir / "bad.cfg") << "burn_inn = 3\n";
  EXPECT_EQ(run_cli("sample --config " + d + "/bad.cfg"), 1);

  std::ofstream(dir / "bad.csv") << "a,class\n1,x\nnan,y\n";
  EXPECT_EQ(run_cli("sample --data " + d + "/bad.csv"), 2);
  EXPECT_EQ(run_cli("evaluate --ensemble " + d + "/missing.json --data " + d + "/d.csv"), 3);
  fs::remove_all(dir);
}
#endif

}  // namespace
}  // namespace bmatree

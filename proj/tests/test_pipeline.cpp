#include <gtest/gtest.h>

#include "dlambda/pipeline.hpp"

using namespace dlambda;
using namespace dlambda::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto p = fs::temp_directory_path() / (std::string("dlambda_pl_") + info->test_suite_name() + "_" + info->name());
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// small but complete run: 20 scans per burst, two bursts
RunConfig small_config() {
  auto c = config_from_json(json::parse(R"({
    "preset": "paper-default",
    "fields": {"Ep": 0.71, "Es": 1.31016},
    "scan": {"burst_len": 0.1},
    "noise": {"drift_model": "uniform-resample"},
    "analysis": {"n_bins": 4, "cutoff": 8, "bootstrap_resamples": 3},
    "bursts": 2,
    "seed": 99
  })"));
  return c;
}

std::string slurp(const fs::path& p) { return io::read_file(p); }

}  // namespace

TEST(Config, ShippedConfigParses) {
  const auto c = load_config(fs::path(DLAMBDA_SOURCE_DIR) / "configs/paper-default.json");
  EXPECT_EQ(c.preset, "paper-default");
  EXPECT_EQ(c.analysis.n_bins, 10);
  EXPECT_EQ(c.noise.drift_model, synth::DriftModel::uniform_resample);
  ASSERT_TRUE(c.seed.has_value());
  EXPECT_NO_THROW(validate(c));
  const auto r = resolve(c);
  EXPECT_NEAR(r.fields.Ec1, 0.0711684, 1e-6);  // controls from the preset
  EXPECT_EQ(r.fields.Ep, 0.71);
}

TEST(Config, UnknownKeysRejected) {
  for (const char* text : {R"({"bogus": 1})", R"({"noise": {"vacum_std": 1}})", R"({"analysis": {"bins": 3}})",
                           R"({"fields": {"Ep2": 1}})", R"({"noise": {"drift_model": "brownian"}})",
                           R"({"seed": -4})", R"({"bursts": "two"})"}) {
    try {
      config_from_json(json::parse(text));
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::config) << text;
    }
  }
}

TEST(Config, ValidationErrors) {
  auto c = small_config();
  c.bursts = 0;
  EXPECT_THROW(validate(c), Error);
  c = small_config();
  c.trace_format = "hdf5";
  EXPECT_THROW(validate(c), Error);
  c = small_config();
  c.preset = "no-such-preset";
  EXPECT_THROW(validate(c), Error);
  c = small_config();
  c.scan.sample_rate = 1e6;
  EXPECT_THROW(validate(c), Error);
}

TEST(Config, PaperScaleSetsSampleRate) {
  auto c = small_config();
  c.paper_scale = true;
  EXPECT_EQ(resolve(c).scan.sample_rate, 1e8);
  EXPECT_EQ(config_to_json(c).at("scan").at("sample_rate").get<double>(), 1e8);
}

TEST(Config, JsonRoundTrip) {
  const auto c = small_config();
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Simulate, RequiresSeed) {
  auto c = small_config();
  c.seed.reset();
  try {
    simulate(c, scratch());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
  }
}

TEST(Simulate, DeterministicForSeed) {
  const auto root = scratch();
  const auto a = root / "a", b = root / "b";
  auto c = small_config();
  c.bursts = 1;
  simulate(c, a);
  simulate(c, b);
  for (const char* f : {"trace_000.bin", "vacuum.bin", "reference.bin", "truth.csv", "config.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  c.seed = 100;
  const auto d = root / "d";
  simulate(c, d);
  EXPECT_NE(slurp(a / "trace_000.bin"), slurp(d / "trace_000.bin"));
}

TEST(Simulate, BurstsGetDistinctSeedsAndScanIds) {
  const auto dir = scratch();
  auto c = small_config();
  c.trace_format = "csv";
  const auto s = simulate(c, dir);
  EXPECT_EQ(s.scans, 40u);
  const auto t0 = io::read_trace(dir / "trace_000.csv"), t1 = io::read_trace(dir / "trace_001.csv");
  EXPECT_NE(t0.seed, t1.seed);
  const auto truth = io::read_truth(dir / "truth.csv");
  ASSERT_EQ(truth.size(), 40u);
  for (std::size_t i = 0; i < truth.size(); ++i) EXPECT_EQ(truth[i].scan_id, static_cast<std::int64_t>(i));
}

TEST(Pipeline, SmallRunProducesAllArtifacts) {
  const auto dir = scratch();
  const auto c = small_config();
  const auto reports = run_pipeline(c, dir);
  // every bin with records gets one report per case
  const auto manifest = io::read_bin_manifest(dir / "bins.csv");
  std::size_t expected = 0;
  for (const auto& m : manifest)
    for (auto n : m.counts) expected += n > 0;
  EXPECT_EQ(reports.size(), expected);
  EXPECT_GE(reports.size(), 9u);
  for (const auto& r : reports) {
    EXPECT_NO_THROW(r.report.rho.validate(1e-10, 1e-10, 1e-10));
    EXPECT_GE(r.report.min_accepted_step, 0.0);
    EXPECT_TRUE(fs::exists(dir / "wigner" / (report_stem(r.bin_index, r.pulse_case) + ".csv")));
    EXPECT_GE(r.report.fidelity_vs_input.value, 0.0);
    EXPECT_LE(r.report.fidelity_vs_input.value, 1.0);
  }
  EXPECT_TRUE(fs::exists(dir / "reports/reference_probe.json"));
  for (const char* f : {"phase_scatter.csv", "quadrature_scatter.csv", "wigner_index.csv", "wigner_locus.csv",
                        "mean_photon.csv", "fidelity.csv"}) {
    const auto text = slurp(dir / "figures" / f);
    EXPECT_EQ(text.rfind("bin_index,lo,hi,count,", 0), 0u) << f;
  }
  // reports on disk match the returned ones
  const auto loaded = load_reports(dir);
  ASSERT_EQ(loaded.size(), reports.size());
  EXPECT_EQ(loaded[0].report.log_likelihood, [&] {
    for (const auto& r : reports)
      if (r.bin_index == loaded[0].bin_index && r.pulse_case == loaded[0].pulse_case) return r.report.log_likelihood;
    return 0.0;
  }());
}

TEST(Pipeline, StagesRerunFromFiles) {
  const auto dir = scratch();
  auto c = small_config();
  c.analysis.bootstrap_resamples = 0;
  simulate(c, dir);
  const auto ex = extract_stage(c, dir);
  EXPECT_EQ(ex.shots, 40u);
  EXPECT_EQ(ex.records, 120u);
  EXPECT_NEAR(ex.scale, 20.0, 0.5);  // 1 / lo_gain
  c.analysis.n_bins = 3;
  const auto bins = bin_stage(c, dir);
  EXPECT_EQ(bins.size(), 3u);
  EXPECT_EQ(io::read_bin_manifest(dir / "bins.csv").size(), 3u);
  const auto reps = reconstruct_stage(c, dir);
  for (const auto& r : reps) EXPECT_TRUE(r.bootstrap_insufficient);
  report_stage(dir, load_reports(dir));
  EXPECT_TRUE(fs::exists(dir / "figures/fidelity.csv"));
}

TEST(Pipeline, ReconstructIsIndependentOfJobCount) {
  const auto root = scratch();
  const auto dir1 = root / "one", dir2 = root / "two";
  auto c = small_config();
  c.bursts = 1;
  c.analysis.n_bins = 2;
  run_pipeline(c, dir1);
  c.jobs = 3;
  run_pipeline(c, dir2);
  for (const auto& e : fs::directory_iterator(dir1 / "reports"))
    EXPECT_EQ(slurp(e.path()), slurp(dir2 / "reports" / e.path().filename())) << e.path();
}

TEST(Pipeline, MissingInputsAreIoErrors) {
  const auto dir = scratch();
  try {
    extract_stage(small_config(), dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io);
  }
  EXPECT_THROW(load_reports(dir), Error);
}

TEST(Fidelity, InputAlignmentUsesMeanAmplitudePhase) {
  const auto in = tomo::coherent_dm(0.5, 10);
  const auto out = tomo::coherent_dm(std::polar(0.5, 2.0), 10);
  EXPECT_NEAR(input_output_fidelity(in, out), 1.0, 1e-9);
  EXPECT_NEAR(input_output_fidelity(in, tomo::coherent_dm(std::polar(0.3, -1.0), 10)), std::exp(-0.04), 1e-7);
}

TEST(ParallelFor, PropagatesExceptions) {
  std::vector<int> hit(50, 0);
  parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] = 1; });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 50);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 7) throw Error(Errc::io, "x");
               }),
               Error);
}

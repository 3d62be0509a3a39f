#include <gtest/gtest.h>

#include "dlambda/phase_extract.hpp"
#include "dlambda/trace_synth.hpp"
#include "oracles.hpp"

using namespace dlambda;
using namespace dlambda::synth;

namespace {

atomic::TransferMatrix test_transfer() {
  return {std::polar(0.7, 0.4), std::polar(0.55, -1.0), std::polar(0.5, 2.0), std::polar(0.6, 0.1)};
}

atomic::FieldSet test_fields() {
  atomic::FieldSet f;
  f.Ep = 0.71;
  f.Es = 1.3;
  return f;
}

ScanConfig short_scan(double len = 0.05) {
  ScanConfig s;
  s.burst_len = len;
  return s;
}

}  // namespace

TEST(MeanPeakVoltage, Examples) {
  EXPECT_DOUBLE_EQ(mean_peak_voltage(0.7, 0.1, 0.3, 0.3), 0.07);
  EXPECT_NEAR(mean_peak_voltage(0.7, 0.1, 0.3 + kPi / 2, 0.3), 0.0, 1e-16);
  for (double th : {0.0, 1.0, 2.5}) EXPECT_EQ(mean_peak_voltage(0.0, 0.1, th, 0.2), 0.0);
}

TEST(Schedule, TripletsPerScan) {
  EXPECT_EQ(triplets_per_scan(PulseSchedule{}, ScanConfig{}), 83);
  EXPECT_EQ(ScanConfig{}.shots_per_burst(), 260u);
  EXPECT_EQ(ScanConfig{}.burst_samples(), 13'000'000u);
}

TEST(Schedule, Validation) {
  PulseSchedule s;
  EXPECT_NO_THROW(s.validate());
  s.pulse_len = 25e-6;
  EXPECT_THROW(s.validate(), Error);
  ScanConfig sc;
  sc.sample_rate = 5e6;  // 7.5 samples per pulse
  try {
    sc.validate(PulseSchedule{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
  }
}

TEST(Schedule, LoPhaseCoversOneTurnPerScan) {
  const ScanConfig s;
  EXPECT_EQ(s.lo_phase(0.0), 0.0);
  EXPECT_NEAR(s.lo_phase(0.25 * s.scan_period()), kPi / 2, 1e-12);
  EXPECT_LT(s.lo_phase(s.scan_period() * (1 - 1e-9)), kTwoPi);
  EXPECT_GT(s.lo_phase(s.scan_period() * (1 - 1e-9)), kTwoPi - 1e-6);
  EXPECT_NEAR(s.lo_phase(s.scan_period()), 0.0, 1e-9);
}

TEST(SynthBurst, SampleCountAndDeterminism) {
  const auto scan = short_scan();
  const auto a = synth_burst_with_transfer(test_transfer(), test_fields(), {}, scan, {}, 42);
  const auto b = synth_burst_with_transfer(test_transfer(), test_fields(), {}, scan, {}, 42);
  const auto c = synth_burst_with_transfer(test_transfer(), test_fields(), {}, scan, {}, 43);
  EXPECT_EQ(a.samples.size(), static_cast<std::size_t>(std::llround(scan.burst_len * scan.sample_rate)));
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
  EXPECT_EQ(a.seed, 42u);
  ASSERT_TRUE(a.truth.has_value());
}

TEST(SynthBurst, TruthIsComplete) {
  const auto t = synth_burst_with_transfer(test_transfer(), test_fields(), {}, short_scan(), {}, 1);
  ASSERT_EQ(t.truth->size(), 10u);
  for (std::size_t k = 0; k < t.truth->size(); ++k) {
    const auto& r = (*t.truth)[k];
    EXPECT_EQ(r.scan_id, static_cast<std::int64_t>(k));
    EXPECT_NEAR(r.E_E, 0.7 * 0.71, 1e-12);
    EXPECT_NEAR(r.E_F, 0.55 * 1.3, 1e-12);
    for (double ph : {r.phi_p, r.dphi_fwm, r.dphi_dl}) {
      EXPECT_GT(ph, -kPi);
      EXPECT_LE(ph, kPi);
    }
  }
}

TEST(SynthBurst, ZerosOutsidePulses) {
  NoiseConfig n;
  n.vacuum_std = 0.0;
  const auto t = synth_burst_with_transfer(test_transfer(), test_fields(), {}, short_scan(0.005), n, 3);
  const auto w = pulse_window(t.schedule, t.sample_rate, 0, 0);
  EXPECT_NE(t.samples[w.begin], 0.0);
  EXPECT_EQ(t.samples[w.end], 0.0);
  EXPECT_EQ(t.samples[w.begin], t.samples[w.end - 1]);  // constant over the window
}

TEST(SynthBurst, NoiselessPeaksAreCosineOfOutputs) {
  NoiseConfig n;
  n.vacuum_std = 0.0;
  n.drift_std_per_scan = 0.0;
  const auto f = test_fields();
  const auto T = test_transfer();
  const auto t = synth_burst_with_transfer(T, f, {}, short_scan(0.005), n, 3);
  const auto out = case_outputs(T, f, f.phi_p, f.phi_s);
  const std::array<Complex, 3> amps{out.probe_only, out.double_lambda, out.fwm_only};
  for (int j : {0, 17, 82})
    for (int c = 0; c < 3; ++c) {
      const auto w = pulse_window(t.schedule, t.sample_rate, j, c);
      const double expect = mean_peak_voltage(std::abs(amps[c]), 2 * t.scan.lo_gain, t.scan.lo_phase(w.center),
                                              std::arg(amps[c]));
      EXPECT_NEAR(t.samples[(w.begin + w.end) / 2], expect, 1e-15);
    }
}

TEST(SynthBurst, VacuumPeakStatistics) {
  // zero input: peak values are Normal(0, (vacuum_std * lo_gain)^2)
  auto f = test_fields();
  f.Ep = f.Es = 0.0;
  const ScanConfig scan = short_scan(0.25);
  const auto t = synth_burst_with_transfer(test_transfer(), f, {}, scan, {}, 9);
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (const auto& shot : extract::split_shots(t))
    for (const auto& v : extract::extract_peaks(shot, t.schedule, t.scan))
      for (const auto& p : v) {
        s += p.volts;
        s2 += p.volts * p.volts;
        ++n;
      }
  ASSERT_GE(n, 10000u);
  const double mean = s / n, var = s2 / n - mean * mean;
  EXPECT_NEAR(var / (scan.lo_gain * scan.lo_gain), 1.0, 0.05);
}

TEST(SynthBurst, ElectronicNoiseOutsidePulses) {
  NoiseConfig n;
  n.vacuum_std = 0.0;
  n.electronic_std = 0.01;
  const auto t = synth_burst_with_transfer(test_transfer(), test_fields(), {}, short_scan(0.005), n, 3);
  // samples in the gaps between pulses of one triplet and the next
  double s2 = 0.0;
  std::size_t n_gap = 0;
  const int trips = triplets_per_scan(t.schedule, t.scan);
  for (int k = 0; k + 1 < trips; ++k) {
    const auto a = pulse_window(t.schedule, t.sample_rate, k, 2), b = pulse_window(t.schedule, t.sample_rate, k + 1, 0);
    for (std::size_t i = a.end; i < b.begin; ++i, ++n_gap) s2 += t.samples[i] * t.samples[i];
  }
  ASSERT_GT(n_gap, 10000u);
  EXPECT_NEAR(std::sqrt(s2 / n_gap), 0.01, 0.0005);
}

TEST(SynthBurst, PaperScaleSampling) {
  auto scan = paper_scale(short_scan(0.005));
  EXPECT_EQ(scan.sample_rate, 1e8);
  const auto t = synth_burst_with_transfer(test_transfer(), test_fields(), {}, scan, {}, 1);
  EXPECT_EQ(t.samples.size(), 500000u);
  EXPECT_EQ(extract::extract_peaks(extract::split_shots(t)[0], t.schedule, t.scan)[0].size(), 83u);
}

TEST(Drift, ZeroStdRandomWalkIsConstant) {
  NoiseConfig n;
  n.drift_std_per_scan = 0.0;
  std::mt19937_64 rng(1);
  EXPECT_EQ(drift_step(1.234, n, rng), 1.234);
}

TEST(Drift, UniformResamplePassesKs) {
  NoiseConfig n;
  n.drift_model = DriftModel::uniform_resample;
  std::mt19937_64 rng(2);
  std::vector<double> v;
  for (int i = 0; i < 10000; ++i) v.push_back(drift_step(0.0, n, rng));
  for (double x : v) {
    EXPECT_GT(x, -kPi);
    EXPECT_LE(x, kPi);
  }
  EXPECT_LT(oracle::ks_uniform(v, -kPi, kPi), oracle::ks_critical_01(v.size()));
}

TEST(Drift, RandomWalkVarianceGrowsLinearly) {
  NoiseConfig n;
  n.drift_std_per_scan = 0.1;
  std::mt19937_64 rng(4);
  const int steps = 25, trials = 10000;
  double s2 = 0.0;
  for (int t = 0; t < trials; ++t) {
    double x = 0.0;
    for (int k = 0; k < steps; ++k) x = drift_step(x, n, rng);
    s2 += x * x;
  }
  EXPECT_NEAR(s2 / trials, steps * 0.01, 0.1 * steps * 0.01);
}

TEST(StreamRng, IndependentOfCallOrder) {
  auto a = stream_rng(5, 1, 7);
  auto b = stream_rng(5, 1, 8);
  auto a2 = stream_rng(5, 1, 7);
  const auto x = a();
  (void)b();
  EXPECT_EQ(x, a2());
}

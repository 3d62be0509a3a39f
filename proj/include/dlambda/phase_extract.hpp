#pragma once

// Shot-by-shot analysis of homodyne bursts: split into LO scans, read pulse
// peak values, fit one sinusoid per case and scan, derive the double-lambda and
// FWM phase shifts relative to the probe-only pulse, calibrate to quadrature
// units and bin by the FWM phase.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dlambda/core.hpp"
#include "dlambda/trace_synth.hpp"

namespace dlambda::extract {

using synth::PulseCase;

struct Shot {
  std::int64_t scan_id = 0;
  std::vector<double> samples;
  double t0 = 0.0;  // burst-relative start, seconds
};

struct Peak {
  double time = 0.0;  // window center, seconds relative to the shot start
  double volts = 0.0;
};

using CasePeaks = std::array<std::vector<Peak>, 3>;

struct SinusoidFit {
  double amplitude = 0.0;
  double phase = 0.0;
  double offset = 0.0;
  double residual_rms = 0.0;
  double amplitude_stderr = 0.0;
  bool degenerate = true;
};

struct QuadraturePoint {
  double theta = 0.0;
  double x = 0.0;
};

struct QuadratureRecord {
  std::int64_t scan_id = 0;
  PulseCase pulse_case = PulseCase::probe_only;
  std::vector<QuadraturePoint> points;
  SinusoidFit fit;
  double dphi_fwm = 0.0;
  double dphi_dl = 0.0;
  bool degenerate = false;
};

struct PhaseBin {
  int index = 0;
  double lo = 0.0, hi = 0.0;  // (lo, hi]
  std::array<std::vector<QuadratureRecord>, 3> records;

  std::size_t count(PulseCase c) const { return records[static_cast<int>(c)].size(); }
};

inline constexpr double kDefaultDegenerateSigmas = 5.0;

/// Consecutive scan-period windows; the trailing partial window is dropped.
inline std::vector<Shot> split_shots(const synth::HomodyneTrace& trace, std::int64_t scan_id_offset = 0) {
  if (trace.samples.empty()) throw Error(Errc::insufficient_data, "empty trace");
  const std::size_t per = trace.scan.samples_per_scan();
  if (per == 0) throw Error(Errc::config, "scan period shorter than one sample");
  const std::size_t n = trace.samples.size() / per;
  if (n == 0) throw Error(Errc::insufficient_data, "trace shorter than one scan period");
  std::vector<Shot> shots;
  shots.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Shot s;
    s.scan_id = scan_id_offset + static_cast<std::int64_t>(k);
    s.t0 = static_cast<double>(k * per) / trace.sample_rate;
    s.samples.assign(trace.samples.begin() + static_cast<std::ptrdiff_t>(k * per),
                     trace.samples.begin() + static_cast<std::ptrdiff_t>((k + 1) * per));
    shots.push_back(std::move(s));
  }
  return shots;
}

/// Peak statistic for every pulse window: mean over the central half of the window.
inline CasePeaks extract_peaks(const Shot& shot, const synth::PulseSchedule& schedule, const synth::ScanConfig& scan) {
  const int triplets = synth::triplets_per_scan(schedule, scan);
  CasePeaks out;
  for (auto& v : out) v.reserve(static_cast<std::size_t>(triplets));
  for (int j = 0; j < triplets; ++j) {
    for (int c = 0; c < 3; ++c) {
      const auto w = synth::pulse_window(schedule, scan.sample_rate, j, c);
      if (w.end > shot.samples.size() || w.end <= w.begin)
        throw Error(Errc::schedule, "pulse window outside shot");
      const std::size_t n = w.end - w.begin;
      const std::size_t trim = n / 4;
      double sum = 0.0;
      for (std::size_t i = w.begin + trim; i < w.end - trim; ++i) sum += shot.samples[i];
      out[static_cast<std::size_t>(c)].push_back({w.center, sum / static_cast<double>(n - 2 * trim)});
    }
  }
  return out;
}

/// Linear least squares of V(t) = A cos(omega t - phase) + offset on the basis
/// {cos, sin, 1}. Flagged degenerate when A <= sigmas * stderr(A).
inline SinusoidFit fit_sinusoid(std::span<const Peak> points, double omega,
                                double degenerate_sigmas = kDefaultDegenerateSigmas) {
  if (points.size() < 4) throw Error(Errc::insufficient_data, "sinusoid fit needs >= 4 points");
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wt = omega * points[static_cast<std::size_t>(i)].time;
    X(i, 0) = std::cos(wt);
    X(i, 1) = std::sin(wt);
    X(i, 2) = 1.0;
    y(i) = points[static_cast<std::size_t>(i)].volts;
  }
  const Eigen::Matrix3d XtX = X.transpose() * X;
  const Eigen::LDLT<Eigen::Matrix3d> ldlt(XtX);
  const Eigen::Vector3d beta = ldlt.solve(X.transpose() * y);
  const Eigen::VectorXd resid = y - X * beta;
  const double rss = resid.squaredNorm();

  SinusoidFit f;
  const double a = beta(0), b = beta(1);
  f.amplitude = std::hypot(a, b);
  f.phase = wrap_phase(std::atan2(b, a));
  f.offset = beta(2);
  f.residual_rms = std::sqrt(rss / static_cast<double>(n));

  const double sigma2 = n > 3 ? rss / static_cast<double>(n - 3) : 0.0;
  const Eigen::Matrix3d cov = sigma2 * ldlt.solve(Eigen::Matrix3d::Identity());
  double var_amp;
  if (f.amplitude > 0.0)
    var_amp = (a * a * cov(0, 0) + b * b * cov(1, 1) + 2.0 * a * b * cov(0, 1)) / (f.amplitude * f.amplitude);
  else
    var_amp = 0.5 * (cov(0, 0) + cov(1, 1));
  f.amplitude_stderr = std::sqrt(std::max(var_amp, 0.0));
  f.degenerate = !(f.amplitude > degenerate_sigmas * f.amplitude_stderr);
  return f;
}

struct PhaseShifts {
  double dphi_dl = 0.0;
  double dphi_fwm = 0.0;
};

/// Phase shifts relative to the probe-only fit; the common LO phase cancels.
inline PhaseShifts phase_shifts(const SinusoidFit& probe, const SinusoidFit& dl, const SinusoidFit& fwm) {
  if (probe.degenerate) throw Error(Errc::undefined_phase, "degenerate fit for case probe");
  if (dl.degenerate) throw Error(Errc::undefined_phase, "degenerate fit for case dl");
  if (fwm.degenerate) throw Error(Errc::undefined_phase, "degenerate fit for case fwm");
  return {wrap_phase(dl.phase - probe.phase), wrap_phase(fwm.phase - probe.phase)};
}

/// Scale (quadrature units per volt) that brings the peak-value variance of a
/// vacuum trace to 1.
inline double calibrate_vacuum(const synth::HomodyneTrace& trace, const synth::PulseSchedule& schedule,
                               const synth::ScanConfig& scan) {
  const auto shots = split_shots(trace);
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (const auto& s : shots) {
    for (const auto& vec : extract_peaks(s, schedule, scan)) {
      for (const auto& p : vec) {
        ++n;
        const double d = p.volts - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (p.volts - mean);
      }
    }
  }
  if (n < 2) throw Error(Errc::calibration, "not enough peaks to calibrate");
  const double var = m2 / static_cast<double>(n - 1);
  if (!(var > 0.0)) throw Error(Errc::calibration, "vacuum trace has zero variance");
  return 1.0 / std::sqrt(var);
}

struct RecordOptions {
  double degenerate_sigmas = kDefaultDegenerateSigmas;
};

/// Quadrature records for every shot and case. Point angles are the LO phase
/// measured from that scan's probe-only fitted phase (unwrapped, increasing),
/// so records from different scans share the probe as phase reference.
/// A degenerate probe or FWM fit leaves the scan without a reference or a bin
/// and flags all three records (raw LO phases kept); a degenerate DL fit flags
/// only the DL record.
inline std::vector<QuadratureRecord> to_quadrature_records(std::span<const Shot> shots,
                                                           const synth::PulseSchedule& schedule,
                                                           const synth::ScanConfig& scan, double scale,
                                                           const RecordOptions& opt = {}) {
  std::vector<QuadratureRecord> out;
  out.reserve(shots.size() * 3);
  const double omega = scan.omega();
  for (const auto& shot : shots) {
    auto peaks = extract_peaks(shot, schedule, scan);
    std::array<SinusoidFit, 3> fits;
    for (int c = 0; c < 3; ++c) {
      for (auto& p : peaks[static_cast<std::size_t>(c)]) p.volts *= scale;
      fits[static_cast<std::size_t>(c)] = fit_sinusoid(peaks[static_cast<std::size_t>(c)], omega, opt.degenerate_sigmas);
    }
    const bool no_reference = fits[0].degenerate || fits[2].degenerate;
    std::array<bool, 3> flagged{no_reference, no_reference || fits[1].degenerate, no_reference};
    PhaseShifts ps;
    double ref = 0.0;
    if (!no_reference) {
      ref = fits[0].phase;
      ps.dphi_fwm = wrap_phase(fits[2].phase - fits[0].phase);
      if (!fits[1].degenerate) ps = phase_shifts(fits[0], fits[1], fits[2]);
    }
    for (int c = 0; c < 3; ++c) {
      QuadratureRecord r;
      r.scan_id = shot.scan_id;
      r.pulse_case = synth::kCaseOrder[static_cast<std::size_t>(c)];
      r.fit = fits[static_cast<std::size_t>(c)];
      r.degenerate = flagged[static_cast<std::size_t>(c)];
      r.dphi_dl = ps.dphi_dl;
      r.dphi_fwm = ps.dphi_fwm;
      const auto& pk = peaks[static_cast<std::size_t>(c)];
      r.points.reserve(pk.size());
      for (const auto& p : pk) r.points.push_back({scan.lo_phase(p.time) - ref, p.volts});
      out.push_back(std::move(r));
    }
  }
  return out;
}

inline std::size_t count_degenerate(std::span<const QuadratureRecord> records) {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const QuadratureRecord& r) { return r.degenerate; }));
}

/// Bin edges: lo_k = -pi + k * 2pi / n_bins.
inline double bin_edge(int k, int n_bins) {
  if (k == n_bins) return kPi;
  return -kPi + k * (kTwoPi / n_bins);
}

/// Index of the half-open bin (lo, hi] containing phase d.
inline int bin_index(double d, int n_bins) {
  d = wrap_phase(d);
  int k = static_cast<int>(std::ceil((d + kPi) / (kTwoPi / n_bins))) - 1;
  k = std::clamp(k, 0, n_bins - 1);
  while (k > 0 && d <= bin_edge(k, n_bins)) --k;
  while (k < n_bins - 1 && d > bin_edge(k + 1, n_bins)) ++k;
  return k;
}

/// Uniform partition of (-pi, pi] by dphi_fwm; degenerate records are skipped.
inline std::vector<PhaseBin> bin_records(std::span<const QuadratureRecord> records, int n_bins = 10) {
  if (n_bins < 1) throw Error(Errc::config, "n_bins must be >= 1");
  std::vector<PhaseBin> bins(static_cast<std::size_t>(n_bins));
  for (int k = 0; k < n_bins; ++k) {
    bins[static_cast<std::size_t>(k)].index = k;
    bins[static_cast<std::size_t>(k)].lo = bin_edge(k, n_bins);
    bins[static_cast<std::size_t>(k)].hi = bin_edge(k + 1, n_bins);
  }
  for (const auto& r : records) {
    if (r.degenerate) continue;
    const int k = bin_index(r.dphi_fwm, n_bins);
    bins[static_cast<std::size_t>(k)].records[static_cast<int>(r.pulse_case)].push_back(r);
  }
  return bins;
}

}  // namespace dlambda::extract

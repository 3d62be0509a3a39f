#pragma once

// Synthetic balanced-homodyne bursts for the three-pulse sequence
// (probe-only, double-lambda, FWM-only) under a sawtooth local-oscillator
// sweep, with per-scan phase drift and vacuum quadrature noise.
//
// Quadrature convention: X_theta = a e^{-i theta} + a^dag e^{i theta}, vacuum
// variance 1, <X_theta> = 2|alpha| cos(theta - phi) for a coherent state.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dlambda/atomic_model.hpp"
#include "dlambda/core.hpp"

namespace dlambda::synth {

enum class PulseCase : int { probe_only = 0, double_lambda = 1, fwm_only = 2 };

inline constexpr std::array<PulseCase, 3> kCaseOrder{PulseCase::probe_only, PulseCase::double_lambda,
                                                     PulseCase::fwm_only};

inline const char* case_name(PulseCase c) {
  switch (c) {
    case PulseCase::probe_only: return "probe";
    case PulseCase::double_lambda: return "dl";
    case PulseCase::fwm_only: return "fwm";
  }
  return "?";
}

inline PulseCase parse_case(const std::string& s) {
  if (s == "probe") return PulseCase::probe_only;
  if (s == "dl") return PulseCase::double_lambda;
  if (s == "fwm") return PulseCase::fwm_only;
  throw Error(Errc::parse, "unknown case label '" + s + "'");
}

/// Pulse onsets at 0, cycle/3 and 2 cycle/3 of every cycle; the train restarts
/// at the beginning of every LO scan.
struct PulseSchedule {
  double pulse_len = 1.5e-6;
  double gap = 20e-6;
  double cycle = 60e-6;

  double onset(int case_index) const { return case_index * cycle / 3.0; }

  void validate() const {
    if (!(pulse_len > 0.0) || !(gap > 0.0) || !(cycle > 0.0))
      throw Error(Errc::config, "PulseSchedule: durations must be > 0");
    if (!(pulse_len < gap)) throw Error(Errc::config, "PulseSchedule: pulse_len must be < gap");
    if (onset(2) + pulse_len > cycle) throw Error(Errc::config, "PulseSchedule: pulses do not fit in the cycle");
  }
};

struct ScanConfig {
  double scan_freq = 200.0;
  double burst_len = 1.3;
  double sample_rate = 1e7;
  double lo_gain = 0.05;  // volts per quadrature unit

  double scan_period() const { return 1.0 / scan_freq; }
  double omega() const { return kTwoPi * scan_freq; }
  std::size_t samples_per_scan() const { return static_cast<std::size_t>(std::llround(scan_period() * sample_rate)); }
  std::size_t burst_samples() const { return static_cast<std::size_t>(std::llround(burst_len * sample_rate)); }
  std::size_t shots_per_burst() const { return burst_samples() / samples_per_scan(); }

  /// Local-oscillator phase, sawtooth in [0, 2pi) over each scan.
  double lo_phase(double t) const { return wrap_positive(omega() * t); }

  void validate(const PulseSchedule& s) const {
    if (!(scan_freq > 0.0) || !(burst_len > 0.0) || !(sample_rate > 0.0))
      throw Error(Errc::config, "ScanConfig: frequencies and durations must be > 0");
    if (sample_rate * s.pulse_len < 10.0 - 1e-9)
      throw Error(Errc::config, "ScanConfig: sample_rate * pulse_len must be >= 10");
    if (s.cycle > scan_period()) throw Error(Errc::config, "ScanConfig: pulse cycle longer than one scan");
    if (!(lo_gain > 0.0)) throw Error(Errc::config, "ScanConfig: lo_gain must be > 0");
  }
};

inline ScanConfig paper_scale(ScanConfig s) {
  s.sample_rate = 1e8;
  return s;
}

enum class DriftModel { random_walk, uniform_resample };

struct NoiseConfig {
  double vacuum_std = 1.0;
  double electronic_std = 0.0;
  double drift_std_per_scan = 0.1;
  DriftModel drift_model = DriftModel::random_walk;

  void validate() const {
    if (!(vacuum_std >= 0.0) || !(electronic_std >= 0.0) || !(drift_std_per_scan >= 0.0))
      throw Error(Errc::config, "NoiseConfig: standard deviations must be >= 0");
  }
};

struct TruthRecord {
  std::int64_t scan_id = 0;
  double phi_p = 0.0;     // probe-only output phase relative to the LO
  double dphi_fwm = 0.0;  // FWM-only output phase relative to probe-only
  double dphi_dl = 0.0;   // double-lambda output phase relative to probe-only
  double E_E = 0.0;       // coherent amplitudes |alpha| of the outputs
  double E_F = 0.0;
};

struct HomodyneTrace {
  std::vector<double> samples;
  double sample_rate = 0.0;
  PulseSchedule schedule;
  ScanConfig scan;
  std::optional<std::vector<TruthRecord>> truth;
  std::uint64_t seed = 0;
};

/// Sample-index window [begin, end) of one pulse, relative to the scan start.
struct PulseWindow {
  std::size_t begin = 0;
  std::size_t end = 0;
  double center = 0.0;  // seconds, relative to the scan start
};

inline PulseWindow pulse_window(const PulseSchedule& s, double sample_rate, int triplet, int case_index) {
  const double start = triplet * s.cycle + s.onset(case_index);
  PulseWindow w;
  w.begin = static_cast<std::size_t>(std::llround(start * sample_rate));
  w.end = static_cast<std::size_t>(std::llround((start + s.pulse_len) * sample_rate));
  w.center = start + 0.5 * s.pulse_len;
  return w;
}

inline int triplets_per_scan(const PulseSchedule& s, const ScanConfig& scan) {
  // small slack so that an exact fit is not lost to rounding
  return static_cast<int>(std::floor(scan.scan_period() / s.cycle * (1.0 + 1e-12)));
}

/// Mean homodyne voltage for a field of amplitude E_field and phase phi at LO phase theta.
inline double mean_peak_voltage(double E_field, double E_lo, double theta, double phi) {
  return E_field * E_lo * std::cos(theta - phi);
}

/// Advances one drift phase by a scan.
template <class Rng>
double drift_step(double state, const NoiseConfig& noise, Rng& rng) {
  if (noise.drift_model == DriftModel::uniform_resample) {
    std::uniform_real_distribution<double> u(-kPi, kPi);
    return wrap_phase(u(rng));
  }
  if (noise.drift_std_per_scan == 0.0) return state;
  std::normal_distribution<double> n(0.0, noise.drift_std_per_scan);
  return state + n(rng);
}

/// Independent RNG stream for (seed, stream tag, index).
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

/// Output amplitudes of the three cases for given input phases; the cell acts
/// linearly on (probe, signal), so the double-lambda output is the sum of the
/// probe-only and FWM-only outputs.
struct CaseOutputs {
  Complex probe_only;
  Complex double_lambda;
  Complex fwm_only;
};

inline CaseOutputs case_outputs(const atomic::TransferMatrix& T, const atomic::FieldSet& fields, double phi_p,
                                double phi_s) {
  CaseOutputs o;
  o.probe_only = T.pp * std::polar(fields.Ep, phi_p);
  o.fwm_only = T.ps * std::polar(fields.Es, phi_s);
  o.double_lambda = o.probe_only + o.fwm_only;
  return o;
}

struct SynthOptions {
  int propagation_steps = atomic::kDefaultPropagationSteps;
  std::int64_t scan_id_offset = 0;
};

namespace detail {
inline constexpr std::uint64_t kDriftStream = 0x6472696674ULL;
inline constexpr std::uint64_t kScanStream = 0x7363616eULL;
}  // namespace detail

/// Synthesizes one burst given the cell transfer matrix.
inline HomodyneTrace synth_burst_with_transfer(const atomic::TransferMatrix& T, const atomic::FieldSet& fields,
                                               const PulseSchedule& schedule, const ScanConfig& scan,
                                               const NoiseConfig& noise, std::uint64_t seed,
                                               const SynthOptions& opt = {}) {
  schedule.validate();
  scan.validate(schedule);
  noise.validate();
  fields.validate();

  HomodyneTrace tr;
  tr.sample_rate = scan.sample_rate;
  tr.schedule = schedule;
  tr.scan = scan;
  tr.seed = seed;
  tr.samples.assign(scan.burst_samples(), 0.0);

  const std::size_t per_scan = scan.samples_per_scan();
  const std::size_t n_scans = (tr.samples.size() + per_scan - 1) / per_scan;
  const int triplets = triplets_per_scan(schedule, scan);
  const double E_lo = 2.0 * scan.lo_gain;
  const double v_noise = noise.vacuum_std * scan.lo_gain;

  // Drift is a sequential chain; everything else is independent per scan.
  std::vector<std::array<double, 2>> phases(n_scans);
  {
    auto rng = stream_rng(seed, detail::kDriftStream, 0);
    double phi_p = fields.phi_p, phi_s = fields.phi_s;
    for (std::size_t k = 0; k < n_scans; ++k) {
      phi_p = drift_step(phi_p, noise, rng);
      phi_s = drift_step(phi_s, noise, rng);
      phases[k] = {phi_p, phi_s};
    }
  }

  std::vector<TruthRecord> truth;
  truth.reserve(n_scans);
  for (std::size_t k = 0; k < n_scans; ++k) {
    const auto out = case_outputs(T, fields, phases[k][0], phases[k][1]);
    TruthRecord rec;
    rec.scan_id = opt.scan_id_offset + static_cast<std::int64_t>(k);
    rec.E_E = std::abs(out.probe_only);
    rec.E_F = std::abs(out.fwm_only);
    rec.phi_p = rec.E_E > 0.0 ? wrap_phase(std::arg(out.probe_only)) : 0.0;
    rec.dphi_fwm = rec.E_F > 0.0 && rec.E_E > 0.0 ? wrap_phase(std::arg(out.fwm_only) - rec.phi_p) : 0.0;
    rec.dphi_dl = std::abs(out.double_lambda) > 0.0 && rec.E_E > 0.0
                      ? wrap_phase(std::arg(out.double_lambda) - rec.phi_p)
                      : 0.0;
    truth.push_back(rec);

    const std::array<Complex, 3> amps{out.probe_only, out.double_lambda, out.fwm_only};
    auto rng = stream_rng(seed, detail::kScanStream, k);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t base = k * per_scan;
    for (int j = 0; j < triplets; ++j) {
      for (int c = 0; c < 3; ++c) {
        const auto w = pulse_window(schedule, scan.sample_rate, j, c);
        const double theta = scan.lo_phase(w.center);
        const double v = mean_peak_voltage(std::abs(amps[c]), E_lo, theta, std::arg(amps[c])) +
                         (v_noise > 0.0 ? v_noise * gauss(rng) : 0.0);
        if (base + w.end > tr.samples.size()) continue;  // partial trailing scan
        for (std::size_t i = base + w.begin; i < base + w.end; ++i) tr.samples[i] = v;
      }
    }
    if (noise.electronic_std > 0.0) {
      const std::size_t end = std::min(base + per_scan, tr.samples.size());
      for (std::size_t i = base; i < end; ++i) tr.samples[i] += noise.electronic_std * gauss(rng);
    }
  }
  tr.truth = std::move(truth);
  return tr;
}

/// Synthesizes one burst: the cell response comes from propagating unit probe
/// and signal inputs through the medium.
inline HomodyneTrace synth_burst(const atomic::AtomicParams& params, const atomic::FieldSet& fields,
                                 const PulseSchedule& schedule, const ScanConfig& scan, const NoiseConfig& noise,
                                 std::uint64_t seed, const SynthOptions& opt = {}) {
  params.validate();
  const auto T = atomic::transfer_matrix(params, fields, opt.propagation_steps);
  return synth_burst_with_transfer(T, fields, schedule, scan, noise, seed, opt);
}

/// Transfer matrix of an empty beam path (no cell): probe passes unchanged and
/// the signal is not seen by the probe-frequency LO.
inline atomic::TransferMatrix no_cell_transfer() {
  return {Complex{1.0, 0.0}, Complex{0.0, 0.0}, Complex{0.0, 0.0}, Complex{1.0, 0.0}};
}

}  // namespace dlambda::synth

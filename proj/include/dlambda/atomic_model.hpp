#pragma once

// Semi-classical double-lambda medium: perturbative coherences, probe/signal
// polarizabilities with the phase-sensitive four-wave-mixing term, steady-state
// propagation through the cell and the phasor model of the double-lambda
// output.
//
// Units: rates in units of the excited-state decay (Gamma = 1 in the shipped
// presets), cell length normalized to 1.

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <string>

#include "dlambda/core.hpp"

namespace dlambda::atomic {

struct AtomicParams {
  double Gamma = 1.0;    // excited-state decay
  double gamma = 0.01;   // ground-state coherence decay
  double Delta1 = 0.0;   // one-photon detuning, lambda system 1
  double Delta2 = 0.0;   // one-photon detuning, lambda system 2
  double Delta = 0.0;    // Delta2 - Delta1
  double dip13 = 1.0;    // |p13|, normalized
  double dip23 = 1.0;    // |p23|, normalized
  double alpha_p = 0.0;  // probe optical depth
  double alpha_s = 0.0;  // signal optical depth
  double length = 1.0;
  double gamma31 = 1.0;  // propagation decay coefficient
  double mu13 = 1.0;     // propagation dipole coefficient

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(Errc::config, "AtomicParams: " + m); };
    if (!(Gamma > 0.0)) fail("Gamma must be > 0");
    if (!(gamma > 0.0)) fail("gamma must be > 0");
    if (!(alpha_p >= 0.0) || !(alpha_s >= 0.0)) fail("optical depths must be >= 0");
    if (!(length > 0.0)) fail("length must be > 0");
    if (Delta != Delta2 - Delta1) fail("Delta must equal Delta2 - Delta1");
    if (mu13 == 0.0) fail("mu13 must be nonzero");
  }
};

struct FieldSet {
  double Ep = 0.0, Es = 0.0, Ec1 = 0.0, Ec2 = 0.0;
  double phi_p = 0.0, phi_s = 0.0, phi_c1 = 0.0, phi_c2 = 0.0;

  /// Relative phase between the generated FWM light and the probe.
  double dphi_fwm() const { return phi_s - phi_p + phi_c2 - phi_c1; }

  Complex probe() const { return std::polar(Ep, phi_p); }
  Complex signal() const { return std::polar(Es, phi_s); }

  void validate() const {
    if (!(Ep >= 0.0) || !(Es >= 0.0) || !(Ec1 >= 0.0) || !(Ec2 >= 0.0))
      throw Error(Errc::config, "FieldSet: amplitudes must be >= 0");
  }
};

struct CoherencePair {
  Complex rho13;
  Complex rho12;
};

struct PhasorDecomposition {
  double E_E = 0.0;  // probe-only contribution
  double E_F = 0.0;  // FWM contribution
  double dphi_fwm = 0.0;
};

struct DlInterference {
  double dphi_dl = 0.0;
  double amplitude_normalized = 0.0;
  bool degenerate = false;
};

struct Polarization {
  Complex probe;
  Complex signal;
};

/// Coefficients of the output polarizability: P = linear * E_self + fwm * E_other * e^{i phase}.
struct PolarizationCoefficients {
  Complex linear;
  Complex fwm;
};

namespace detail {

inline Complex one_photon_denominator(const AtomicParams& p) {
  const Complex a{p.Gamma, 2.0 * p.Delta2};
  if (a == Complex{0.0, 0.0}) throw Error(Errc::singular_parameter, "2i*Delta2 + Gamma == 0");
  return a;
}

inline Complex offset_denominator(const AtomicParams& p) {
  const Complex b{p.Gamma, 2.0 * p.Delta};
  if (b == Complex{0.0, 0.0}) throw Error(Errc::singular_parameter, "2i*Delta + Gamma == 0");
  return b;
}

inline void require_gamma(const AtomicParams& p) {
  if (p.gamma == 0.0) throw Error(Errc::singular_parameter, "gamma == 0");
}

}  // namespace detail

/// Perturbative steady-state coherences for a weak field (rho13) and the
/// ground-state coherence it builds with a strong field (rho12). Only
/// meaningful for |weak| << |strong|; not enforced.
inline CoherencePair steady_state_coherences(const AtomicParams& params, Complex weak, Complex strong) {
  detail::require_gamma(params);
  const Complex a = detail::one_photon_denominator(params);
  const Complex I{0.0, 1.0};
  const double strong2 = std::norm(strong);
  CoherencePair out;
  out.rho13 = I * weak / a - weak * strong2 / (params.gamma * a * a);
  out.rho12 = I * weak * std::conj(strong) / (params.gamma * a * a);
  return out;
}

inline PolarizationCoefficients polarization_coefficients(const AtomicParams& params, const FieldSet& f) {
  detail::require_gamma(params);
  const Complex a = detail::one_photon_denominator(params);
  const Complex b = detail::offset_denominator(params);
  const Complex I{0.0, 1.0};
  const double d23sq = params.dip23 * params.dip23;
  const double controls = f.Ec1 * f.Ec1 + f.Ec2 * f.Ec2;
  PolarizationCoefficients c;
  c.linear = I * params.dip13 / a + params.dip13 * d23sq * controls / (params.gamma * b * b);
  c.fwm = params.dip13 * d23sq * f.Ec1 * f.Ec2 / (params.gamma * b * b);
  return c;
}

/// Output polarizabilities at the probe and signal frequencies. The signal
/// FWM term carries the conjugate relative phase, -dphi_fwm.
inline Polarization polarizabilities(const AtomicParams& params, const FieldSet& fields) {
  const auto c = polarization_coefficients(params, fields);
  const double dphi = fields.dphi_fwm();
  const Complex phase_p = std::polar(1.0, fields.phi_p);
  const Complex phase_s = std::polar(1.0, fields.phi_s);
  Polarization P;
  P.probe = phase_p * (c.linear * fields.Ep + c.fwm * fields.Es * std::polar(1.0, dphi));
  P.signal = phase_s * (c.linear * fields.Es + c.fwm * fields.Ep * std::polar(1.0, -dphi));
  return P;
}

inline constexpr int kDefaultPropagationSteps = 1000;

namespace detail {

// Complex-field form of the polarizabilities; linear in (probe, signal).
struct LinearDrive {
  Complex kp_lin, kp_fwm, ks_lin, ks_fwm;

  std::array<Complex, 2> operator()(const std::array<Complex, 2>& e) const {
    return {kp_lin * e[0] + kp_fwm * e[1], ks_lin * e[1] + ks_fwm * e[0]};
  }
};

inline LinearDrive make_drive(const AtomicParams& params, const FieldSet& controls) {
  const auto c = polarization_coefficients(params, controls);
  const Complex I{0.0, 1.0};
  const double scale = params.gamma31 / (2.0 * params.length * params.mu13);
  const Complex control_phase = std::polar(1.0, controls.phi_c2 - controls.phi_c1);
  const Complex kp = I * params.alpha_p * scale;
  const Complex ks = I * params.alpha_s * scale;
  return {kp * c.linear, kp * c.fwm * control_phase, ks * c.linear, ks * c.fwm * std::conj(control_phase)};
}

}  // namespace detail

/// Midpoint integration of the steady-state propagation equations for complex
/// probe/signal envelopes. Control fields are not depleted.
inline std::array<Complex, 2> propagate_complex(const AtomicParams& params, const FieldSet& controls,
                                                std::array<Complex, 2> e, int steps = kDefaultPropagationSteps) {
  if (steps < 1) throw Error(Errc::config, "propagate: steps must be >= 1");
  const auto drive = detail::make_drive(params, controls);
  const double h = params.length / steps;
  for (int k = 0; k < steps; ++k) {
    const auto k1 = drive(e);
    const std::array<Complex, 2> mid{e[0] + 0.5 * h * k1[0], e[1] + 0.5 * h * k1[1]};
    const auto k2 = drive(mid);
    e[0] += h * k2[0];
    e[1] += h * k2[1];
    if (!std::isfinite(e[0].real()) || !std::isfinite(e[0].imag()) || !std::isfinite(e[1].real()) ||
        !std::isfinite(e[1].imag()))
      throw Error(Errc::divergence, "non-finite field at z = " + std::to_string((k + 1) * h));
  }
  return e;
}

/// Propagates the probe and signal through the cell; control fields pass
/// through unchanged. Output phases are unwrapped continuously along z.
inline FieldSet propagate_fields(const AtomicParams& params, const FieldSet& input,
                                 int steps = kDefaultPropagationSteps) {
  if (steps < 1) throw Error(Errc::config, "propagate: steps must be >= 1");
  params.validate();
  if (params.alpha_p == 0.0 && params.alpha_s == 0.0) return input;

  const auto drive = detail::make_drive(params, input);
  const double h = params.length / steps;
  std::array<Complex, 2> e{input.probe(), input.signal()};
  std::array<double, 2> phase{input.phi_p, input.phi_s};
  for (int k = 0; k < steps; ++k) {
    const auto k1 = drive(e);
    const std::array<Complex, 2> mid{e[0] + 0.5 * h * k1[0], e[1] + 0.5 * h * k1[1]};
    const auto k2 = drive(mid);
    const std::array<Complex, 2> next{e[0] + h * k2[0], e[1] + h * k2[1]};
    for (int i = 0; i < 2; ++i) {
      if (!std::isfinite(next[i].real()) || !std::isfinite(next[i].imag()))
        throw Error(Errc::divergence, "non-finite field at z = " + std::to_string((k + 1) * h));
      if (e[i] != Complex{0.0, 0.0} && next[i] != Complex{0.0, 0.0})
        phase[i] += std::arg(next[i] / e[i]);
      else if (next[i] != Complex{0.0, 0.0})
        phase[i] = std::arg(next[i]);
    }
    e = next;
  }
  FieldSet out = input;
  out.Ep = std::abs(e[0]);
  out.Es = std::abs(e[1]);
  out.phi_p = phase[0];
  out.phi_s = phase[1];
  return out;
}

/// Linear response of the cell at the probe/signal frequencies: column j is the
/// output for unit input in mode j (0 = probe, 1 = signal).
struct TransferMatrix {
  Complex pp, ps, sp, ss;
};

inline TransferMatrix transfer_matrix(const AtomicParams& params, const FieldSet& controls,
                                      int steps = kDefaultPropagationSteps) {
  const auto col_p = propagate_complex(params, controls, {Complex{1.0, 0.0}, Complex{0.0, 0.0}}, steps);
  const auto col_s = propagate_complex(params, controls, {Complex{0.0, 0.0}, Complex{1.0, 0.0}}, steps);
  return {col_p[0], col_s[0], col_p[1], col_s[1]};
}

/// Intensity transmission of a probe pulse (signal off) with the given controls.
inline double probe_transmission(const AtomicParams& params, const FieldSet& controls,
                                 int steps = kDefaultPropagationSteps) {
  const auto out = propagate_complex(params, controls, {Complex{1.0, 0.0}, Complex{0.0, 0.0}}, steps);
  return std::norm(out[0]);
}

/// Phase of a complex probe amplitude in (-pi, pi].
inline double output_phase(Complex field) {
  if (field == Complex{0.0, 0.0}) throw Error(Errc::undefined_phase, "zero field has no phase");
  return wrap_phase(std::atan2(field.imag(), field.real()));
}

/// Double-lambda output as the phasor sum E_E + E_F e^{i dphi_fwm}, normalized
/// to the probe-only amplitude. The printed arctangent form of this phase is
/// the reciprocal of the phasor tangent (it gives pi/2 at E_F = 0); the phasor
/// sum reproduces the closed-form amplitude exactly and is used instead.
inline DlInterference dl_interference(const PhasorDecomposition& ph) {
  if (!(ph.E_E > 0.0)) throw Error(Errc::normalization, "E_E must be > 0");
  const Complex sum = ph.E_E + ph.E_F * std::polar(1.0, ph.dphi_fwm);
  DlInterference out;
  out.amplitude_normalized = std::abs(sum) / ph.E_E;
  if (out.amplitude_normalized < 1e-12) {
    out.degenerate = true;
    out.dphi_dl = 0.0;
    return out;
  }
  out.dphi_dl = wrap_phase(std::atan2(sum.imag(), sum.real()));
  return out;
}

// ---------------------------------------------------------------------------
// Presets and calibration

struct MediumPreset {
  std::string name;
  AtomicParams params;
  FieldSet controls;  // only Ec1, Ec2, phi_c1, phi_c2 are used
};

struct CalibrationTargets {
  double control1_only = 0.80;
  double both_controls = 0.50;
  double control_ratio = 1.0 / 3.0;  // Ec2 / Ec1
  double ec1_lo = 0.01, ec1_hi = 0.075;
  int steps = kDefaultPropagationSteps;
};

namespace detail {

inline double bisect(const std::function<double(double)>& f, double lo, double hi, int iters = 200) {
  double flo = f(lo);
  const double fhi = f(hi);
  if (flo * fhi > 0.0) throw Error(Errc::config, "calibration bracket does not contain a root");
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-14 * std::abs(mid)) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Optical depth (alpha_p = alpha_s) that gives the requested probe
/// transmission with control 1 only.
inline double fit_optical_depth(AtomicParams params, FieldSet controls, double target,
                                int steps = kDefaultPropagationSteps) {
  controls.Ec2 = 0.0;
  auto f = [&](double od) {
    params.alpha_p = params.alpha_s = od;
    return probe_transmission(params, controls, steps) - target;
  };
  double hi = 1.0;
  while (f(hi) > 0.0) {
    hi *= 2.0;
    if (hi > 1e9) throw Error(Errc::config, "no optical depth reaches the target transmission");
  }
  return detail::bisect(f, 0.0, hi);
}

/// Fits control-1 strength (control 2 at a fixed ratio) and optical depth so the
/// probe transmission matches both targets.
inline MediumPreset calibrate(AtomicParams params, FieldSet controls, const CalibrationTargets& t = {}) {
  auto both = [&](double ec1) {
    FieldSet c = controls;
    c.Ec1 = ec1;
    c.Ec2 = 0.0;
    const double od = fit_optical_depth(params, c, t.control1_only, t.steps);
    AtomicParams p = params;
    p.alpha_p = p.alpha_s = od;
    c.Ec2 = t.control_ratio * ec1;
    return std::pair{od, probe_transmission(p, c, t.steps)};
  };
  const double ec1 = detail::bisect([&](double e) { return both(e).second - t.both_controls; }, t.ec1_lo, t.ec1_hi,
                                    80);
  const auto [od, _] = both(ec1);
  MediumPreset out;
  out.params = params;
  out.params.alpha_p = out.params.alpha_s = od;
  out.controls = controls;
  out.controls.Ec1 = ec1;
  out.controls.Ec2 = t.control_ratio * ec1;
  return out;
}

/// Base parameters of the shipped preset before calibration: detunings of
/// -400 MHz and +80 MHz offset expressed in units of the D1 linewidth and
/// rounded to exactly representable values.
inline AtomicParams paper_base_params() {
  AtomicParams p;
  p.Gamma = 1.0;
  p.gamma = 0.01;
  p.Delta1 = -69.5;
  p.Delta2 = -55.5;
  p.Delta = p.Delta2 - p.Delta1;
  p.dip13 = 1.0;
  p.dip23 = 1.0;
  p.length = 1.0;
  p.gamma31 = p.Gamma;
  p.mu13 = p.dip13;
  return p;
}

}  // namespace dlambda::atomic

#pragma once

// Shared scalar types, phase helpers and the error type used across the
// double-lambda simulation and tomography library.

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dlambda {

using Complex = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum class Errc {
  singular_parameter,
  divergence,
  undefined_phase,
  normalization,
  config,
  insufficient_data,
  schedule,
  calibration,
  invalid_state,
  cutoff_too_small,
  parse,
  io,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::singular_parameter: return "singular-parameter";
    case Errc::divergence: return "divergence";
    case Errc::undefined_phase: return "undefined-phase";
    case Errc::normalization: return "normalization";
    case Errc::config: return "config";
    case Errc::insufficient_data: return "insufficient-data";
    case Errc::schedule: return "schedule";
    case Errc::calibration: return "calibration";
    case Errc::invalid_state: return "invalid-state";
    case Errc::cutoff_too_small: return "cutoff-too-small";
    case Errc::parse: return "parse";
    case Errc::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Wraps an angle into (-pi, pi].
inline double wrap_phase(double x) {
  double r = std::remainder(x, kTwoPi);  // [-pi, pi]
  if (r <= -kPi) r += kTwoPi;
  return r;
}

/// Wraps an angle into [0, 2pi).
inline double wrap_positive(double x) {
  double r = std::fmod(x, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r -= kTwoPi;
  return r;
}

}  // namespace dlambda

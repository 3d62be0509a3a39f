#pragma once

// Fock-basis maximum-likelihood state reconstruction from quadrature samples
// and the state metrics reported per phase bin: fidelity, purity, mean photon
// number, coherent-state overlap, Wigner function and bootstrap errors.
//
// Conventions (shared with trace synthesis): X_theta = a e^{-i theta} +
// a^dag e^{i theta}, vacuum variance 1. The rotated quadrature eigenstate has
// Fock components <n|x_theta> = psi_n(x) e^{i n theta}, so the POVM density is
// Pi(theta, x)_{mn} = psi_m(x) psi_n(x) e^{i (m - n) theta}. Phase space uses
// x = X_0, p = X_{pi/2}; a coherent state |alpha> peaks at (2 Re alpha, 2 Im alpha).

#include <Eigen/Dense>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "dlambda/core.hpp"
#include "dlambda/phase_extract.hpp"

namespace dlambda::tomo {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

struct DensityMatrix {
  int cutoff = 0;
  Matrix elems;

  DensityMatrix() = default;
  explicit DensityMatrix(Matrix m) : cutoff(static_cast<int>(m.rows())), elems(std::move(m)) {}

  static DensityMatrix maximally_mixed(int n) {
    return DensityMatrix(Matrix::Identity(n, n) / static_cast<double>(n));
  }

  static DensityMatrix fock(int n, int cutoff) {
    Matrix m = Matrix::Zero(cutoff, cutoff);
    m(n, n) = 1.0;
    return DensityMatrix(std::move(m));
  }

  static DensityMatrix pure(const Vector& psi) {
    const Vector v = psi / psi.norm();
    return DensityMatrix(v * v.adjoint());
  }

  /// Throws invalid_state unless Hermitian, unit-trace and PSD within tolerances.
  void validate(double herm_tol = 1e-12, double trace_tol = 1e-10, double eig_tol = 1e-10) const {
    if (elems.rows() != cutoff || elems.cols() != cutoff || cutoff < 1)
      throw Error(Errc::invalid_state, "density matrix shape does not match cutoff");
    if ((elems - elems.adjoint()).cwiseAbs().maxCoeff() > herm_tol)
      throw Error(Errc::invalid_state, "density matrix is not Hermitian");
    if (std::abs(elems.trace() - Complex{1.0, 0.0}) > trace_tol)
      throw Error(Errc::invalid_state, "density matrix trace != 1");
    Eigen::SelfAdjointEigenSolver<Matrix> es(elems, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -eig_tol)
      throw Error(Errc::invalid_state, "density matrix has negative eigenvalues");
  }
};

struct QuadratureDataset {
  std::vector<extract::QuadraturePoint> pairs;
  std::optional<int> source_bin;
  std::optional<synth::PulseCase> source_case;

  /// Largest angular gap in the sample; coverage of at least pi is expected.
  double theta_span() const {
    if (pairs.empty()) return 0.0;
    std::vector<double> t;
    t.reserve(pairs.size());
    for (const auto& p : pairs) t.push_back(wrap_positive(p.theta));
    std::sort(t.begin(), t.end());
    double gap = t.front() + kTwoPi - t.back();
    for (std::size_t i = 1; i < t.size(); ++i) gap = std::max(gap, t[i] - t[i - 1]);
    return kTwoPi - gap;
  }
};

/// Builds a dataset from the non-degenerate records of one case.
inline QuadratureDataset dataset_from_records(std::span<const extract::QuadratureRecord> records) {
  QuadratureDataset d;
  for (const auto& r : records) {
    if (r.degenerate) continue;
    d.pairs.insert(d.pairs.end(), r.points.begin(), r.points.end());
  }
  if (!records.empty()) d.source_case = records.front().pulse_case;
  return d;
}

struct WignerGrid {
  std::vector<double> x_axis;
  std::vector<double> p_axis;
  Eigen::MatrixXd values;  // values(i, j) = W(x_axis[i], p_axis[j])

  double riemann_sum() const {
    if (x_axis.size() < 2 || p_axis.size() < 2) return 0.0;
    const double dx = x_axis[1] - x_axis[0];
    const double dp = p_axis[1] - p_axis[0];
    return values.sum() * dx * dp;
  }
};

struct Estimate {
  double value = 0.0;
  double err = 0.0;
};

struct ReconstructionReport {
  DensityMatrix rho;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  std::size_t n_points = 0;
  std::size_t underflow_points = 0;
  double min_accepted_step = 0.0;  // smallest log-likelihood increase among accepted iterations
  Estimate fidelity_vs_input{};
  Estimate coherent_overlap{};
  Estimate purity{};
  Estimate mean_photon{};
  std::array<double, 2> wigner_max_location{0.0, 0.0};
};

// ---------------------------------------------------------------------------
// Fock-basis building blocks

/// psi_n(x) = (2 pi)^{-1/4} (2^n n!)^{-1/2} H_n(x / sqrt 2) e^{-x^2/4}, by the
/// three-term recurrence sqrt(n+1) psi_{n+1} = x psi_n - sqrt(n) psi_{n-1}.
inline double fock_wavefunction(int n, double x) {
  const double psi0 = std::pow(kTwoPi, -0.25) * std::exp(-0.25 * x * x);
  if (n == 0) return psi0;
  double prev = psi0;
  double cur = x * psi0;
  for (int k = 1; k < n; ++k) {
    const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) / std::sqrt(k + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

inline void fock_wavefunctions(int cutoff, double x, std::span<double> out) {
  out[0] = std::pow(kTwoPi, -0.25) * std::exp(-0.25 * x * x);
  if (cutoff > 1) out[1] = x * out[0];
  for (int k = 1; k + 1 < cutoff; ++k)
    out[static_cast<std::size_t>(k + 1)] =
        (x * out[static_cast<std::size_t>(k)] - std::sqrt(static_cast<double>(k)) * out[static_cast<std::size_t>(k - 1)]) /
        std::sqrt(k + 1.0);
}

/// Rotated quadrature eigenstate truncated to the cutoff.
inline Vector quadrature_state(double theta, double x, int cutoff) {
  std::vector<double> psi(static_cast<std::size_t>(cutoff));
  fock_wavefunctions(cutoff, x, psi);
  Vector v(cutoff);
  for (int n = 0; n < cutoff; ++n) v(n) = psi[static_cast<std::size_t>(n)] * std::polar(1.0, n * theta);
  return v;
}

inline Matrix povm_element(double theta, double x, int cutoff) {
  if (cutoff < 1) throw Error(Errc::config, "cutoff must be >= 1");
  const Vector v = quadrature_state(theta, x, cutoff);
  return v * v.adjoint();
}

/// U(delta) rho U(delta)^dag with U = diag(e^{i n delta}); the state seen by
/// data whose angles are all shifted by +delta.
inline DensityMatrix rotate(const DensityMatrix& rho, double delta) {
  Matrix out = rho.elems;
  for (int m = 0; m < rho.cutoff; ++m)
    for (int n = 0; n < rho.cutoff; ++n) out(m, n) *= std::polar(1.0, (m - n) * delta);
  return DensityMatrix(std::move(out));
}

// ---------------------------------------------------------------------------
// Metrics

inline double purity(const DensityMatrix& rho) { return rho.elems.cwiseAbs2().sum(); }

inline double mean_photon(const DensityMatrix& rho) {
  double s = 0.0;
  for (int n = 1; n < rho.cutoff; ++n) s += n * rho.elems(n, n).real();
  return s;
}

/// Tr(rho a).
inline Complex mean_amplitude(const DensityMatrix& rho) {
  Complex s{0.0, 0.0};
  for (int n = 1; n < rho.cutoff; ++n) s += std::sqrt(static_cast<double>(n)) * rho.elems(n, n - 1);
  return s;
}

namespace detail {

inline Matrix psd_sqrt(const Matrix& m, double eig_tol) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.adjoint()));
  if (es.eigenvalues().minCoeff() < -eig_tol) throw Error(Errc::invalid_state, "state is not positive semidefinite");
  const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().adjoint();
}

/// Truncated coherent-state vector and the probability lost to truncation.
inline std::pair<Vector, double> coherent_vector(Complex alpha, int cutoff) {
  Vector c(cutoff);
  c(0) = std::exp(-0.5 * std::norm(alpha));
  for (int n = 1; n < cutoff; ++n) c(n) = c(n - 1) * alpha / std::sqrt(static_cast<double>(n));
  const double kept = c.squaredNorm();
  return {c / std::sqrt(kept), 1.0 - kept};
}

}  // namespace detail

/// Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2.
inline double fidelity(const DensityMatrix& a, const DensityMatrix& b, double eig_tol = 1e-8) {
  if (a.cutoff != b.cutoff) throw Error(Errc::invalid_state, "fidelity: cutoffs differ");
  const Matrix sa = detail::psd_sqrt(a.elems, eig_tol);
  (void)detail::psd_sqrt(b.elems, eig_tol);
  const Matrix m = sa * b.elems * sa;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
  const double tr = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return std::clamp(tr * tr, 0.0, 1.0);
}

inline DensityMatrix coherent_dm(Complex alpha, int cutoff, double max_loss = 1e-6) {
  if (cutoff < 1) throw Error(Errc::config, "cutoff must be >= 1");
  auto [v, loss] = detail::coherent_vector(alpha, cutoff);
  if (loss > max_loss) throw Error(Errc::cutoff_too_small, "coherent state truncation loss " + std::to_string(loss));
  return DensityMatrix(v * v.adjoint());
}

/// <beta|rho|beta>, the fidelity with a pure (truncated, renormalized) coherent state.
inline double coherent_fidelity(const DensityMatrix& rho, Complex beta) {
  const auto [v, loss] = detail::coherent_vector(beta, rho.cutoff);
  (void)loss;
  return std::clamp((v.adjoint() * rho.elems * v)(0, 0).real(), 0.0, 1.0);
}

/// Fidelity with the coherent state of equal mean photon number; its phase is
/// that of Tr(rho a), or the best of 64 phases when Tr(rho a) vanishes.
inline double coherent_overlap(const DensityMatrix& rho) {
  const double r = std::sqrt(std::max(mean_photon(rho), 0.0));
  const Complex a = mean_amplitude(rho);
  if (std::abs(a) > 1e-9) return coherent_fidelity(rho, std::polar(r, std::arg(a)));
  double best = 0.0;
  for (int k = 0; k < 64; ++k) best = std::max(best, coherent_fidelity(rho, std::polar(r, kTwoPi * k / 64.0)));
  return best;
}

// ---------------------------------------------------------------------------
// Wigner function

/// W(x, p) = sum_mn rho_mn W_{|m><n|}(x, p) with
/// W_{|m><n|} = (-1)^n / (2 pi) sqrt(n!/m!) (x - i p)^{m-n} L_n^{(m-n)}(r^2) e^{-r^2/2}, m >= n.
inline double wigner_point(const DensityMatrix& rho, double x, double p) {
  const int N = rho.cutoff;
  const double r2 = x * x + p * p;
  const Complex z{x, -p};
  double acc = 0.0;
  for (int n = 0; n < N; ++n) {
    const double sign = (n % 2 == 0) ? 1.0 : -1.0;
    acc += sign * rho.elems(n, n).real() * std::assoc_laguerre(static_cast<unsigned>(n), 0u, r2);
    Complex zp{1.0, 0.0};
    double fact_ratio = 1.0;  // n!/m!
    for (int m = n + 1; m < N; ++m) {
      zp *= z;
      fact_ratio /= static_cast<double>(m);
      const double lag = std::assoc_laguerre(static_cast<unsigned>(n), static_cast<unsigned>(m - n), r2);
      acc += 2.0 * sign * std::sqrt(fact_ratio) * lag * (rho.elems(m, n) * zp).real();
    }
  }
  return acc * std::exp(-0.5 * r2) / kTwoPi;
}

inline std::vector<double> uniform_axis(double lo, double hi, int n) {
  std::vector<double> a(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return a;
}

inline WignerGrid wigner(const DensityMatrix& rho, std::vector<double> x_axis, std::vector<double> p_axis) {
  WignerGrid g;
  g.x_axis = std::move(x_axis);
  g.p_axis = std::move(p_axis);
  g.values.resize(static_cast<Eigen::Index>(g.x_axis.size()), static_cast<Eigen::Index>(g.p_axis.size()));
  for (std::size_t i = 0; i < g.x_axis.size(); ++i)
    for (std::size_t j = 0; j < g.p_axis.size(); ++j)
      g.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = wigner_point(rho, g.x_axis[i], g.p_axis[j]);
  return g;
}

/// Grid argmax refined by golden-section line searches around it.
inline std::array<double, 2> wigner_max_location(const DensityMatrix& rho, const WignerGrid& g) {
  Eigen::Index bi = 0, bj = 0;
  g.values.maxCoeff(&bi, &bj);
  double x = g.x_axis[static_cast<std::size_t>(bi)];
  double p = g.p_axis[static_cast<std::size_t>(bj)];
  const double hx = g.x_axis.size() > 1 ? g.x_axis[1] - g.x_axis[0] : 0.1;
  const double hp = g.p_axis.size() > 1 ? g.p_axis[1] - g.p_axis[0] : 0.1;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  auto line = [&](auto f, double c, double h) {
    double a = c - h, b = c + h;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 40; ++it) {
      if (f1 > f2) {
        b = x2; x2 = x1; f2 = f1; x1 = b - gr * (b - a); f1 = f(x1);
      } else {
        a = x1; x1 = x2; f1 = f2; x2 = a + gr * (b - a); f2 = f(x2);
      }
    }
    return 0.5 * (a + b);
  };
  for (int round = 0; round < 4; ++round) {
    x = line([&](double t) { return wigner_point(rho, t, p); }, x, hx);
    p = line([&](double t) { return wigner_point(rho, x, t); }, p, hp);
  }
  return {x, p};
}

// ---------------------------------------------------------------------------
// Maximum likelihood

struct MleOptions {
  int max_iter = 2000;
  double tol = 1e-9;  // relative log-likelihood change
  double min_dilution = 1e-10;
};

struct MleResult {
  DensityMatrix rho;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  std::size_t underflow_points = 0;
  double min_accepted_step = 0.0;
};

namespace detail {

// With a_j = conj(<n|x_theta_j>) (rows of the measurement kernel), both
// p_j = a_j rho a_j^dag and R = sum_j w_j a_j^dag a_j are linear in the real
// pair products S_mn = Re(a_m conj a_n) and D_mn = -Im(a_m conj a_n), which
// are precomputed once so that an iteration costs two real products.
class PairKernel {
 public:
  PairKernel(std::span<const extract::QuadraturePoint> pairs, int cutoff)
      : N_(cutoff), G_(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(cutoff) * cutoff) {
    std::vector<double> psi(static_cast<std::size_t>(cutoff)), ar(psi.size()), ai(psi.size());
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      fock_wavefunctions(cutoff, pairs[j].x, psi);
      for (int n = 0; n < cutoff; ++n) {
        const auto k = static_cast<std::size_t>(n);
        ar[k] = psi[k] * std::cos(n * pairs[j].theta);
        ai[k] = -psi[k] * std::sin(n * pairs[j].theta);
      }
      const auto row = static_cast<Eigen::Index>(j);
      Eigen::Index col = 0;
      for (int m = 0; m < cutoff; ++m) {
        const auto a = static_cast<std::size_t>(m);
        G_(row, col++) = ar[a] * ar[a] + ai[a] * ai[a];
      }
      for (int m = 1; m < cutoff; ++m)
        for (int n = 0; n < m; ++n) {
          const auto a = static_cast<std::size_t>(m), b = static_cast<std::size_t>(n);
          G_(row, col++) = ar[a] * ar[b] + ai[a] * ai[b];
          G_(row, col++) = ar[a] * ai[b] - ai[a] * ar[b];
        }
    }
  }

  Eigen::VectorXd probabilities(const Matrix& rho) const {
    Eigen::VectorXd c(G_.cols());
    Eigen::Index col = 0;
    for (int m = 0; m < N_; ++m) c(col++) = rho(m, m).real();
    for (int m = 1; m < N_; ++m)
      for (int n = 0; n < m; ++n) {
        c(col++) = 2.0 * rho(m, n).real();
        c(col++) = 2.0 * rho(m, n).imag();
      }
    return G_ * c;
  }

  Matrix weighted_sum(const Eigen::VectorXd& w) const {
    const Eigen::VectorXd g = G_.transpose() * w;
    Matrix R(N_, N_);
    Eigen::Index col = 0;
    for (int m = 0; m < N_; ++m) R(m, m) = g(col++);
    for (int m = 1; m < N_; ++m)
      for (int n = 0; n < m; ++n) {
        R(m, n) = Complex{g(col), g(col + 1)};
        R(n, m) = std::conj(R(m, n));
        col += 2;
      }
    return R;
  }

 private:
  int N_;
  Eigen::MatrixXd G_;
};

inline constexpr double kUnderflow = 1e-300;

inline double log_likelihood(const Eigen::VectorXd& p) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) s += std::log(std::max(p(j), kUnderflow));
  return s;
}

inline Matrix normalized(const Matrix& m) {
  Matrix h = 0.5 * (m + m.adjoint());
  return h / h.trace().real();
}

}  // namespace detail

/// Iterative R rho R reconstruction from the maximally mixed state. An
/// iteration that would lower the likelihood is replaced by the diluted step
/// R -> (1 - eps) I + eps R with eps halved until the likelihood does not
/// decrease, so accepted iterations are monotone.
inline MleResult mle_fit(const QuadratureDataset& data, int cutoff, const MleOptions& opt = {}) {
  if (data.pairs.empty()) throw Error(Errc::insufficient_data, "empty quadrature dataset");
  if (cutoff < 1) throw Error(Errc::config, "cutoff must be >= 1");
  const detail::PairKernel K(data.pairs, cutoff);
  const auto J = static_cast<double>(data.pairs.size());
  const Matrix I = Matrix::Identity(cutoff, cutoff);

  MleResult res;
  Matrix rho = I / static_cast<double>(cutoff);
  Eigen::VectorXd p = K.probabilities(rho);
  double L = detail::log_likelihood(p);
  res.min_accepted_step = std::numeric_limits<double>::infinity();

  for (int it = 0; it < opt.max_iter; ++it) {
    Eigen::VectorXd w(p.size());
    std::size_t under = 0;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      if (p(j) > detail::kUnderflow) {
        w(j) = 1.0 / (p(j) * J);
      } else {  // underflowing datum: down-weighted to zero
        w(j) = 0.0;
        ++under;
      }
    }
    res.underflow_points = under;
    const Matrix R = K.weighted_sum(w);

    double eps = 1.0;
    Matrix next;
    Eigen::VectorXd pn;
    double Ln = -std::numeric_limits<double>::infinity();
    for (;;) {
      const Matrix Re = (1.0 - eps) * I + eps * R;
      next = detail::normalized(Re * rho * Re);
      pn = K.probabilities(next);
      Ln = detail::log_likelihood(pn);
      if (Ln >= L) break;
      eps *= 0.5;
      if (eps < opt.min_dilution) break;
    }
    res.iterations = it + 1;
    if (!(Ln >= L)) {  // no ascent direction left
      res.converged = true;
      break;
    }
    const double step = Ln - L;
    assert(step >= 0.0);
    res.min_accepted_step = std::min(res.min_accepted_step, step);
    rho = next;
    p = pn;
    const double prev = L;
    L = Ln;
    if (step <= opt.tol * std::abs(prev)) {
      res.converged = true;
      break;
    }
  }
  if (!std::isfinite(res.min_accepted_step)) res.min_accepted_step = 0.0;
  res.rho = DensityMatrix(rho);
  res.log_likelihood = L;
  return res;
}

struct ReportOptions {
  MleOptions mle{};
  bool locate_wigner_max = true;
  double wigner_half_width = 5.0;
  int wigner_points = 101;
};

/// Reconstruction plus the reference-free metrics (purity, mean photon,
/// coherent overlap, Wigner maximum). Errors and fidelity_vs_input are filled
/// by the caller.
inline ReconstructionReport mle_reconstruct(const QuadratureDataset& data, int cutoff, const ReportOptions& opt = {}) {
  const auto fit = mle_fit(data, cutoff, opt.mle);
  ReconstructionReport rep;
  rep.rho = fit.rho;
  rep.log_likelihood = fit.log_likelihood;
  rep.iterations = fit.iterations;
  rep.converged = fit.converged;
  rep.n_points = data.pairs.size();
  rep.underflow_points = fit.underflow_points;
  rep.min_accepted_step = fit.min_accepted_step;
  rep.purity.value = purity(rep.rho);
  rep.mean_photon.value = mean_photon(rep.rho);
  rep.coherent_overlap.value = coherent_overlap(rep.rho);
  if (opt.locate_wigner_max) {
    const auto axis = uniform_axis(-opt.wigner_half_width, opt.wigner_half_width, opt.wigner_points);
    const auto g = wigner(rep.rho, axis, axis);
    rep.wigner_max_location = wigner_max_location(rep.rho, g);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Bootstrap

using MetricSet = std::function<std::vector<double>(const DensityMatrix&)>;

struct BootstrapResult {
  std::vector<double> stddev;
  int used = 0;
  int failed = 0;
  bool insufficient = false;  // fewer than two usable resamples
};

/// Resamples pairs with replacement, re-runs the reconstruction and returns the
/// sample standard deviation of each metric. Non-converged resamples are
/// counted and excluded.
inline BootstrapResult bootstrap_errors(const QuadratureDataset& data, int cutoff, int resamples,
                                        const MetricSet& metrics, std::uint64_t seed, const MleOptions& mle = {}) {
  if (data.pairs.size() < 100) throw Error(Errc::insufficient_data, "bootstrap needs >= 100 pairs");
  if (resamples < 1) throw Error(Errc::config, "resamples must be >= 1");
  std::vector<std::vector<double>> values;
  BootstrapResult out;
  for (int r = 0; r < resamples; ++r) {
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(r + 1));
    std::uniform_int_distribution<std::size_t> pick(0, data.pairs.size() - 1);
    QuadratureDataset sample;
    sample.pairs.reserve(data.pairs.size());
    for (std::size_t j = 0; j < data.pairs.size(); ++j) sample.pairs.push_back(data.pairs[pick(rng)]);
    const auto fit = mle_fit(sample, cutoff, mle);
    if (!fit.converged) {
      ++out.failed;
      continue;
    }
    values.push_back(metrics(fit.rho));
  }
  out.used = static_cast<int>(values.size());
  const std::size_t m = values.empty() ? metrics(DensityMatrix::maximally_mixed(cutoff)).size() : values.front().size();
  out.stddev.assign(m, 0.0);
  if (values.size() < 2) {
    out.insufficient = true;
    return out;
  }
  for (std::size_t k = 0; k < m; ++k) {
    double mean = 0.0;
    for (const auto& v : values) mean += v[k];
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (const auto& v : values) ss += (v[k] - mean) * (v[k] - mean);
    out.stddev[k] = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace dlambda::tomo
